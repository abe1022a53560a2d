// Geometric helpers shared by the slice protocols, saliency, and rendering:
// plane extraction and trilinear resampling.
#pragma once

#include <string>
#include <vector>

#include "volfuse/core_types.hpp"
#include "volfuse/tensor.hpp"

namespace volfuse {

// Axis convention: 0 = sagittal (fixed x), 1 = coronal (fixed y),
// 2 = axial (fixed z).

// "sagittal" / "coronal" / "axial" → the axis convention above.
int axis_from_plane_name(const std::string& name);
std::string plane_name_from_axis(int axis);

// A `count`-slice band centered on the volume's mid-plane, ascending. When
// the axis has fewer than `count` slices, every index is returned.
std::vector<int> central_slice_indices(const Dims3& dims, int axis, int count);

// Row-major 2D image, width fastest.
struct SliceImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

SliceImage extract_slice(const VolumeGrid& vol, int axis, int index);

// Wraps a slice as a single-channel, singleton-Z model input [1, 1, H, W].
Tensor<float> slice_to_tensor(const SliceImage& slice);

// Center-aligned trilinear interpolation onto `out_dims`; output spacing is
// scaled so the physical extent is preserved.
VolumeGrid trilinear_resample(const VolumeGrid& src, const Dims3& out_dims);

}  // namespace volfuse
