#include "volfuse/volume_ops.hpp"

#include <algorithm>
#include <cmath>

#include "volfuse/errors.hpp"

namespace volfuse {
namespace {

int axis_extent(const Dims3& dims, int axis) {
  switch (axis) {
    case 0: return dims.x;
    case 1: return dims.y;
    case 2: return dims.z;
    default: throw ConfigError("slice axis must be 0, 1, or 2");
  }
}

}  // namespace

std::vector<int> central_slice_indices(const Dims3& dims, int axis, int count) {
  if (count < 1) throw ConfigError("slice count must be positive");
  const int extent = axis_extent(dims, axis);
  std::vector<int> out;
  if (count >= extent) {
    for (int i = 0; i < extent; ++i) out.push_back(i);
    return out;
  }
  const int start = (extent - count) / 2;
  for (int i = 0; i < count; ++i) out.push_back(start + i);
  return out;
}

SliceImage extract_slice(const VolumeGrid& vol, int axis, int index) {
  const int extent = axis_extent(vol.dims, axis);
  if (index < 0 || index >= extent) {
    throw ShapeError("slice index " + std::to_string(index) +
                     " out of range for axis extent " + std::to_string(extent));
  }
  SliceImage img;
  const int X = vol.dims.x, Y = vol.dims.y, Z = vol.dims.z;
  if (axis == 2) {  // axial: rows = y, cols = x
    img.width = X;
    img.height = Y;
    img.pixels.resize(static_cast<std::size_t>(X) * Y);
    for (int y = 0; y < Y; ++y) {
      for (int x = 0; x < X; ++x) {
        img.pixels[static_cast<std::size_t>(y) * X + x] = vol.voxels[vol.index(x, y, index)];
      }
    }
  } else if (axis == 1) {  // coronal: rows = z, cols = x
    img.width = X;
    img.height = Z;
    img.pixels.resize(static_cast<std::size_t>(X) * Z);
    for (int z = 0; z < Z; ++z) {
      for (int x = 0; x < X; ++x) {
        img.pixels[static_cast<std::size_t>(z) * X + x] = vol.voxels[vol.index(x, index, z)];
      }
    }
  } else {  // sagittal: rows = z, cols = y
    img.width = Y;
    img.height = Z;
    img.pixels.resize(static_cast<std::size_t>(Y) * Z);
    for (int z = 0; z < Z; ++z) {
      for (int y = 0; y < Y; ++y) {
        img.pixels[static_cast<std::size_t>(z) * Y + y] = vol.voxels[vol.index(index, y, z)];
      }
    }
  }
  return img;
}

Tensor<float> slice_to_tensor(const SliceImage& slice) {
  Tensor<float> t({1, 1, static_cast<std::size_t>(slice.height),
                   static_cast<std::size_t>(slice.width)});
  std::copy(slice.pixels.begin(), slice.pixels.end(), t.ptr());
  return t;
}

VolumeGrid trilinear_resample(const VolumeGrid& src, const Dims3& out_dims) {
  if (out_dims.count() == 0) throw ShapeError("resample target has zero voxels");
  const int SX = src.dims.x, SY = src.dims.y, SZ = src.dims.z;
  VolumeGrid out = make_volume(
      out_dims, {src.spacing[0] * SX / out_dims.x, src.spacing[1] * SY / out_dims.y,
                 src.spacing[2] * SZ / out_dims.z});

  // Center-aligned mapping: src = (dst + 0.5) * (S / D) - 0.5, edge-clamped.
  auto src_coord = [](int dst, int S, int D) {
    return (dst + 0.5) * static_cast<double>(S) / D - 0.5;
  };
  for (int z = 0; z < out_dims.z; ++z) {
    const double fz = src_coord(z, SZ, out_dims.z);
    const int z0 = std::clamp(static_cast<int>(std::floor(fz)), 0, SZ - 1);
    const int z1 = std::min(z0 + 1, SZ - 1);
    const double wz = std::clamp(fz - z0, 0.0, 1.0);
    for (int y = 0; y < out_dims.y; ++y) {
      const double fy = src_coord(y, SY, out_dims.y);
      const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, SY - 1);
      const int y1 = std::min(y0 + 1, SY - 1);
      const double wy = std::clamp(fy - y0, 0.0, 1.0);
      for (int x = 0; x < out_dims.x; ++x) {
        const double fx = src_coord(x, SX, out_dims.x);
        const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, SX - 1);
        const int x1 = std::min(x0 + 1, SX - 1);
        const double wx = std::clamp(fx - x0, 0.0, 1.0);

        auto v = [&](int xi, int yi, int zi) {
          return static_cast<double>(src.voxels[src.index(xi, yi, zi)]);
        };
        const double c00 = v(x0, y0, z0) * (1 - wx) + v(x1, y0, z0) * wx;
        const double c10 = v(x0, y1, z0) * (1 - wx) + v(x1, y1, z0) * wx;
        const double c01 = v(x0, y0, z1) * (1 - wx) + v(x1, y0, z1) * wx;
        const double c11 = v(x0, y1, z1) * (1 - wx) + v(x1, y1, z1) * wx;
        const double c0 = c00 * (1 - wy) + c10 * wy;
        const double c1 = c01 * (1 - wy) + c11 * wy;
        out.voxels[out.index(x, y, z)] = static_cast<float>(c0 * (1 - wz) + c1 * wz);
      }
    }
  }
  return out;
}

int axis_from_plane_name(const std::string& name) {
  if (name == "sagittal") return 0;
  if (name == "coronal") return 1;
  if (name == "axial") return 2;
  throw ConfigError("unknown plane '" + name + "' (expected sagittal, coronal, or axial)");
}

std::string plane_name_from_axis(int axis) {
  switch (axis) {
    case 0: return "sagittal";
    case 1: return "coronal";
    case 2: return "axial";
    default: throw ConfigError("slice axis must be 0, 1, or 2");
  }
}

}  // namespace volfuse
