// GradCAM for the fusion classifier: class-discriminative saliency volumes
// from one encoder branch (or the average over branches), region statistics
// against ground-truth masks, and anatomical overlay rendering.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "volfuse/core_types.hpp"
#include "volfuse/network.hpp"
#include "volfuse/phantom.hpp"

namespace volfuse {

// Pseudo-branch name selecting the voxelwise mean of every encoder's
// normalized map (renormalized afterwards).
inline constexpr const char* kMeanBranch = "mean";

struct SaliencyVolume {
  VolumeGrid values;          // in [0,1], on the grid of the explained input
  int target_class = 0;
  std::string target_branch;  // modality name, or "mean"
  std::string source_layer;   // activation maps the weights were applied to
  bool degenerate = false;    // raw map was identically zero
};

// GradCAM on an eval-mode forward pass: channel weights are the spatial
// means of d logit[target_class] / d A_k over the chosen branch's last-block
// activation maps A, the raw map is ReLU(sum_k alpha_k A_k), trilinearly
// resampled to the input grid and min-max normalized (an all-zero raw map
// stays all-zero and is flagged degenerate).
//
// The batch carries a single sample shaped [1, C, Z, Y, X]; `spacing` is the
// voxel spacing of the explained input. Parameters must be finite.
SaliencyVolume gradcam_from_batch(const ModelConfig& config,
                                  const NetworkParameters<float>& params,
                                  const Tensor<float>& batch,
                                  const std::array<double, 3>& spacing, int target_class,
                                  const std::string& target_branch);

// Convenience wrapper assembling the batch from an aligned modality stack in
// the order `config.modalities` dictates.
SaliencyVolume gradcam(const ModelConfig& config, const NetworkParameters<float>& params,
                       const ModalityStack& stack, int target_class,
                       const std::string& target_branch = "t1");

struct RegionStat {
  double mean = 0.0;          // 0 when the region is empty
  std::int64_t voxels = 0;
};

struct RegionSaliencyStats {
  RegionStat ventricle;
  RegionStat cortex;
  RegionStat brain;
  RegionStat outside_brain;   // complement of the brain mask
};

// Arithmetic mean of the saliency over each mask region. Grids must match.
RegionSaliencyStats region_saliency_stats(const SaliencyVolume& saliency,
                                          const GroundTruthMasks& masks);

// Renders one plane of the anatomy in grayscale (per-slice min-max) with the
// saliency alpha-blended on top using a hot colormap (black→red→yellow→white)
// and alpha = 0.5 × saliency, so zero saliency leaves pure grayscale pixels.
// `axis` follows the volume_ops convention (0 sagittal, 1 coronal, 2 axial).
void export_overlay(const VolumeGrid& anatomy, const SaliencyVolume& saliency, int axis,
                    int index, const std::filesystem::path& png_file);

// Persists the saliency values as float32 NIfTI on the input's grid.
void save_saliency_nifti(const SaliencyVolume& saliency, const std::filesystem::path& file);

}  // namespace volfuse
