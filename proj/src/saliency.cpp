#include "volfuse/saliency.hpp"

#include <algorithm>
#include <cmath>

#include "volfuse/errors.hpp"
#include "volfuse/nifti.hpp"
#include "volfuse/png_io.hpp"
#include "volfuse/volume_ops.hpp"

namespace volfuse {
namespace {

// Raw (un-normalized) GradCAM for one branch, resampled onto the input grid.
// Returns all zeros when the ReLU kills every channel contribution.
VolumeGrid raw_branch_map(const FusionNetwork<float>& net, const ForwardTrace<float>& trace,
                          const NetworkParameters<float>& params, int target_class,
                          int branch, const Dims3& input_dims,
                          const std::array<double, 3>& spacing) {
  const Tensor<float>& acts = trace.branches[branch].relu3;  // [1, K, z', y', x']
  const Tensor<float> grads =
      net.branch_activation_gradient(trace, params, target_class, branch);

  const std::size_t channels = acts.dim(1);
  const std::size_t spatial = acts.dim(2) * acts.dim(3) * acts.dim(4);

  // alpha_k = spatial mean of the gradient over channel k.
  std::vector<double> alpha(channels, 0.0);
  for (std::size_t k = 0; k < channels; ++k) {
    double sum = 0.0;
    const float* g = grads.ptr() + k * spatial;
    for (std::size_t s = 0; s < spatial; ++s) sum += g[s];
    alpha[k] = sum / static_cast<double>(spatial);
  }

  const Dims3 coarse{static_cast<int>(acts.dim(4)), static_cast<int>(acts.dim(3)),
                     static_cast<int>(acts.dim(2))};
  // Spacing scaled so the coarse grid spans the same physical extent.
  VolumeGrid cam = make_volume(
      coarse, {spacing[0] * input_dims.x / coarse.x, spacing[1] * input_dims.y / coarse.y,
               spacing[2] * input_dims.z / coarse.z});
  for (std::size_t s = 0; s < spatial; ++s) {
    double v = 0.0;
    for (std::size_t k = 0; k < channels; ++k) {
      v += alpha[k] * acts.ptr()[k * spatial + s];
    }
    cam.voxels[s] = static_cast<float>(std::max(v, 0.0));  // tensor and grid share x-fastest order
  }
  return trilinear_resample(cam, input_dims);
}

// In-place min-max to [0,1]. All-zero input stays untouched; a constant
// positive map becomes all ones (its max must normalize to 1).
bool normalize_map(VolumeGrid& map) {
  float lo = map.voxels[0], hi = map.voxels[0];
  for (float v : map.voxels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= 0.0f) return false;  // degenerate
  if (hi == lo) {
    std::fill(map.voxels.begin(), map.voxels.end(), 1.0f);
    return true;
  }
  const float scale = 1.0f / (hi - lo);
  for (float& v : map.voxels) v = (v - lo) * scale;
  return true;
}

RegionStat stat_where(const VolumeGrid& saliency, const VolumeGrid& mask, bool inside) {
  RegionStat st;
  double sum = 0.0;
  for (std::size_t i = 0; i < saliency.voxels.size(); ++i) {
    if ((mask.voxels[i] > 0.5f) == inside) {
      sum += saliency.voxels[i];
      ++st.voxels;
    }
  }
  if (st.voxels > 0) st.mean = sum / static_cast<double>(st.voxels);
  return st;
}

}  // namespace

SaliencyVolume gradcam_from_batch(const ModelConfig& config,
                                  const NetworkParameters<float>& params,
                                  const Tensor<float>& batch,
                                  const std::array<double, 3>& spacing, int target_class,
                                  const std::string& target_branch) {
  validate(config);
  if (!all_finite(params)) {
    throw Error("parameters contain non-finite values; refusing to explain them");
  }
  if (target_class < 0 || target_class >= config.n_classes) {
    throw ConfigError("target class out of range");
  }
  if (batch.shape.size() != 5 || batch.dim(0) != 1) {
    throw ShapeError("saliency expects a single sample shaped [1, C, Z, Y, X]");
  }

  std::vector<int> branches;
  if (target_branch == kMeanBranch) {
    for (std::size_t b = 0; b < config.modalities.size(); ++b) {
      branches.push_back(static_cast<int>(b));
    }
  } else {
    const auto it =
        std::find(config.modalities.begin(), config.modalities.end(), target_branch);
    if (it == config.modalities.end()) {
      throw ConfigError("unknown saliency branch '" + target_branch +
                        "'; expected a configured modality or 'mean'");
    }
    branches.push_back(static_cast<int>(it - config.modalities.begin()));
  }

  const Dims3 input_dims{static_cast<int>(batch.dim(4)), static_cast<int>(batch.dim(3)),
                         static_cast<int>(batch.dim(2))};

  FusionNetwork<float> net(config);
  // Eval forward never mutates parameters or running statistics, but the
  // shared forward path takes a mutable registry; work on a copy.
  NetworkParameters<float> local = params;
  const ForwardTrace<float> trace = net.forward(local, batch, RunMode::kEval, nullptr);

  SaliencyVolume out;
  out.target_class = target_class;
  out.target_branch = target_branch;
  out.source_layer = target_branch == kMeanBranch
                         ? "mean(enc.*.relu3)"
                         : "enc." + target_branch + ".relu3";

  if (branches.size() == 1) {
    out.values = raw_branch_map(net, trace, local, target_class, branches[0], input_dims,
                                spacing);
    out.degenerate = !normalize_map(out.values);
    return out;
  }

  // Mean of the branches' normalized maps, renormalized. Degenerate branches
  // contribute zeros; the result is degenerate only if every branch is.
  VolumeGrid acc = make_volume(input_dims, spacing);
  bool any_live = false;
  for (int b : branches) {
    VolumeGrid map = raw_branch_map(net, trace, local, target_class, b, input_dims, spacing);
    any_live = normalize_map(map) || any_live;
    for (std::size_t i = 0; i < acc.voxels.size(); ++i) acc.voxels[i] += map.voxels[i];
  }
  const float inv = 1.0f / static_cast<float>(branches.size());
  for (float& v : acc.voxels) v *= inv;
  normalize_map(acc);
  out.values = std::move(acc);
  out.degenerate = !any_live;
  return out;
}

SaliencyVolume gradcam(const ModelConfig& config, const NetworkParameters<float>& params,
                       const ModalityStack& stack, int target_class,
                       const std::string& target_branch) {
  if (config.modalities.empty()) throw ConfigError("model has no modalities");
  const VolumeGrid& first = stack.channel(modality_from_string(config.modalities[0]));
  const Dims3 dims = first.dims;

  Tensor<float> batch({1, config.modalities.size(), static_cast<std::size_t>(dims.z),
                       static_cast<std::size_t>(dims.y), static_cast<std::size_t>(dims.x)});
  for (std::size_t c = 0; c < config.modalities.size(); ++c) {
    const VolumeGrid& grid = stack.channel(modality_from_string(config.modalities[c]));
    if (!same_geometry(grid, first)) {
      throw AlignmentError("modality '" + config.modalities[c] +
                           "' is not aligned with the rest of the stack");
    }
    std::copy(grid.voxels.begin(), grid.voxels.end(),
              batch.ptr() + c * grid.voxels.size());
  }
  return gradcam_from_batch(config, params, batch, first.spacing, target_class,
                            target_branch);
}

RegionSaliencyStats region_saliency_stats(const SaliencyVolume& saliency,
                                          const GroundTruthMasks& masks) {
  const VolumeGrid& v = saliency.values;
  if (!same_geometry(v, masks.brain) || !same_geometry(v, masks.ventricle) ||
      !same_geometry(v, masks.cortex)) {
    throw AlignmentError("saliency grid does not match the mask grids");
  }
  RegionSaliencyStats stats;
  stats.ventricle = stat_where(v, masks.ventricle, true);
  stats.cortex = stat_where(v, masks.cortex, true);
  stats.brain = stat_where(v, masks.brain, true);
  stats.outside_brain = stat_where(v, masks.brain, false);
  return stats;
}

void export_overlay(const VolumeGrid& anatomy, const SaliencyVolume& saliency, int axis,
                    int index, const std::filesystem::path& png_file) {
  if (!same_geometry(anatomy, saliency.values)) {
    throw AlignmentError("saliency grid does not match the anatomy grid");
  }
  const SliceImage gray_src = extract_slice(anatomy, axis, index);
  const SliceImage heat = extract_slice(saliency.values, axis, index);

  // Per-slice min-max for the anatomy; a constant slice renders black.
  float lo = gray_src.pixels[0], hi = gray_src.pixels[0];
  for (float v : gray_src.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float scale = hi > lo ? 1.0f / (hi - lo) : 0.0f;

  RgbImage img(gray_src.width, gray_src.height);
  for (int row = 0; row < gray_src.height; ++row) {
    for (int col = 0; col < gray_src.width; ++col) {
      const float g = (gray_src.at(row, col) - lo) * scale;
      const float s = std::clamp(heat.at(row, col), 0.0f, 1.0f);
      // Hot colormap: black → red → yellow → white over [0,1].
      const float hr = std::clamp(3.0f * s, 0.0f, 1.0f);
      const float hg = std::clamp(3.0f * s - 1.0f, 0.0f, 1.0f);
      const float hb = std::clamp(3.0f * s - 2.0f, 0.0f, 1.0f);
      const float a = 0.5f * s;  // zero saliency keeps the pure grayscale pixel
      const auto mix = [&](float heat_c) {
        const float v = (1.0f - a) * g + a * heat_c;
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      };
      img.set(row, col, mix(hr), mix(hg), mix(hb));
    }
  }
  write_png(png_file, img);
}

void save_saliency_nifti(const SaliencyVolume& saliency, const std::filesystem::path& file) {
  write_nifti_volume(file, saliency.values);
}

}  // namespace volfuse
