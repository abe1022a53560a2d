#include "volfuse/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "volfuse/errors.hpp"
#include "volfuse/nifti.hpp"
#include "volfuse/segment.hpp"

namespace volfuse {
namespace {

VolumeGrid clip_unit_interval(VolumeGrid grid) {
  for (float& v : grid.voxels) v = std::clamp(v, 0.0f, 1.0f);
  return grid;
}

// Z-score over nonzero voxels only; the zero background must remain zero so
// masked-out regions carry no signal after normalization.
VolumeGrid zscore_nonzero(const VolumeGrid& t1) {
  double sum = 0.0;
  std::size_t n = 0;
  for (float v : t1.voxels) {
    if (v != 0.0f) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) throw DegenerateInputError("T1 volume is entirely zero");
  const double mean = sum / n;
  double sq = 0.0;
  for (float v : t1.voxels) {
    if (v != 0.0f) sq += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(sq / n);
  VolumeGrid out = t1;
  if (sd == 0.0) {
    // Constant foreground: center it and leave the background at zero.
    for (float& v : out.voxels) {
      if (v != 0.0f) v = 0.0f;
    }
    return out;
  }
  for (float& v : out.voxels) {
    if (v != 0.0f) v = static_cast<float>((v - mean) / sd);
  }
  return out;
}

}  // namespace

std::string resolve_data_path(const std::string& base_dir, const std::string& path) {
  if (path.empty()) return path;
  if (path.front() == '/') return path;
  if (base_dir.empty()) return path;
  if (base_dir.back() == '/') return base_dir + path;
  return base_dir + "/" + path;
}

ModalityStack assemble_modality_stack(const std::string& subject_id,
                                      const VolumeGrid& t1, const VolumeGrid& gm,
                                      const VolumeGrid& wm, const VolumeGrid& csf,
                                      double tissue_sum_warn_threshold) {
  validate(t1);
  const VolumeGrid* tissues[3] = {&gm, &wm, &csf};
  const char* names[3] = {"gm", "wm", "csf"};
  for (int i = 0; i < 3; ++i) {
    if (!same_geometry(t1, *tissues[i])) {
      throw AlignmentError("subject '" + subject_id + "': " + names[i] +
                           " volume dims/spacing differ from T1");
    }
  }

  // Tissue-sum sanity check runs on the raw (pre-clip) maps, over voxels the
  // T1 marks as foreground.
  double dev_sum = 0.0;
  std::size_t fg = 0;
  for (std::size_t i = 0; i < t1.voxels.size(); ++i) {
    if (t1.voxels[i] == 0.0f) continue;
    ++fg;
    dev_sum += std::fabs(static_cast<double>(gm.voxels[i]) + wm.voxels[i] +
                         csf.voxels[i] - 1.0);
  }
  if (fg > 0 && dev_sum / fg > tissue_sum_warn_threshold) {
    std::fprintf(stderr,
                 "warning: subject '%s': tissue probabilities deviate from "
                 "unit sum (mean |GM+WM+CSF-1| = %.4f over %zu voxels)\n",
                 subject_id.c_str(), dev_sum / fg, fg);
  }

  ModalityStack stack;
  stack.subject_id = subject_id;
  stack.channel(Modality::kT1) = zscore_nonzero(t1);
  stack.channel(Modality::kGm) = clip_unit_interval(gm);
  stack.channel(Modality::kWm) = clip_unit_interval(wm);
  stack.channel(Modality::kCsf) = clip_unit_interval(csf);
  validate(stack);
  return stack;
}

ModalityStack load_subject_stack(const SubjectRecord& record,
                                 const IngestOptions& options) {
  const auto t1_it = record.modality_paths.find(Modality::kT1);
  if (t1_it == record.modality_paths.end() || t1_it->second.empty()) {
    throw Error("subject '" + record.subject_id + "': no T1 path in manifest");
  }
  VolumeGrid t1 = read_nifti_volume(resolve_data_path(options.base_dir, t1_it->second));

  auto path_of = [&](Modality m) -> std::string {
    const auto it = record.modality_paths.find(m);
    return it == record.modality_paths.end() ? std::string{} : it->second;
  };
  const std::string gm_path = path_of(Modality::kGm);
  const std::string wm_path = path_of(Modality::kWm);
  const std::string csf_path = path_of(Modality::kCsf);

  VolumeGrid gm, wm, csf;
  if (!gm_path.empty() && !wm_path.empty() && !csf_path.empty()) {
    gm = read_nifti_volume(resolve_data_path(options.base_dir, gm_path));
    wm = read_nifti_volume(resolve_data_path(options.base_dir, wm_path));
    csf = read_nifti_volume(resolve_data_path(options.base_dir, csf_path));
  } else if (options.allow_fallback_segmentation) {
    // Derive the maps from T1 with the nonzero-T1 voxels as the brain mask.
    VolumeGrid mask = make_volume(t1.dims, t1.spacing);
    for (std::size_t i = 0; i < t1.voxels.size(); ++i) {
      mask.voxels[i] = t1.voxels[i] != 0.0f ? 1.0f : 0.0f;
    }
    TissueProbabilities seg = fallback_tissue_segmentation(t1, mask);
    gm = std::move(seg.gm);
    wm = std::move(seg.wm);
    csf = std::move(seg.csf);
  } else {
    throw Error("subject '" + record.subject_id +
                "': tissue map paths missing and fallback segmentation disabled");
  }

  return assemble_modality_stack(record.subject_id, t1, gm, wm, csf,
                                 options.tissue_sum_warn_threshold);
}

}  // namespace volfuse
