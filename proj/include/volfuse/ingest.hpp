// Subject ingestion: load per-modality volumes, normalize, and assemble the
// aligned four-channel stack the network consumes.
#pragma once

#include <optional>
#include <string>

#include "volfuse/core_types.hpp"

namespace volfuse {

struct IngestOptions {
  // Relative modality paths in the manifest resolve against this directory.
  std::string base_dir;
  // When the manifest lacks tissue-map paths, derive GM/WM/CSF from the T1
  // volume with a 3-component Gaussian-mixture fit instead of failing.
  bool allow_fallback_segmentation = true;
  // Warn (stderr) when the in-brain tissue sum drifts from 1 by more than this.
  double tissue_sum_warn_threshold = 0.05;
};

// Normalizes raw inputs into a model-ready stack:
//  - T1 is z-scored over its nonzero voxels only; background stays exactly 0.
//  - Tissue maps are clipped to [0, 1] (never renormalized).
//  - All four grids must share dims and spacing (AlignmentError otherwise).
// Emits a stderr warning when the mean |GM+WM+CSF - 1| over nonzero-T1 voxels
// exceeds `tissue_sum_warn_threshold`.
ModalityStack assemble_modality_stack(const std::string& subject_id,
                                      const VolumeGrid& t1, const VolumeGrid& gm,
                                      const VolumeGrid& wm, const VolumeGrid& csf,
                                      double tissue_sum_warn_threshold = 0.05);

// Loads a subject's volumes from disk and assembles the stack. The T1 path is
// mandatory; when any tissue path is absent the remaining maps are produced by
// fallback_tissue_segmentation over the nonzero-T1 brain mask (if enabled).
ModalityStack load_subject_stack(const SubjectRecord& record,
                                 const IngestOptions& options);

// Resolves a manifest path against the base directory (absolute paths pass
// through unchanged).
std::string resolve_data_path(const std::string& base_dir, const std::string& path);

}  // namespace volfuse
