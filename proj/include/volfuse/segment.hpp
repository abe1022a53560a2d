#pragma once

#include <array>

#include "volfuse/core_types.hpp"

namespace volfuse {

struct GaussianMixtureFit {
  std::array<double, 3> means{};      // ascending
  std::array<double, 3> variances{};
  std::array<double, 3> weights{};
  int iterations = 0;
  double mean_log_likelihood = 0.0;
};

struct TissueProbabilities {
  VolumeGrid csf;  // lowest-mean component (T1 contrast ordering)
  VolumeGrid gm;
  VolumeGrid wm;   // highest-mean component
  GaussianMixtureFit fit;
};

// Internal stand-in for an external tissue segmenter: a 3-component univariate
// Gaussian mixture fitted by EM on in-mask intensities (quantile-initialized,
// <= 100 iterations, tolerance 1e-6 on the mean log-likelihood), components
// assigned CSF < GM < WM by ascending mean. Per-voxel posteriors become the
// probability grids; everything outside the mask is zero.
//
// brain_mask: 0/1 grid matching t1. Throws DegenerateInputError when the mask
// holds fewer than 3 distinct intensity values, Error on an empty mask.
TissueProbabilities fallback_tissue_segmentation(const VolumeGrid& t1,
                                                 const VolumeGrid& brain_mask);

}  // namespace volfuse
