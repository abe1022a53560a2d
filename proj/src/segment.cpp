#include "volfuse/segment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace volfuse {
namespace {

constexpr int kMaxIterations = 100;
constexpr double kTolerance = 1e-6;
constexpr double kVarianceFloor = 1e-10;
constexpr double kLog2Pi = 1.8378770664093453;

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * (sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - lo;
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

TissueProbabilities fallback_tissue_segmentation(const VolumeGrid& t1,
                                                 const VolumeGrid& brain_mask) {
  validate(t1);
  if (!same_geometry(t1, brain_mask)) {
    throw AlignmentError("brain mask dims/spacing differ from the T1 volume");
  }

  std::vector<std::size_t> in_mask;
  std::vector<double> values;
  for (std::size_t i = 0; i < t1.voxels.size(); ++i) {
    if (brain_mask.voxels[i] != 0.0f) {
      in_mask.push_back(i);
      values.push_back(static_cast<double>(t1.voxels[i]));
    }
  }
  if (values.empty()) throw Error("brain mask is empty");

  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  if (std::unique(sorted.begin(), sorted.end()) - sorted.begin() < 3) {
    throw DegenerateInputError(
        "fewer than 3 distinct intensity values inside the brain mask; "
        "cannot fit a 3-component mixture");
  }
  std::sort(sorted.begin(), sorted.end());

  const std::size_t n = values.size();
  const double grand_mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double pooled_var = 0.0;
  for (double v : values) pooled_var += (v - grand_mean) * (v - grand_mean);
  pooled_var = std::max(pooled_var / n, kVarianceFloor);

  // Quantile initialization keeps the fit fully deterministic.
  std::array<double, 3> mu = {quantile(sorted, 0.10), quantile(sorted, 0.50),
                              quantile(sorted, 0.90)};
  std::array<double, 3> var = {pooled_var, pooled_var, pooled_var};
  std::array<double, 3> w = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  std::vector<double> resp(n * 3);
  double prev_ll = -std::numeric_limits<double>::infinity();
  int iter = 0;
  double mean_ll = 0.0;
  for (; iter < kMaxIterations; ++iter) {
    // E-step with the usual log-sum-exp guard.
    double ll_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double logp[3];
      for (int k = 0; k < 3; ++k) {
        const double d = values[i] - mu[k];
        logp[k] = std::log(w[k]) - 0.5 * (kLog2Pi + std::log(var[k]) + d * d / var[k]);
      }
      const double m = std::max({logp[0], logp[1], logp[2]});
      const double denom =
          std::exp(logp[0] - m) + std::exp(logp[1] - m) + std::exp(logp[2] - m);
      ll_sum += m + std::log(denom);
      for (int k = 0; k < 3; ++k) resp[i * 3 + k] = std::exp(logp[k] - m) / denom;
    }
    mean_ll = ll_sum / n;

    // M-step.
    for (int k = 0; k < 3; ++k) {
      double rk = 0.0, mean_k = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        rk += resp[i * 3 + k];
        mean_k += resp[i * 3 + k] * values[i];
      }
      rk = std::max(rk, 1e-12);
      mean_k /= rk;
      double var_k = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = values[i] - mean_k;
        var_k += resp[i * 3 + k] * d * d;
      }
      mu[k] = mean_k;
      var[k] = std::max(var_k / rk, kVarianceFloor);
      w[k] = rk / n;
    }

    if (std::fabs(mean_ll - prev_ll) < kTolerance) {
      ++iter;
      break;
    }
    prev_ll = mean_ll;
  }

  // Sort components by ascending mean: CSF < GM < WM under T1 contrast.
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) { return mu[a] < mu[b]; });

  TissueProbabilities out;
  out.csf = make_volume(t1.dims, t1.spacing);
  out.gm = make_volume(t1.dims, t1.spacing);
  out.wm = make_volume(t1.dims, t1.spacing);
  for (int k = 0; k < 3; ++k) {
    out.fit.means[k] = mu[order[k]];
    out.fit.variances[k] = var[order[k]];
    out.fit.weights[k] = w[order[k]];
  }
  out.fit.iterations = iter;
  out.fit.mean_log_likelihood = mean_ll;

  VolumeGrid* grids[3] = {&out.csf, &out.gm, &out.wm};
  for (std::size_t j = 0; j < in_mask.size(); ++j) {
    for (int k = 0; k < 3; ++k) {
      grids[k]->voxels[in_mask[j]] = static_cast<float>(resp[j * 3 + order[k]]);
    }
  }
  return out;
}

}  // namespace volfuse
