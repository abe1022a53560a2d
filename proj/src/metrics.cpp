#include "volfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "volfuse/errors.hpp"

namespace volfuse {

double exact_roc_auc(const std::vector<int>& truth, const std::vector<double>& p_positive) {
  if (truth.size() != p_positive.size()) {
    throw ShapeError("truth/score length mismatch in ROC-AUC");
  }
  unsigned long long pos = 0, neg = 0;
  for (int t : truth) {
    if (t == 1) {
      ++pos;
    } else if (t == 0) {
      ++neg;
    } else {
      throw InvalidLabelError("binary ROC-AUC saw label " + std::to_string(t));
    }
  }
  if (pos == 0 || neg == 0) {
    throw UndefinedMetricError(
        "ROC-AUC undefined: truth contains only one class (" +
        std::to_string(pos) + " positive, " + std::to_string(neg) + " negative)");
  }

  // Midrank statistic in doubled-integer arithmetic so tied scores contribute
  // exactly one half: AUC = (2·ΣR⁺ − P(P+1)) / (2·P·N).
  std::vector<std::size_t> order(truth.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return p_positive[a] < p_positive[b];
  });

  unsigned long long doubled_rank_sum = 0;  // Σ over positives of 2·midrank
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && p_positive[order[j]] == p_positive[order[i]]) ++j;
    // 1-based ranks i+1 .. j share midrank (i+1+j)/2; doubled: i+1+j.
    const unsigned long long doubled_midrank = i + 1 + j;
    for (std::size_t k = i; k < j; ++k) {
      if (truth[order[k]] == 1) doubled_rank_sum += doubled_midrank;
    }
    i = j;
  }
  const unsigned long long u2 = doubled_rank_sum - pos * (pos + 1);
  return static_cast<double>(u2) / static_cast<double>(2 * pos * neg);
}

ClassificationMetrics compute_metrics(const std::vector<int>& truth,
                                      const std::vector<std::vector<double>>& scores,
                                      int n_classes) {
  if (truth.size() != scores.size()) {
    throw ShapeError("truth and score row counts differ");
  }
  if (truth.empty()) throw DegenerateInputError("no predictions to score");
  if (n_classes < 2) throw ConfigError("metrics need at least 2 classes");

  const std::size_t C = static_cast<std::size_t>(n_classes);
  std::vector<int> predicted(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n_classes) {
      throw InvalidLabelError("truth label " + std::to_string(truth[i]) +
                              " out of range");
    }
    if (scores[i].size() != C) {
      throw ShapeError("score row " + std::to_string(i) + " has " +
                       std::to_string(scores[i].size()) + " entries, expected " +
                       std::to_string(C));
    }
    const double sum = std::accumulate(scores[i].begin(), scores[i].end(), 0.0);
    if (std::fabs(sum - 1.0) > 1e-6) {
      throw Error("score row " + std::to_string(i) + " sums to " +
                  std::to_string(sum) + ", not 1");
    }
    // Argmax with ties resolved toward the lower class index.
    int best = 0;
    for (std::size_t c = 1; c < C; ++c) {
      if (scores[i][c] > scores[i][best]) best = static_cast<int>(c);
    }
    predicted[i] = best;
  }

  ClassificationMetrics m;
  m.confusion.assign(C, std::vector<std::size_t>(C, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++m.confusion[truth[i]][predicted[i]];
    if (predicted[i] == truth[i]) ++correct;
  }
  m.accuracy_pct = 100.0 * static_cast<double>(correct) / truth.size();

  double f1_sum = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t tp = m.confusion[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < C; ++o) {
      if (o != c) {
        fp += m.confusion[o][c];
        fn += m.confusion[c][o];
      }
    }
    const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
    f1_sum += precision + recall == 0.0
                  ? 0.0
                  : 2.0 * precision * recall / (precision + recall);
  }
  m.macro_f1 = f1_sum / static_cast<double>(C);

  if (n_classes == 2) {
    std::vector<double> p_pos(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) p_pos[i] = scores[i][1];
    m.roc_auc = exact_roc_auc(truth, p_pos);
  }
  return m;
}

AggregateStat aggregate_folds(const std::vector<double>& values) {
  if (values.empty()) throw DegenerateInputError("no fold values to aggregate");
  AggregateStat s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std_dev = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

}  // namespace volfuse
