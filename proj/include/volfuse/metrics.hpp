// Classification metrics with exact tie handling, plus the cross-fold
// mean/population-std aggregation used in the final reports.
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace volfuse {

struct ClassificationMetrics {
  double accuracy_pct = 0.0;           // percentage in [0, 100]
  std::optional<double> roc_auc;       // binary problems only
  double macro_f1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
};

// truth[i] in [0, n_classes); scores[i] is a probability row summing to 1
// within 1e-6. Accuracy uses argmax with ties going to the lower class index.
// ROC-AUC (computed only for 2-class problems, positive class = 1) is the
// exact Mann-Whitney statistic via midranks — ties count one half. Macro-F1
// averages per-class F1 over all classes, with absent classes scoring 0.
// Throws UndefinedMetricError when a binary truth vector is single-class.
ClassificationMetrics compute_metrics(const std::vector<int>& truth,
                                      const std::vector<std::vector<double>>& scores,
                                      int n_classes);

// Exact binary ROC-AUC from positive-class scores. Kept public so the
// protocol code and tests share one implementation.
double exact_roc_auc(const std::vector<int>& truth, const std::vector<double>& p_positive);

struct AggregateStat {
  double mean = 0.0;
  double std_dev = 0.0;  // population (divide-by-K) standard deviation
};

// Mean and population standard deviation over per-fold values. Requires at
// least one value; a single fold aggregates to {value, 0}.
AggregateStat aggregate_folds(const std::vector<double>& values);

}  // namespace volfuse
