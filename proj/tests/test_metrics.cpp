#include <doctest.h>

#include <cmath>
#include <vector>

#include "volfuse/errors.hpp"
#include "volfuse/metrics.hpp"
#include "volfuse/rng.hpp"
#include "support.hpp"

using namespace volfuse;
using volfuse::testing::brute_force_auc_doubled;

TEST_CASE("perfectly separated scores give AUC 1 and accuracy 100") {
  const std::vector<int> truth = {1, 1, 0, 0};
  const std::vector<std::vector<double>> scores = {
      {0.1, 0.9}, {0.2, 0.8}, {0.9, 0.1}, {0.8, 0.2}};
  const ClassificationMetrics m = compute_metrics(truth, scores, 2);
  CHECK(m.accuracy_pct == doctest::Approx(100.0));
  REQUIRE(m.roc_auc.has_value());
  CHECK(*m.roc_auc == doctest::Approx(1.0));
  CHECK(m.macro_f1 == doctest::Approx(1.0));
  REQUIRE(m.confusion.size() == 2);
  CHECK(m.confusion[0][0] == 2);
  CHECK(m.confusion[1][1] == 2);
  CHECK(m.confusion[0][1] == 0);
  CHECK(m.confusion[1][0] == 0);
}

TEST_CASE("tied scores count half a win") {
  // Positives {0.7, 0.3}, negatives {0.7, 0.1}. Pair by pair:
  // (0.7 vs 0.7) = 0.5, (0.7 vs 0.1) = 1, (0.3 vs 0.7) = 0, (0.3 vs 0.1) = 1
  // -> 2.5 of 4 pairs = 0.625.
  const std::vector<int> truth = {1, 1, 0, 0};
  const std::vector<double> pos = {0.7, 0.3, 0.7, 0.1};
  CHECK(exact_roc_auc(truth, pos) == doctest::Approx(0.625).epsilon(1e-12));

  std::vector<std::vector<double>> scores;
  for (double p : pos) scores.push_back({1.0 - p, p});
  const ClassificationMetrics m = compute_metrics(truth, scores, 2);
  REQUIRE(m.roc_auc.has_value());
  CHECK(*m.roc_auc == doctest::Approx(0.625).epsilon(1e-12));

  // Cross-check against explicit pair enumeration in doubled-integer space.
  const auto [doubled, denom] = brute_force_auc_doubled(truth, pos);
  CHECK(doubled == 5);
  CHECK(denom == 8);
}

TEST_CASE("midrank AUC agrees exactly with pair enumeration on tie-heavy data") {
  Rng rng(424242);
  for (int instance = 0; instance < 200; ++instance) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<int> truth(n);
    std::vector<double> scores(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.below(2));
      (truth[i] == 1 ? has_pos : has_neg) = true;
      // Discretized scores force heavy tie structure.
      scores[i] = static_cast<double>(rng.below(8)) / 8.0;
    }
    if (!has_pos || !has_neg) {
      truth[0] = 1;
      truth[n - 1] = 0;
    }
    const auto [doubled, denom] = brute_force_auc_doubled(truth, scores);
    const double expected = static_cast<double>(doubled) / static_cast<double>(denom);
    CHECK(exact_roc_auc(truth, scores) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("single-class truth has no defined AUC") {
  const std::vector<int> truth = {1, 1, 1};
  const std::vector<double> pos = {0.2, 0.5, 0.9};
  CHECK_THROWS_AS(exact_roc_auc(truth, pos), UndefinedMetricError);
  const std::vector<std::vector<double>> scores = {{0.8, 0.2}, {0.5, 0.5}, {0.1, 0.9}};
  CHECK_THROWS_AS(compute_metrics(truth, scores, 2), UndefinedMetricError);
}

TEST_CASE("argmax ties resolve to the lower class index") {
  const std::vector<int> truth = {0, 1};
  const std::vector<std::vector<double>> scores = {{0.5, 0.5}, {0.5, 0.5}};
  const ClassificationMetrics m = compute_metrics(truth, scores, 2);
  // Both predicted class 0: one right, one wrong.
  CHECK(m.accuracy_pct == doctest::Approx(50.0));
  CHECK(m.confusion[0][0] == 1);
  CHECK(m.confusion[1][0] == 1);
}

TEST_CASE("macro-F1 over a degenerate always-class-0 predictor") {
  // Balanced 4-class truth, 3 samples each; predictor always says class 0.
  // Class 0: precision 3/12, recall 1 -> F1 = 0.4; classes 1..3: F1 = 0.
  // Macro-F1 = 0.4 / 4 = 0.1.
  std::vector<int> truth;
  std::vector<std::vector<double>> scores;
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < 3; ++i) {
      truth.push_back(c);
      scores.push_back({0.7, 0.1, 0.1, 0.1});
    }
  }
  const ClassificationMetrics m = compute_metrics(truth, scores, 4);
  CHECK(m.macro_f1 == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(m.accuracy_pct == doctest::Approx(25.0));
  CHECK_FALSE(m.roc_auc.has_value());  // multiclass: no ROC-AUC
  // Confusion matrix piles everything into the predicted-0 column.
  for (int c = 0; c < 4; ++c) {
    CHECK(m.confusion[c][0] == 3);
    for (int p = 1; p < 4; ++p) CHECK(m.confusion[c][p] == 0);
  }
}

TEST_CASE("macro-F1 scores an absent class as zero") {
  // n_classes = 3 but class 2 never appears in truth or predictions.
  const std::vector<int> truth = {0, 0, 1, 1};
  const std::vector<std::vector<double>> scores = {
      {0.9, 0.05, 0.05}, {0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.2, 0.7, 0.1}};
  const ClassificationMetrics m = compute_metrics(truth, scores, 3);
  // Classes 0 and 1 are perfect (F1 = 1); class 2 contributes 0.
  CHECK(m.macro_f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("fold aggregation reproduces the reference mean and spread") {
  SUBCASE("accuracy percentages") {
    // Exact values: mean 72.32, population std 4.6739...; the reference
    // rounds to 2 decimals, so compare with absolute slack.
    const AggregateStat s = aggregate_folds({76.6, 72.3, 63.8, 76.6, 72.3});
    CHECK(std::fabs(s.mean - 72.34) <= 0.05);
    CHECK(std::fabs(s.std_dev - 4.66) <= 0.05);
    CHECK(s.mean == doctest::Approx(72.32).epsilon(1e-12));
  }
  SUBCASE("AUC values") {
    const AggregateStat s = aggregate_folds({0.7759, 0.7926, 0.7093, 0.8130, 0.8000});
    CHECK(std::fabs(s.mean - 0.7781) <= 0.001);
    CHECK(std::fabs(s.std_dev - 0.0365) <= 0.001);
    CHECK(s.mean == doctest::Approx(0.77816).epsilon(1e-12));
  }
  SUBCASE("a single fold has zero spread") {
    const AggregateStat s = aggregate_folds({50.0});
    CHECK(s.mean == doctest::Approx(50.0));
    CHECK(s.std_dev == doctest::Approx(0.0));
  }
  SUBCASE("no folds is an error") {
    CHECK_THROWS_AS(aggregate_folds({}), Error);
  }
}
