// Per-fold training (Adam + early stopping on validation loss) and the
// K-fold orchestration that produces the final evaluation report.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "volfuse/metrics.hpp"
#include "volfuse/network.hpp"
#include "volfuse/splits.hpp"
#include "volfuse/tensor.hpp"

namespace volfuse {

enum class ClassWeighting { kNone, kInverseFrequency };

std::string to_string(ClassWeighting w);
ClassWeighting class_weighting_from_string(const std::string& s);

struct TrainingConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 4;
  int max_epochs = 60;
  int early_stop_patience = 10;  // epochs without val-loss improvement
  ClassWeighting weighting = ClassWeighting::kNone;
  std::uint64_t seed = 0;
  bool deterministic = true;  // fixed iteration order; no wall-clock entropy
};

void validate(const TrainingConfig& config);
nlohmann::ordered_json to_json(const TrainingConfig& config);
TrainingConfig training_config_from_json(const nlohmann::json& j,
                                        TrainingConfig base = {});

// One training example: the full channel stack for volumetric models, a
// single slice (with a singleton Z axis) for the 2D variant. Slices keep
// their subject id so protocol audits stay possible downstream.
struct Sample {
  std::string sample_id;   // unique per sample (slice ids append the index)
  std::string subject_id;  // provenance
  Tensor<float> input;     // [C, Z, Y, X]
  int label = 0;
};

using Dataset = std::vector<Sample>;

struct FoldCurves {
  std::vector<double> train_loss;  // one entry per trained epoch
  std::vector<double> val_loss;
  int best_epoch = 0;  // 1-based; minimum val loss, ties to the earlier epoch
};

struct TrainOutcome {
  NetworkParameters<float> best_params;
  FoldCurves curves;
};

// Minimizes cross-entropy with Adam; evaluates validation loss after every
// epoch; keeps the parameters of the best epoch; stops early after
// `early_stop_patience` epochs without improvement. Deterministic given the
// config seed. Throws on a single-class training set, an empty validation
// set, or a non-finite loss (TrainingDiverged).
TrainOutcome train_fold(const Dataset& train, const Dataset& val,
                        const ModelConfig& model_config,
                        const TrainingConfig& train_config);

// Mean cross-entropy of a dataset under eval-mode forward passes.
double evaluate_loss(const FusionNetwork<float>& net, NetworkParameters<float>& params,
                     const Dataset& data, const std::vector<double>& class_weights,
                     int batch_size);

// Eval-mode probability rows for a dataset, in dataset order.
std::vector<std::vector<double>> predict_probabilities(
    const FusionNetwork<float>& net, NetworkParameters<float>& params,
    const Dataset& data, int batch_size);

struct SubjectPrediction {
  std::string subject_id;
  int fold = 0;
  int truth = 0;
  std::vector<double> probs;  // per-class; probs[1] is p(Demented) for binary
};

struct FoldResult {
  int fold_index = 0;
  FoldCurves curves;
  ClassificationMetrics test_metrics;
  std::vector<SubjectPrediction> predictions;
  NetworkParameters<float> best_params;  // not serialized into the report
};

struct EvaluationReport {
  int k = 0;
  std::uint64_t seed = 0;
  StratifyOn stratify_on = StratifyOn::kBinary;
  LeakageReport audit;
  bool valid = false;  // audit clean and every fold completed
  std::vector<FoldResult> folds;
  AggregateStat accuracy_pct;
  AggregateStat roc_auc;
  AggregateStat macro_f1;
};

// Loads one subject into a training sample (the pipeline wires this to the
// ingest module; tests substitute synthetic loaders).
using SampleLoader = std::function<Sample(const SubjectRecord&)>;

// Class index for a subject: binary (0 control / 1 demented) for two-class
// heads, the CDR rank (0..3) for four-class heads.
int subject_class_label(const SubjectRecord& record, int n_classes);

struct CrossValidateHooks {
  // Applied to the plan before the audit — lets tests plant corruption and
  // prove the abort path fires before any training.
  std::function<void(FoldPlan&)> mutate_plan;
  std::function<void(int fold, const FoldResult&)> on_fold_complete;
};

// Audits the plan (hard abort via LeakageError before any data is loaded if
// it is dirty), trains one fresh model per fold, evaluates each fold's test
// subjects exactly once, and aggregates.
// `jobs` > 1 trains folds on that many threads with a fixed fold-to-worker
// assignment (fold i → worker i mod jobs, ascending within each worker), so
// results and reports are identical to the sequential run; every sample is
// preloaded on the calling thread first and fold hooks then fire in fold
// order after the joins.
EvaluationReport cross_validate_plan(const std::vector<SubjectRecord>& records,
                                     const SampleLoader& loader, const FoldPlan& plan,
                                     const ModelConfig& model_config,
                                     const TrainingConfig& train_config,
                                     const CrossValidateHooks* hooks = nullptr,
                                     int jobs = 1);

// Convenience wrapper: builds the stratified plan, then runs the above.
EvaluationReport cross_validate(const std::vector<SubjectRecord>& records,
                                const SampleLoader& loader, int k, std::uint64_t seed,
                                const ModelConfig& model_config,
                                const TrainingConfig& train_config,
                                const CrossValidateHooks* hooks = nullptr, int jobs = 1);

nlohmann::ordered_json to_json(const EvaluationReport& report);

// `subject_id,fold,truth,p_demented` rows in fold-then-subject order.
std::string predictions_csv(const EvaluationReport& report);

// `epoch,train_loss,val_loss` rows for one fold.
std::string curves_csv(const FoldCurves& curves);

}  // namespace volfuse
