// Experiment orchestration: a JSON-configured run executes one of the three
// evaluation protocols end-to-end and leaves a self-describing artifact
// directory behind (plan, audit, report, predictions, curves, checkpoints,
// figures, and a hash manifest of everything written).
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "volfuse/network.hpp"
#include "volfuse/splits.hpp"
#include "volfuse/train.hpp"

namespace volfuse {

// The three protocols:
//  - cv3d: subject-level stratified k-fold over the volumetric fusion model.
//  - holdout_slice_subjectlevel: a 2D slice classifier whose slices inherit
//    their subject's train/val/test partition (the corrected protocol).
//  - slice_level_diagnostic: the same slice classifier with slices split
//    individually, subjects spanning partitions. Deliberately leaky — the
//    run finishes, its report is marked invalid, and the process exits 3.
enum class ExperimentMode { kCv3d, kHoldoutSliceSubjectLevel, kSliceLevelDiagnostic };

std::string to_string(ExperimentMode mode);
ExperimentMode experiment_mode_from_string(const std::string& s);

struct RunConfig {
  std::string experiment;  // artifact subdirectory name
  ExperimentMode mode = ExperimentMode::kCv3d;
  std::filesystem::path manifest;
  std::filesystem::path data_root;  // empty → the manifest's directory
  std::filesystem::path out_dir;
  std::uint64_t seed = 17;
  bool deterministic = true;
  int jobs = 1;

  // cv3d
  int folds = 5;
  double val_fraction = 0.10;  // of each fold's non-test subjects
  StratifyOn stratify_on = StratifyOn::kBinary;

  // slice protocols
  std::array<double, 3> holdout_fractions = {0.7, 0.1, 0.2};  // train/val/test
  int slice_axis = 2;          // volume_ops axis convention (2 = axial)
  int slices_per_subject = 16; // central band

  ModelConfig model;        // already merged over the mode's base config
  TrainingConfig training;  // seed defaults to the run seed
};

void validate(const RunConfig& config);

// Parses a config file's JSON. `model` / `training` objects overlay the
// mode-appropriate defaults (the volumetric fusion model for cv3d, the
// single-modality 2D variant for the slice protocols); a missing
// training.seed inherits the run seed. Unknown `mode` values name the field
// in the error.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RunConfig& config);

// Makes relative manifest/data_root/out_dir paths absolute against
// `base_dir` (where the config file lives), so configs travel.
void resolve_config_paths(RunConfig& config, const std::filesystem::path& base_dir);

struct SlicePrediction {
  std::string subject_id;
  int axis = 2;
  int index = 0;
  int truth = 0;
  int predicted = 0;
  std::vector<double> probs;
};

// Result of one slice-protocol run (both slice modes share the shape).
struct SliceProtocolReport {
  ExperimentMode mode = ExperimentMode::kHoldoutSliceSubjectLevel;
  std::uint64_t seed = 0;
  int slice_axis = 2;
  int slices_per_subject = 0;
  LeakageReport audit;
  bool valid = false;  // audit clean and training completed
  int n_subjects = 0;
  std::array<int, 3> slice_counts{};  // train / val / test
  FoldCurves curves;
  ClassificationMetrics test_metrics;
  std::vector<SlicePrediction> predictions;  // test slices, evaluation order
};

nlohmann::ordered_json to_json(const SliceProtocolReport& report);
std::string slice_predictions_csv(const SliceProtocolReport& report);

struct RunOutcome {
  int exit_code = 0;  // 0 clean; 3 = leakage-by-design (slice_level_diagnostic)
  std::filesystem::path experiment_dir;
  std::optional<EvaluationReport> cv_report;
  std::optional<SliceProtocolReport> slice_report;
};

// Executes the configured protocol and writes every artifact under
// <out_dir>/<experiment>/. The VOLFUSE_DATA_ROOT environment variable
// overrides config.data_root when set. Throws LeakageError when a protocol
// that promises clean splits fails its audit (cv3d and the subject-level
// holdout); the deliberately leaky diagnostic instead completes with
// exit_code 3 and a report marked invalid.
RunOutcome run_experiment(const RunConfig& config);

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_hex_of_file(const std::filesystem::path& file);

}  // namespace volfuse
