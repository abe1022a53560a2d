#include "volfuse/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "volfuse/errors.hpp"
#include "volfuse/ingest.hpp"
#include "volfuse/manifest.hpp"
#include "volfuse/metrics.hpp"
#include "volfuse/plots.hpp"
#include "volfuse/volume_ops.hpp"

namespace volfuse {
namespace {

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// Collects every artifact written into the experiment directory so the hash
// manifest emitted at the end covers exactly what this run produced.
class ArtifactSink {
 public:
  explicit ArtifactSink(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }

  // Registers `name` and returns its full path, for writers that stream the
  // file themselves (checkpoints, PNGs).
  std::filesystem::path path_for(const std::string& name) {
    names_.push_back(name);
    return dir_ / name;
  }

  void write_text(const std::string& name, const std::string& content) {
    const std::filesystem::path p = path_for(name);
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open '" + p.string() + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw Error("short write to '" + p.string() + "'");
  }

  // Size + SHA-256 of each artifact, sorted by name. The manifest cannot
  // list itself, so it is the one unregistered file.
  void write_hash_manifest() {
    std::sort(names_.begin(), names_.end());
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    for (const std::string& name : names_) {
      const std::filesystem::path p = dir_ / name;
      nlohmann::ordered_json f;
      f["name"] = name;
      f["bytes"] = static_cast<std::uint64_t>(std::filesystem::file_size(p));
      f["sha256"] = sha256_hex_of_file(p);
      files.push_back(std::move(f));
    }
    nlohmann::ordered_json j;
    j["files"] = std::move(files);
    std::ofstream f(dir_ / "files_manifest.json", std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write the hash manifest");
    const std::string text = dump(j);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> names_;
};

Sample make_volume_sample(const SubjectRecord& rec, const ModalityStack& stack,
                          const ModelConfig& model) {
  Sample s;
  s.sample_id = rec.subject_id;
  s.subject_id = rec.subject_id;
  s.label = subject_class_label(rec, model.n_classes);
  const VolumeGrid& first = stack.channel(modality_from_string(model.modalities[0]));
  const Dims3 d = first.dims;
  s.input = Tensor<float>({model.modalities.size(), static_cast<std::size_t>(d.z),
                           static_cast<std::size_t>(d.y), static_cast<std::size_t>(d.x)});
  for (std::size_t c = 0; c < model.modalities.size(); ++c) {
    const VolumeGrid& grid = stack.channel(modality_from_string(model.modalities[c]));
    std::copy(grid.voxels.begin(), grid.voxels.end(),
              s.input.ptr() + c * grid.voxels.size());
  }
  return s;
}

Sample make_slice_sample(const SubjectRecord& rec, const ModalityStack& stack,
                         const ModelConfig& model, int axis, int index) {
  Sample s;
  s.subject_id = rec.subject_id;
  s.sample_id =
      rec.subject_id + "_" + plane_name_from_axis(axis) + std::to_string(index);
  s.label = subject_class_label(rec, model.n_classes);
  for (std::size_t c = 0; c < model.modalities.size(); ++c) {
    const SliceImage img = extract_slice(
        stack.channel(modality_from_string(model.modalities[c])), axis, index);
    if (c == 0) {
      s.input = Tensor<float>({model.modalities.size(), 1,
                               static_cast<std::size_t>(img.height),
                               static_cast<std::size_t>(img.width)});
    }
    std::copy(img.pixels.begin(), img.pixels.end(),
              s.input.ptr() + c * img.pixels.size());
  }
  return s;
}

nlohmann::ordered_json slice_assignment_json(const SliceAssignment& assignment) {
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& e : assignment.entries) {
    nlohmann::ordered_json row;
    row["subject_id"] = e.key.subject_id;
    row["axis"] = e.key.axis;
    row["index"] = e.key.index;
    row["partition"] = to_string(e.partition);
    entries.push_back(std::move(row));
  }
  nlohmann::ordered_json j;
  j["mode"] = assignment.mode == SliceAssignment::Mode::kSliceLevel ? "slice_level"
                                                                    : "subject_level";
  j["entries"] = std::move(entries);
  return j;
}

void run_cv3d(const RunConfig& cfg, const std::vector<SubjectRecord>& records,
              ArtifactSink& sink, RunOutcome& outcome) {
  IngestOptions io;
  io.base_dir = cfg.data_root.string();

  const FoldPlan plan = stratified_subject_kfold(records, cfg.folds, cfg.seed,
                                                 cfg.val_fraction, cfg.stratify_on);
  sink.write_text("plan.json", dump(to_json(plan)));
  sink.write_text("audit.json", dump(to_json(audit_leakage(plan))));

  const SampleLoader loader = [&](const SubjectRecord& rec) {
    return make_volume_sample(rec, load_subject_stack(rec, io), cfg.model);
  };
  EvaluationReport report = cross_validate_plan(records, loader, plan, cfg.model,
                                                cfg.training, nullptr, cfg.jobs);

  sink.write_text("report.json", dump(to_json(report)));
  sink.write_text("predictions.csv", predictions_csv(report));
  std::vector<double> accuracies;
  for (const FoldResult& fold : report.folds) {
    const std::string tag = "fold" + std::to_string(fold.fold_index);
    sink.write_text("curves_" + tag + ".csv", curves_csv(fold.curves));
    write_loss_curves_png(sink.path_for("curves_" + tag + ".png"),
                          fold.curves.train_loss, fold.curves.val_loss,
                          fold.curves.best_epoch);
    nlohmann::ordered_json meta;
    meta["experiment"] = cfg.experiment;
    meta["fold"] = fold.fold_index;
    meta["best_epoch"] = fold.curves.best_epoch;
    meta["seed"] = cfg.seed;
    save_checkpoint(sink.path_for("checkpoint_" + tag + ".ckpt").string(), cfg.model,
                    fold.best_params, meta);
    accuracies.push_back(fold.test_metrics.accuracy_pct);
  }
  write_fold_accuracy_png(sink.path_for("fold_accuracy.png"), accuracies);

  outcome.exit_code = 0;
  outcome.cv_report = std::move(report);
}

void run_slice_protocol(const RunConfig& cfg, const std::vector<SubjectRecord>& records,
                        ArtifactSink& sink, RunOutcome& outcome) {
  IngestOptions io;
  io.base_dir = cfg.data_root.string();
  const bool leaky_by_design = cfg.mode == ExperimentMode::kSliceLevelDiagnostic;

  // One sample per (subject, central slice), manifest order then ascending
  // slice index — the order the split operates on.
  std::vector<SliceKey> keys;
  std::vector<Sample> samples;
  for (const SubjectRecord& rec : records) {
    const ModalityStack stack = load_subject_stack(rec, io);
    const VolumeGrid& ref = stack.channel(modality_from_string(cfg.model.modalities[0]));
    for (int index : central_slice_indices(ref.dims, cfg.slice_axis,
                                           cfg.slices_per_subject)) {
      keys.push_back({rec.subject_id, cfg.slice_axis, index});
      samples.push_back(make_slice_sample(rec, stack, cfg.model, cfg.slice_axis, index));
    }
  }

  SliceAssignment assignment;
  if (leaky_by_design) {
    assignment = slice_level_split(keys, cfg.holdout_fractions, cfg.seed);
  } else {
    const FoldPlan plan = subject_level_holdout(records, cfg.holdout_fractions,
                                                cfg.seed, cfg.stratify_on);
    sink.write_text("plan.json", dump(to_json(plan)));
    assignment = assign_slices_by_subject(keys, plan);
  }
  sink.write_text("slices.json", dump(slice_assignment_json(assignment)));

  const LeakageReport audit = audit_leakage(assignment);
  sink.write_text("audit.json", dump(to_json(audit)));
  if (!audit.clean && !leaky_by_design) {
    throw LeakageError("subject-level slice assignment failed its audit with " +
                       std::to_string(audit.violations.size()) + " violation(s)");
  }

  Dataset train, val, test;
  for (std::size_t i = 0; i < assignment.entries.size(); ++i) {
    switch (assignment.entries[i].partition) {
      case Partition::kTrain: train.push_back(samples[i]); break;
      case Partition::kVal: val.push_back(samples[i]); break;
      case Partition::kTest: test.push_back(samples[i]); break;
    }
  }

  const TrainOutcome trained = train_fold(train, val, cfg.model, cfg.training);
  const FusionNetwork<float> net(cfg.model);
  NetworkParameters<float> best = trained.best_params;
  const auto probs = predict_probabilities(net, best, test, cfg.training.batch_size);
  std::vector<int> truth;
  truth.reserve(test.size());
  for (const Sample& s : test) truth.push_back(s.label);

  SliceProtocolReport report;
  report.mode = cfg.mode;
  report.seed = cfg.seed;
  report.slice_axis = cfg.slice_axis;
  report.slices_per_subject = cfg.slices_per_subject;
  report.audit = audit;
  report.valid = audit.clean;
  report.n_subjects = static_cast<int>(records.size());
  report.slice_counts = {static_cast<int>(train.size()), static_cast<int>(val.size()),
                         static_cast<int>(test.size())};
  report.curves = trained.curves;
  report.test_metrics = compute_metrics(truth, probs, cfg.model.n_classes);
  for (std::size_t i = 0; i < test.size(); ++i) {
    // Slice keys survive inside the sample ids; recover axis/index from the
    // assignment instead of re-parsing. Test entries keep evaluation order.
    SlicePrediction p;
    p.subject_id = test[i].subject_id;
    p.truth = truth[i];
    p.probs = probs[i];
    p.predicted = static_cast<int>(std::max_element(probs[i].begin(), probs[i].end()) -
                                   probs[i].begin());
    report.predictions.push_back(std::move(p));
  }
  // Fill axis/index by walking the assignment's test entries in order (the
  // datasets were built in that same order).
  std::size_t t = 0;
  for (const auto& e : assignment.entries) {
    if (e.partition != Partition::kTest) continue;
    report.predictions[t].axis = e.key.axis;
    report.predictions[t].index = e.key.index;
    ++t;
  }

  sink.write_text("report.json", dump(to_json(report)));
  sink.write_text("predictions.csv", slice_predictions_csv(report));
  sink.write_text("curves.csv", curves_csv(report.curves));
  write_loss_curves_png(sink.path_for("curves.png"), report.curves.train_loss,
                        report.curves.val_loss, report.curves.best_epoch);
  nlohmann::ordered_json meta;
  meta["experiment"] = cfg.experiment;
  meta["mode"] = to_string(cfg.mode);
  meta["best_epoch"] = report.curves.best_epoch;
  meta["seed"] = cfg.seed;
  save_checkpoint(sink.path_for("checkpoint.ckpt").string(), cfg.model,
                  trained.best_params, meta);

  outcome.exit_code = audit.clean ? 0 : 3;
  outcome.slice_report = std::move(report);
}

}  // namespace

std::string to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::kCv3d: return "cv3d";
    case ExperimentMode::kHoldoutSliceSubjectLevel: return "holdout_slice_subjectlevel";
    case ExperimentMode::kSliceLevelDiagnostic: return "slice_level_diagnostic";
  }
  throw Error("unreachable experiment mode");
}

ExperimentMode experiment_mode_from_string(const std::string& s) {
  if (s == "cv3d") return ExperimentMode::kCv3d;
  if (s == "holdout_slice_subjectlevel") return ExperimentMode::kHoldoutSliceSubjectLevel;
  if (s == "slice_level_diagnostic") return ExperimentMode::kSliceLevelDiagnostic;
  throw ConfigError("unknown mode '" + s +
                    "' (expected cv3d, holdout_slice_subjectlevel, or "
                    "slice_level_diagnostic)");
}

void validate(const RunConfig& config) {
  if (config.experiment.empty()) throw ConfigError("experiment name must not be empty");
  if (config.experiment.find('/') != std::string::npos ||
      config.experiment.find('\\') != std::string::npos ||
      config.experiment.find("..") != std::string::npos) {
    throw ConfigError("experiment name must be a plain directory name");
  }
  if (config.manifest.empty()) throw ConfigError("config is missing 'manifest'");
  if (config.out_dir.empty()) throw ConfigError("config is missing 'out_dir'");
  if (config.jobs < 1) throw ConfigError("jobs must be >= 1");
  if (config.mode == ExperimentMode::kCv3d) {
    if (config.folds < 2) throw ConfigError("cv3d needs folds >= 2");
    if (config.val_fraction <= 0.0 || config.val_fraction >= 1.0) {
      throw ConfigError("val_fraction must lie in (0, 1)");
    }
    if (config.model.spatial_rank != 3) {
      throw ConfigError("cv3d runs the volumetric model (spatial_rank 3)");
    }
  } else {
    if (config.model.spatial_rank != 2) {
      throw ConfigError("slice protocols run the 2D model (spatial_rank 2)");
    }
    if (config.slice_axis < 0 || config.slice_axis > 2) {
      throw ConfigError("slice_axis must be 0, 1, or 2");
    }
    if (config.slices_per_subject < 1) {
      throw ConfigError("slices_per_subject must be >= 1");
    }
    double sum = 0.0;
    for (double f : config.holdout_fractions) {
      if (f <= 0.0 || f >= 1.0) {
        throw ConfigError("holdout_fractions entries must lie in (0, 1)");
      }
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("holdout_fractions must sum to 1");
    }
  }
  validate(config.model);
  validate(config.training);
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  try {
    for (const char* field : {"experiment", "mode", "manifest", "out_dir"}) {
      if (!j.contains(field)) {
        throw ConfigError(std::string("config is missing required field '") + field +
                          "'");
      }
    }
    cfg.experiment = j["experiment"].get<std::string>();
    cfg.mode = experiment_mode_from_string(j["mode"].get<std::string>());
    cfg.manifest = j["manifest"].get<std::string>();
    if (j.contains("data_root")) cfg.data_root = j["data_root"].get<std::string>();
    cfg.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("deterministic")) cfg.deterministic = j["deterministic"].get<bool>();
    if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
    if (j.contains("folds")) cfg.folds = j["folds"].get<int>();
    if (j.contains("val_fraction")) cfg.val_fraction = j["val_fraction"].get<double>();
    if (j.contains("stratify_on")) {
      cfg.stratify_on = stratify_on_from_string(j["stratify_on"].get<std::string>());
    }
    if (j.contains("holdout_fractions")) {
      const auto v = j["holdout_fractions"].get<std::vector<double>>();
      if (v.size() != 3) {
        throw ConfigError("holdout_fractions must list train, val, and test");
      }
      std::copy(v.begin(), v.end(), cfg.holdout_fractions.begin());
    }
    if (j.contains("slice_axis")) cfg.slice_axis = j["slice_axis"].get<int>();
    if (j.contains("slices_per_subject")) {
      cfg.slices_per_subject = j["slices_per_subject"].get<int>();
    }

    const ModelConfig model_base = cfg.mode == ExperimentMode::kCv3d
                                       ? ModelConfig{}
                                       : ModelConfig::slice_variant();
    cfg.model = j.contains("model") ? model_config_from_json(j["model"], model_base)
                                    : model_base;

    TrainingConfig train_base;
    train_base.seed = cfg.seed;
    train_base.deterministic = cfg.deterministic;
    cfg.training = j.contains("training")
                       ? training_config_from_json(j["training"], train_base)
                       : train_base;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

nlohmann::ordered_json to_json(const RunConfig& config) {
  nlohmann::ordered_json j;
  j["experiment"] = config.experiment;
  j["mode"] = to_string(config.mode);
  j["manifest"] = config.manifest.string();
  j["data_root"] = config.data_root.string();
  j["out_dir"] = config.out_dir.string();
  j["seed"] = config.seed;
  j["deterministic"] = config.deterministic;
  j["jobs"] = config.jobs;
  j["folds"] = config.folds;
  j["val_fraction"] = config.val_fraction;
  j["stratify_on"] = to_string(config.stratify_on);
  j["holdout_fractions"] = config.holdout_fractions;
  j["slice_axis"] = config.slice_axis;
  j["slices_per_subject"] = config.slices_per_subject;
  j["model"] = to_json(config.model);
  j["training"] = to_json(config.training);
  return j;
}

void resolve_config_paths(RunConfig& config, const std::filesystem::path& base_dir) {
  const auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = (base_dir / p).lexically_normal();
  };
  resolve(config.manifest);
  resolve(config.data_root);
  resolve(config.out_dir);
}

nlohmann::ordered_json to_json(const SliceProtocolReport& report) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(report.mode);
  j["leaky_by_design"] = report.mode == ExperimentMode::kSliceLevelDiagnostic;
  j["seed"] = report.seed;
  j["slice_axis"] = report.slice_axis;
  j["slices_per_subject"] = report.slices_per_subject;
  j["valid"] = report.valid;
  j["audit"] = to_json(report.audit);
  j["n_subjects"] = report.n_subjects;
  j["slice_counts"] = {{"train", report.slice_counts[0]},
                       {"val", report.slice_counts[1]},
                       {"test", report.slice_counts[2]}};
  j["best_epoch"] = report.curves.best_epoch;
  j["epochs_trained"] = report.curves.train_loss.size();
  nlohmann::ordered_json m;
  m["accuracy_pct"] = report.test_metrics.accuracy_pct;
  if (report.test_metrics.roc_auc) {
    m["roc_auc"] = *report.test_metrics.roc_auc;
  } else {
    m["roc_auc"] = nullptr;
  }
  m["macro_f1"] = report.test_metrics.macro_f1;
  j["test_metrics"] = std::move(m);
  j["train_loss"] = report.curves.train_loss;
  j["val_loss"] = report.curves.val_loss;
  return j;
}

std::string slice_predictions_csv(const SliceProtocolReport& report) {
  const std::size_t n_classes =
      report.predictions.empty() ? 0 : report.predictions.front().probs.size();
  std::string csv = "subject_id,axis,index,truth,predicted";
  for (std::size_t c = 0; c < n_classes; ++c) csv += ",p_class" + std::to_string(c);
  csv += "\n";
  for (const SlicePrediction& p : report.predictions) {
    csv += p.subject_id + "," + std::to_string(p.axis) + "," + std::to_string(p.index) +
           "," + std::to_string(p.truth) + "," + std::to_string(p.predicted);
    for (double v : p.probs) csv += "," + format_double(v);
    csv += "\n";
  }
  return csv;
}

RunOutcome run_experiment(const RunConfig& config_in) {
  RunConfig cfg = config_in;
  validate(cfg);
  if (const char* env = std::getenv("VOLFUSE_DATA_ROOT"); env && *env) {
    cfg.data_root = env;
  }
  if (cfg.data_root.empty()) cfg.data_root = cfg.manifest.parent_path();
  if (cfg.data_root.empty()) cfg.data_root = ".";

  const std::vector<SubjectRecord> records = read_manifest(cfg.manifest);

  ArtifactSink sink(cfg.out_dir / cfg.experiment);
  sink.write_text("config.json", dump(to_json(cfg)));

  RunOutcome outcome;
  outcome.experiment_dir = sink.dir();
  if (cfg.mode == ExperimentMode::kCv3d) {
    run_cv3d(cfg, records, sink, outcome);
  } else {
    run_slice_protocol(cfg, records, sink, outcome);
  }
  sink.write_hash_manifest();
  return outcome;
}

std::string sha256_hex_of_file(const std::filesystem::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw Error("cannot open '" + file.string() + "' for hashing");

  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("digest context allocation failed");
  if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("SHA-256 initialization failed");
  }
  char buf[1 << 16];
  while (true) {
    f.read(buf, sizeof(buf));
    const std::streamsize got = f.gcount();
    if (got > 0 && EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(got)) != 1) {
      EVP_MD_CTX_free(ctx);
      throw Error("SHA-256 update failed");
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  if (f.bad()) {
    EVP_MD_CTX_free(ctx);
    throw Error("read error while hashing '" + file.string() + "'");
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);

  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0x0F]);
  }
  return out;
}

}  // namespace volfuse
