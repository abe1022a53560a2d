#include "volfuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "volfuse/errors.hpp"
#include "volfuse/manifest.hpp"

namespace volfuse {

int subject_class_label(const SubjectRecord& rec, int n_classes) {
  if (n_classes == 2) {
    return rec.label().value == BinaryLabel::kDemented ? 1 : 0;
  }
  if (n_classes == 4) return static_cast<int>(rec.cdr);
  throw ConfigError("subject labels are defined for 2- or 4-class models only");
}

namespace {

// RNG stream tags (combined with the fold/config seed via derive_seed).
constexpr std::uint64_t kInitStream = 0x1247;
constexpr std::uint64_t kDropoutStream = 0xD407;
constexpr std::uint64_t kEpochShuffleStream = 0xE70C0000;
constexpr std::uint64_t kFoldStream = 0xF01D0001;

// Inverse-frequency weights normalized so present classes average to 1;
// classes absent from the training set get weight 0 (they contribute no
// samples, and an infinite weight would poison the loss).
std::vector<double> make_class_weights(const Dataset& train, int n_classes,
                                       ClassWeighting weighting) {
  if (weighting == ClassWeighting::kNone) return {};
  std::vector<std::size_t> counts(n_classes, 0);
  for (const auto& s : train) ++counts[s.label];
  const std::size_t present =
      std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  std::vector<double> w(n_classes, 0.0);
  for (int c = 0; c < n_classes; ++c) {
    if (counts[c] > 0) {
      w[c] = static_cast<double>(train.size()) /
             (static_cast<double>(present) * static_cast<double>(counts[c]));
    }
  }
  return w;
}

Tensor<float> assemble_batch(const Dataset& data, const std::vector<std::size_t>& idx,
                             std::size_t begin, std::size_t end) {
  const auto& first = data[idx[begin]].input;
  std::vector<std::size_t> shape = first.shape;
  shape.insert(shape.begin(), end - begin);
  Tensor<float> batch(shape);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& s = data[idx[i]].input;
    if (s.shape != first.shape) {
      throw ShapeError("sample '" + data[idx[i]].sample_id +
                       "' has a different shape than the rest of the batch");
    }
    std::copy(s.data.begin(), s.data.end(), batch.ptr() + (i - begin) * s.size());
  }
  return batch;
}

double batch_weight_sum(const Dataset& data, const std::vector<std::size_t>& idx,
                        std::size_t begin, std::size_t end,
                        const std::vector<double>& class_weights) {
  if (class_weights.empty()) return static_cast<double>(end - begin);
  double w = 0.0;
  for (std::size_t i = begin; i < end; ++i) w += class_weights[data[idx[i]].label];
  return w;
}

struct AdamState {
  std::map<std::string, Tensor<float>> m, v;
  long step = 0;

  void init(const NetworkParameters<float>& params) {
    for (const auto& [name, t] : params.tensors) {
      if (is_trainable_parameter(name)) {
        m[name] = Tensor<float>(t.shape);
        v[name] = Tensor<float>(t.shape);
      }
    }
  }

  void update(NetworkParameters<float>& params,
              const std::map<std::string, Tensor<float>>& grads,
              const TrainingConfig& cfg) {
    ++step;
    const double bias1 = 1.0 - std::pow(cfg.beta1, step);
    const double bias2 = 1.0 - std::pow(cfg.beta2, step);
    for (auto& [name, g] : grads) {
      Tensor<float>& mt = m.at(name);
      Tensor<float>& vt = v.at(name);
      Tensor<float>& w = params.at(name);
      for (std::size_t i = 0; i < g.size(); ++i) {
        mt.data[i] = static_cast<float>(cfg.beta1 * mt.data[i] +
                                        (1.0 - cfg.beta1) * g.data[i]);
        vt.data[i] = static_cast<float>(
            cfg.beta2 * vt.data[i] +
            (1.0 - cfg.beta2) * static_cast<double>(g.data[i]) * g.data[i]);
        const double m_hat = mt.data[i] / bias1;
        const double v_hat = vt.data[i] / bias2;
        w.data[i] -= static_cast<float>(cfg.learning_rate * m_hat /
                                        (std::sqrt(v_hat) + cfg.adam_eps));
      }
    }
  }
};

}  // namespace

std::string to_string(ClassWeighting w) {
  return w == ClassWeighting::kNone ? "none" : "inverse_frequency";
}

ClassWeighting class_weighting_from_string(const std::string& s) {
  if (s == "none") return ClassWeighting::kNone;
  if (s == "inverse_frequency") return ClassWeighting::kInverseFrequency;
  throw ConfigError("unknown class_weighting '" + s + "'");
}

void validate(const TrainingConfig& config) {
  if (config.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (config.max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (config.early_stop_patience < 1 ||
      config.early_stop_patience >= config.max_epochs) {
    throw ConfigError("early_stop_patience must lie in [1, max_epochs)");
  }
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0)) {
    throw ConfigError("Adam moment decays must lie in [0, 1)");
  }
}

nlohmann::ordered_json to_json(const TrainingConfig& config) {
  nlohmann::ordered_json j;
  j["learning_rate"] = config.learning_rate;
  j["beta1"] = config.beta1;
  j["beta2"] = config.beta2;
  j["adam_eps"] = config.adam_eps;
  j["batch_size"] = config.batch_size;
  j["max_epochs"] = config.max_epochs;
  j["early_stop_patience"] = config.early_stop_patience;
  j["class_weighting"] = to_string(config.weighting);
  j["seed"] = config.seed;
  j["deterministic"] = config.deterministic;
  return j;
}

TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig base) {
  TrainingConfig c = std::move(base);
  try {
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
    if (j.contains("adam_eps")) c.adam_eps = j["adam_eps"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("max_epochs")) c.max_epochs = j["max_epochs"].get<int>();
    if (j.contains("early_stop_patience")) {
      c.early_stop_patience = j["early_stop_patience"].get<int>();
    }
    if (j.contains("class_weighting")) {
      c.weighting = class_weighting_from_string(j["class_weighting"].get<std::string>());
    }
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("deterministic")) c.deterministic = j["deterministic"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  validate(c);
  return c;
}

double evaluate_loss(const FusionNetwork<float>& net, NetworkParameters<float>& params,
                     const Dataset& data, const std::vector<double>& class_weights,
                     int batch_size) {
  if (data.empty()) throw DegenerateInputError("cannot evaluate an empty dataset");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  double loss_sum = 0.0, weight_sum = 0.0;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    Tensor<float> batch = assemble_batch(data, idx, b, e);
    std::vector<int> labels;
    for (std::size_t i = b; i < e; ++i) labels.push_back(data[idx[i]].label);
    auto trace = net.forward(params, batch, RunMode::kEval);
    const double w = batch_weight_sum(data, idx, b, e, class_weights);
    loss_sum += static_cast<double>(softmax_cross_entropy<float>(
                    trace.logits, labels, class_weights, nullptr)) *
                w;
    weight_sum += w;
  }
  return loss_sum / weight_sum;
}

std::vector<std::vector<double>> predict_probabilities(
    const FusionNetwork<float>& net, NetworkParameters<float>& params,
    const Dataset& data, int batch_size) {
  std::vector<std::vector<double>> rows;
  rows.reserve(data.size());
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  const int C = net.config().n_classes;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    Tensor<float> batch = assemble_batch(data, idx, b, e);
    auto trace = net.forward(params, batch, RunMode::kEval);
    for (std::size_t n = 0; n < e - b; ++n) {
      const float* l = trace.logits.ptr() + n * C;
      double m = l[0];
      for (int c = 1; c < C; ++c) m = std::max(m, static_cast<double>(l[c]));
      double denom = 0.0;
      for (int c = 0; c < C; ++c) denom += std::exp(l[c] - m);
      std::vector<double> row(C);
      for (int c = 0; c < C; ++c) row[c] = std::exp(l[c] - m) / denom;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

TrainOutcome train_fold(const Dataset& train, const Dataset& val,
                        const ModelConfig& model_config,
                        const TrainingConfig& train_config) {
  validate(train_config);
  if (train.empty()) throw DegenerateInputError("empty training set");
  if (val.empty()) throw DegenerateInputError("empty validation set");
  std::set<int> train_classes;
  for (const auto& s : train) train_classes.insert(s.label);
  if (train_classes.size() < 2) {
    throw StratificationError("training set contains a single class; nothing to fit");
  }

  const FusionNetwork<float> net(model_config);
  NetworkParameters<float> params =
      net.init_parameters(derive_seed(train_config.seed, kInitStream));
  const std::vector<double> class_weights =
      make_class_weights(train, model_config.n_classes, train_config.weighting);

  AdamState adam;
  adam.init(params);
  Rng dropout_rng(derive_seed(train_config.seed, kDropoutStream));

  TrainOutcome out;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(train_config.seed,
                                kEpochShuffleStream + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(idx);

    double loss_sum = 0.0, weight_sum = 0.0;
    for (std::size_t b = 0; b < train.size();
         b += static_cast<std::size_t>(train_config.batch_size)) {
      const std::size_t e =
          std::min(train.size(), b + static_cast<std::size_t>(train_config.batch_size));
      Tensor<float> batch = assemble_batch(train, idx, b, e);
      std::vector<int> labels;
      for (std::size_t i = b; i < e; ++i) labels.push_back(train[idx[i]].label);

      std::map<std::string, Tensor<float>> grads;
      const float loss = net.loss_and_gradients(params, batch, labels, class_weights,
                                                &dropout_rng, grads);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("non-finite training loss at epoch " +
                               std::to_string(epoch));
      }
      adam.update(params, grads, train_config);
      const double w = batch_weight_sum(train, idx, b, e, class_weights);
      loss_sum += static_cast<double>(loss) * w;
      weight_sum += w;
    }
    const double train_loss = loss_sum / weight_sum;
    const double val_loss =
        evaluate_loss(net, params, val, class_weights, train_config.batch_size);
    if (!std::isfinite(val_loss)) {
      throw TrainingDiverged("non-finite validation loss at epoch " +
                             std::to_string(epoch));
    }
    out.curves.train_loss.push_back(train_loss);
    out.curves.val_loss.push_back(val_loss);

    // Strict improvement keeps the earlier epoch on ties.
    if (val_loss < best_val) {
      best_val = val_loss;
      out.curves.best_epoch = epoch;
      out.best_params = params;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= train_config.early_stop_patience) break;
    }
  }
  return out;
}

EvaluationReport cross_validate_plan(const std::vector<SubjectRecord>& records,
                                     const SampleLoader& loader, const FoldPlan& plan_in,
                                     const ModelConfig& model_config,
                                     const TrainingConfig& train_config,
                                     const CrossValidateHooks* hooks, int jobs) {
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  FoldPlan plan = plan_in;
  if (hooks && hooks->mutate_plan) hooks->mutate_plan(plan);

  EvaluationReport report;
  report.k = plan.k;
  report.seed = plan.seed;
  report.stratify_on = plan.stratify_on;
  report.audit = audit_leakage(plan);
  if (!report.audit.clean) {
    // Hard abort before any volume is loaded or any model trained.
    throw LeakageError("fold plan failed the leakage audit with " +
                       std::to_string(report.audit.violations.size()) +
                       " violation(s); aborting before training");
  }
  jobs = std::min(jobs, plan.k);

  std::map<std::string, const SubjectRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.subject_id, &r);

  std::map<std::string, Sample> cache;
  auto sample_of = [&](const std::string& id) -> const Sample& {
    auto it = cache.find(id);
    if (it == cache.end()) {
      const auto rec = by_id.find(id);
      if (rec == by_id.end()) {
        throw Error("plan references unknown subject '" + id + "'");
      }
      it = cache.emplace(id, loader(*rec->second)).first;
    }
    return it->second;
  };
  auto dataset_of = [&](const std::vector<std::string>& ids) {
    Dataset ds;
    ds.reserve(ids.size());
    for (const auto& id : ids) ds.push_back(sample_of(id));
    return ds;
  };

  // With worker threads the cache must be read-only, so load everything up
  // front on this thread; the sequential path stays lazy.
  if (jobs > 1) {
    for (const FoldMembers& fold : plan.folds) {
      for (const auto* ids : {&fold.train, &fold.val, &fold.test}) {
        for (const auto& id : *ids) sample_of(id);
      }
    }
  }

  std::vector<FoldResult> results(plan.k);
  auto run_fold = [&](int i) {
    const FoldMembers& fold = plan.folds[i];
    Dataset train = dataset_of(fold.train);
    Dataset val = dataset_of(fold.val);
    Dataset test = dataset_of(fold.test);

    TrainingConfig fold_cfg = train_config;
    fold_cfg.seed = derive_seed(train_config.seed,
                                kFoldStream + static_cast<std::uint64_t>(i));
    TrainOutcome outcome = train_fold(train, val, model_config, fold_cfg);

    const FusionNetwork<float> net(model_config);
    auto probs = predict_probabilities(net, outcome.best_params, test,
                                       train_config.batch_size);
    std::vector<int> truth;
    truth.reserve(test.size());
    for (const auto& s : test) truth.push_back(s.label);

    FoldResult result;
    result.fold_index = i;
    result.curves = std::move(outcome.curves);
    result.test_metrics = compute_metrics(truth, probs, model_config.n_classes);
    for (std::size_t s = 0; s < test.size(); ++s) {
      result.predictions.push_back({test[s].subject_id, i, truth[s], probs[s]});
    }
    result.best_params = std::move(outcome.best_params);
    results[i] = std::move(result);
  };

  if (jobs == 1) {
    for (int i = 0; i < plan.k; ++i) {
      run_fold(i);
      if (hooks && hooks->on_fold_complete) hooks->on_fold_complete(i, results[i]);
    }
  } else {
    // Fixed assignment: worker w owns folds w, w+jobs, w+2*jobs, ... — every
    // fold is self-contained (own RNG streams, own parameters), so the
    // schedule cannot change any number.
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w]() {
        try {
          for (int i = w; i < plan.k; i += jobs) run_fold(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    if (first_error) std::rethrow_exception(first_error);
    if (hooks && hooks->on_fold_complete) {
      for (int i = 0; i < plan.k; ++i) hooks->on_fold_complete(i, results[i]);
    }
  }

  std::vector<double> accs, aucs, f1s;
  for (const FoldResult& result : results) {
    accs.push_back(result.test_metrics.accuracy_pct);
    if (result.test_metrics.roc_auc) aucs.push_back(*result.test_metrics.roc_auc);
    f1s.push_back(result.test_metrics.macro_f1);
  }
  report.folds = std::move(results);

  report.accuracy_pct = aggregate_folds(accs);
  if (static_cast<int>(aucs.size()) == plan.k) report.roc_auc = aggregate_folds(aucs);
  report.macro_f1 = aggregate_folds(f1s);
  report.valid = report.audit.clean;
  return report;
}

EvaluationReport cross_validate(const std::vector<SubjectRecord>& records,
                                const SampleLoader& loader, int k, std::uint64_t seed,
                                const ModelConfig& model_config,
                                const TrainingConfig& train_config,
                                const CrossValidateHooks* hooks, int jobs) {
  const FoldPlan plan = stratified_subject_kfold(records, k, seed);
  return cross_validate_plan(records, loader, plan, model_config, train_config, hooks,
                             jobs);
}

nlohmann::ordered_json to_json(const EvaluationReport& report) {
  nlohmann::ordered_json j;
  j["k"] = report.k;
  j["seed"] = report.seed;
  j["stratify_on"] = to_string(report.stratify_on);
  j["valid"] = report.valid;
  j["audit"] = to_json(report.audit);
  auto stat = [](const AggregateStat& s) {
    nlohmann::ordered_json o;
    o["mean"] = s.mean;
    o["std"] = s.std_dev;
    return o;
  };
  j["aggregate"]["accuracy_pct"] = stat(report.accuracy_pct);
  j["aggregate"]["roc_auc"] = stat(report.roc_auc);
  j["aggregate"]["macro_f1"] = stat(report.macro_f1);
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : report.folds) {
    nlohmann::ordered_json fj;
    fj["fold"] = f.fold_index;
    fj["best_epoch"] = f.curves.best_epoch;
    fj["epochs_trained"] = f.curves.train_loss.size();
    nlohmann::ordered_json m;
    m["accuracy_pct"] = f.test_metrics.accuracy_pct;
    if (f.test_metrics.roc_auc) {
      m["roc_auc"] = *f.test_metrics.roc_auc;
    } else {
      m["roc_auc"] = nullptr;
    }
    m["macro_f1"] = f.test_metrics.macro_f1;
    m["confusion"] = f.test_metrics.confusion;
    fj["test_metrics"] = std::move(m);
    fj["train_loss"] = f.curves.train_loss;
    fj["val_loss"] = f.curves.val_loss;
    j["folds"].push_back(std::move(fj));
  }
  return j;
}

std::string predictions_csv(const EvaluationReport& report) {
  std::string csv = "subject_id,fold,truth,p_demented\n";
  for (const auto& fold : report.folds) {
    for (const auto& p : fold.predictions) {
      const double p_pos = p.probs.size() > 1 ? p.probs[1] : 0.0;
      csv += p.subject_id + "," + std::to_string(p.fold) + "," +
             std::to_string(p.truth) + "," + format_double(p_pos) + "\n";
    }
  }
  return csv;
}

std::string curves_csv(const FoldCurves& curves) {
  std::string csv = "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < curves.train_loss.size(); ++e) {
    csv += std::to_string(e + 1) + "," + format_double(curves.train_loss[e]) + "," +
           format_double(curves.val_loss[e]) + "\n";
  }
  return csv;
}

}  // namespace volfuse
