// The late-fusion classifier: one independent CNN encoder per modality
// (Conv-BN-ReLU ×3 with two max pools, then global average pooling), the
// 64-d embeddings concatenated and classified by a small MLP head.
//
// Everything is templated on the scalar so the whole network can run in
// double for finite-difference verification.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "volfuse/layers.hpp"
#include "volfuse/rng.hpp"
#include "volfuse/tensor.hpp"

namespace volfuse {

struct ModelConfig {
  std::vector<std::string> modalities = {"t1", "gm", "wm", "csf"};
  std::array<int, 3> encoder_channels = {16, 32, 64};
  int embedding_dim = 64;  // equals the last encoder channel count (GAP output)
  int fused_dim = 256;     // embedding_dim × modality count
  int head_hidden = 128;
  double dropout_p = 0.30;
  int n_classes = 2;
  int spatial_rank = 3;  // 3 for volumes, 2 for the slice-based variant
  int conv_kernel = 3;
  int pool_kernel = 2;

  // Single-modality 2D model with a 4-way head, used by the slice protocols.
  static ModelConfig slice_variant() {
    ModelConfig c;
    c.modalities = {"t1"};
    c.fused_dim = c.embedding_dim;
    c.n_classes = 4;
    c.spatial_rank = 2;
    return c;
  }
};

void validate(const ModelConfig& config);
nlohmann::ordered_json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

// Flat name → tensor registry. Names follow
//   enc.<modality>.{conv1,conv2,conv3}.{weight,bias}
//   enc.<modality>.{bn1,bn2,bn3}.{gamma,beta,running_mean,running_var}
//   head.{fc1,fc2}.{weight,bias}
// Running statistics are state, not trainable parameters.
template <typename T>
struct NetworkParameters {
  std::map<std::string, Tensor<T>> tensors;

  Tensor<T>& at(const std::string& name) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("unknown parameter tensor '" + name + "'");
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("unknown parameter tensor '" + name + "'");
    return it->second;
  }

  template <typename U>
  NetworkParameters<U> cast() const {
    NetworkParameters<U> out;
    for (const auto& [name, t] : tensors) out.tensors[name] = t.template cast<U>();
    return out;
  }
};

inline bool is_trainable_parameter(const std::string& name) {
  return name.find("running_") == std::string::npos;
}

template <typename T>
std::size_t parameter_count(const NetworkParameters<T>& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params.tensors) {
    if (is_trainable_parameter(name)) n += t.size();
  }
  return n;
}

template <typename T>
bool all_finite(const NetworkParameters<T>& params) {
  for (const auto& [name, t] : params.tensors) {
    for (T v : t.data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
  }
  return true;
}

enum class RunMode { kTrain, kEval };

template <typename T>
struct BranchTrace {
  Tensor<T> input;         // [N, 1, Z, Y, X] — this branch's channel
  Tensor<T> relu1, relu2;  // post-ReLU block outputs (pool inputs)
  Tensor<T> pool1, pool2;
  std::vector<std::size_t> argmax1, argmax2;
  BatchNormCache<T> bn1, bn2, bn3;
  Tensor<T> relu3;      // last-block activation maps (saliency reads these)
  Tensor<T> embedding;  // [N, embedding_dim]
};

template <typename T>
struct ForwardTrace {
  Tensor<T> logits;  // [N, n_classes]
  std::vector<BranchTrace<T>> branches;
  Tensor<T> fused;      // [N, fused_dim]
  Tensor<T> head_relu;  // [N, head_hidden]
  Tensor<T> head_dropout;
  std::vector<T> dropout_mask;
  bool train_mode = false;
};

template <typename T>
class FusionNetwork {
 public:
  explicit FusionNetwork(ModelConfig config) : cfg_(std::move(config)) {
    validate(cfg_);
    conv_geom_ = cfg_.spatial_rank == 3 ? ConvGeom::same_pad_3d(cfg_.conv_kernel)
                                        : ConvGeom::same_pad_2d(cfg_.conv_kernel);
    pool_z_ = cfg_.spatial_rank == 3 ? cfg_.pool_kernel : 1;
  }

  const ModelConfig& config() const { return cfg_; }

  NetworkParameters<T> init_parameters(std::uint64_t seed) const {
    NetworkParameters<T> p;
    const std::size_t kz = conv_geom_.kz, ky = conv_geom_.ky, kx = conv_geom_.kx;
    for (const auto& mod : cfg_.modalities) {
      std::size_t cin = 1;
      for (int block = 0; block < 3; ++block) {
        const std::size_t cout = cfg_.encoder_channels[block];
        const std::string conv = "enc." + mod + ".conv" + std::to_string(block + 1);
        const std::string bn = "enc." + mod + ".bn" + std::to_string(block + 1);
        p.tensors[conv + ".weight"] = Tensor<T>({cout, cin, kz, ky, kx});
        p.tensors[conv + ".bias"] = Tensor<T>({cout});
        p.tensors[bn + ".gamma"] = Tensor<T>({cout});
        p.tensors[bn + ".beta"] = Tensor<T>({cout});
        p.tensors[bn + ".running_mean"] = Tensor<T>({cout});
        p.tensors[bn + ".running_var"] = Tensor<T>({cout});
        p.tensors[bn + ".gamma"].fill(T(1));
        p.tensors[bn + ".running_var"].fill(T(1));
        cin = cout;
      }
    }
    p.tensors["head.fc1.weight"] =
        Tensor<T>({static_cast<std::size_t>(cfg_.head_hidden),
                   static_cast<std::size_t>(cfg_.fused_dim)});
    p.tensors["head.fc1.bias"] = Tensor<T>({static_cast<std::size_t>(cfg_.head_hidden)});
    p.tensors["head.fc2.weight"] =
        Tensor<T>({static_cast<std::size_t>(cfg_.n_classes),
                   static_cast<std::size_t>(cfg_.head_hidden)});
    p.tensors["head.fc2.bias"] = Tensor<T>({static_cast<std::size_t>(cfg_.n_classes)});

    // Fan-in-scaled normal init (ReLU gain) for weights; each tensor draws
    // from its own stream keyed on the name, so values do not depend on
    // registry enumeration order.
    for (auto& [name, t] : p.tensors) {
      if (name.size() > 7 && name.compare(name.size() - 7, 7, ".weight") == 0) {
        std::size_t fan_in = 1;
        for (std::size_t i = 1; i < t.shape.size(); ++i) fan_in *= t.shape[i];
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        Rng rng(derive_seed(seed, name_hash(name)));
        for (T& v : t.data) v = static_cast<T>(rng.normal() * stddev);
      }
    }
    return p;
  }

  ForwardTrace<T> forward(NetworkParameters<T>& params, const Tensor<T>& batch,
                          RunMode mode, Rng* dropout_rng = nullptr) const {
    check_input(batch);
    const std::size_t N = batch.dim(0);
    const std::size_t M = cfg_.modalities.size();
    const std::size_t S = batch.size() / (N * M);

    ForwardTrace<T> trace;
    trace.train_mode = mode == RunMode::kTrain;
    trace.branches.resize(M);
    trace.fused = Tensor<T>({N, static_cast<std::size_t>(cfg_.fused_dim)});

    for (std::size_t b = 0; b < M; ++b) {
      BranchTrace<T>& br = trace.branches[b];
      // Route channel b to encoder b alone.
      br.input = Tensor<T>({N, 1, batch.dim(2), batch.dim(3), batch.dim(4)});
      for (std::size_t n = 0; n < N; ++n) {
        std::copy_n(batch.ptr() + (n * M + b) * S, S, br.input.ptr() + n * S);
      }
      run_branch(params, cfg_.modalities[b], br, mode);
      for (std::size_t n = 0; n < N; ++n) {
        std::copy_n(br.embedding.ptr() + n * cfg_.embedding_dim, cfg_.embedding_dim,
                    trace.fused.ptr() + n * cfg_.fused_dim + b * cfg_.embedding_dim);
      }
    }

    Tensor<T> h1 = linear_forward(trace.fused, params.at("head.fc1.weight"),
                                  params.at("head.fc1.bias"));
    trace.head_relu = relu_forward(h1);
    if (mode == RunMode::kTrain && cfg_.dropout_p > 0.0) {
      if (!dropout_rng) throw ConfigError("train-mode forward needs a dropout RNG");
      trace.head_dropout = dropout_forward(trace.head_relu, cfg_.dropout_p,
                                           *dropout_rng, trace.dropout_mask);
    } else {
      trace.head_dropout = trace.head_relu;
      trace.dropout_mask.assign(trace.head_relu.size(), T(1));
    }
    trace.logits = linear_forward(trace.head_dropout, params.at("head.fc2.weight"),
                                  params.at("head.fc2.bias"));
    return trace;
  }

  // Mean cross-entropy and gradients for every trainable tensor. Runs a
  // train-mode forward (so BN running statistics advance) unless eval_mode.
  T loss_and_gradients(NetworkParameters<T>& params, const Tensor<T>& batch,
                       const std::vector<int>& labels,
                       const std::vector<double>& class_weights, Rng* dropout_rng,
                       std::map<std::string, Tensor<T>>& grads,
                       Tensor<T>* probs = nullptr) const {
    ForwardTrace<T> trace = forward(params, batch, RunMode::kTrain, dropout_rng);
    Tensor<T> grad_logits;
    const T loss =
        softmax_cross_entropy(trace.logits, labels, class_weights, &grad_logits, probs);

    grads.clear();
    for (const auto& [name, t] : params.tensors) {
      if (is_trainable_parameter(name)) grads[name] = Tensor<T>(t.shape);
    }

    // Head backward.
    Tensor<T> grad_hd;
    linear_backward(trace.head_dropout, params.at("head.fc2.weight"), grad_logits,
                    &grad_hd, grads.at("head.fc2.weight"), grads.at("head.fc2.bias"));
    Tensor<T> grad_hr = dropout_backward(grad_hd, trace.dropout_mask);
    Tensor<T> grad_h1 = relu_backward(grad_hr, trace.head_relu);
    Tensor<T> grad_fused;
    linear_backward(trace.fused, params.at("head.fc1.weight"), grad_h1, &grad_fused,
                    grads.at("head.fc1.weight"), grads.at("head.fc1.bias"));

    const std::size_t N = batch.dim(0);
    for (std::size_t b = 0; b < cfg_.modalities.size(); ++b) {
      Tensor<T> grad_emb({N, static_cast<std::size_t>(cfg_.embedding_dim)});
      for (std::size_t n = 0; n < N; ++n) {
        std::copy_n(grad_fused.ptr() + n * cfg_.fused_dim + b * cfg_.embedding_dim,
                    cfg_.embedding_dim, grad_emb.ptr() + n * cfg_.embedding_dim);
      }
      backprop_branch(params, grads, cfg_.modalities[b], trace.branches[b], grad_emb);
    }
    return loss;
  }

  // Gradient of logit[target_class] w.r.t. branch `branch`'s last-block
  // activation maps (the GradCAM g_k). Works on an eval-mode trace; the path
  // from those activations to the logit is GAP → head only.
  Tensor<T> branch_activation_gradient(const ForwardTrace<T>& trace,
                                       const NetworkParameters<T>& params,
                                       int target_class, int branch) const {
    if (branch < 0 || branch >= static_cast<int>(cfg_.modalities.size())) {
      throw ConfigError("branch index out of range");
    }
    if (target_class < 0 || target_class >= cfg_.n_classes) {
      throw ConfigError("target class out of range");
    }
    const std::size_t N = trace.logits.dim(0);
    Tensor<T> grad_logits({N, static_cast<std::size_t>(cfg_.n_classes)});
    for (std::size_t n = 0; n < N; ++n) {
      grad_logits.data[n * cfg_.n_classes + target_class] = T(1);
    }
    // fc2 backward (weights untouched — pass scratch accumulators).
    Tensor<T> scratch_w2(params.at("head.fc2.weight").shape);
    Tensor<T> scratch_b2(params.at("head.fc2.bias").shape);
    Tensor<T> grad_hd;
    linear_backward(trace.head_dropout, params.at("head.fc2.weight"), grad_logits,
                    &grad_hd, scratch_w2, scratch_b2);
    Tensor<T> grad_hr = dropout_backward(grad_hd, trace.dropout_mask);
    Tensor<T> grad_h1 = relu_backward(grad_hr, trace.head_relu);
    Tensor<T> scratch_w1(params.at("head.fc1.weight").shape);
    Tensor<T> scratch_b1(params.at("head.fc1.bias").shape);
    Tensor<T> grad_fused;
    linear_backward(trace.fused, params.at("head.fc1.weight"), grad_h1, &grad_fused,
                    scratch_w1, scratch_b1);

    Tensor<T> grad_emb({N, static_cast<std::size_t>(cfg_.embedding_dim)});
    for (std::size_t n = 0; n < N; ++n) {
      std::copy_n(grad_fused.ptr() + n * cfg_.fused_dim + branch * cfg_.embedding_dim,
                  cfg_.embedding_dim, grad_emb.ptr() + n * cfg_.embedding_dim);
    }
    return gap_backward(grad_emb, trace.branches[branch].relu3.shape);
  }

  static std::uint64_t name_hash(const std::string& name) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : name) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }

 private:
  void check_input(const Tensor<T>& batch) const {
    if (batch.shape.size() != 5) {
      throw ShapeError("expected a [N, channels, Z, Y, X] batch");
    }
    if (batch.dim(1) != cfg_.modalities.size()) {
      throw ShapeError("batch has " + std::to_string(batch.dim(1)) +
                       " channels; the model expects " +
                       std::to_string(cfg_.modalities.size()));
    }
    const std::size_t min_side = static_cast<std::size_t>(cfg_.pool_kernel) *
                                 cfg_.pool_kernel * 2;  // two pools leave >= 2
    const bool z_ok = cfg_.spatial_rank == 3 ? batch.dim(2) >= min_side
                                             : batch.dim(2) == 1;
    if (!z_ok || batch.dim(3) < min_side || batch.dim(4) < min_side) {
      throw ShapeError("spatial dims too small: two pools must leave at least "
                       "2 voxels per active axis (min side " +
                       std::to_string(min_side) + ")");
    }
  }

  void run_branch(NetworkParameters<T>& params, const std::string& mod,
                  BranchTrace<T>& br, RunMode mode) const {
    const std::string e = "enc." + mod + ".";
    auto bn = [&](const Tensor<T>& x, int i, BatchNormCache<T>& cache) {
      const std::string b = e + "bn" + std::to_string(i);
      if (mode == RunMode::kTrain) {
        return batchnorm_forward_train(x, params.at(b + ".gamma"), params.at(b + ".beta"),
                                       params.at(b + ".running_mean"),
                                       params.at(b + ".running_var"), cache);
      }
      return batchnorm_forward_eval(x, params.at(b + ".gamma"), params.at(b + ".beta"),
                                    params.at(b + ".running_mean"),
                                    params.at(b + ".running_var"));
    };

    Tensor<T> z1 = conv_forward(br.input, params.at(e + "conv1.weight"),
                                params.at(e + "conv1.bias"), conv_geom_);
    br.relu1 = relu_forward(bn(z1, 1, br.bn1));
    br.pool1 = maxpool_forward(br.relu1, pool_z_, cfg_.pool_kernel, cfg_.pool_kernel,
                               br.argmax1);
    Tensor<T> z2 = conv_forward(br.pool1, params.at(e + "conv2.weight"),
                                params.at(e + "conv2.bias"), conv_geom_);
    br.relu2 = relu_forward(bn(z2, 2, br.bn2));
    br.pool2 = maxpool_forward(br.relu2, pool_z_, cfg_.pool_kernel, cfg_.pool_kernel,
                               br.argmax2);
    Tensor<T> z3 = conv_forward(br.pool2, params.at(e + "conv3.weight"),
                                params.at(e + "conv3.bias"), conv_geom_);
    br.relu3 = relu_forward(bn(z3, 3, br.bn3));
    br.embedding = gap_forward(br.relu3);
  }

  void backprop_branch(const NetworkParameters<T>& params,
                       std::map<std::string, Tensor<T>>& grads, const std::string& mod,
                       const BranchTrace<T>& br, const Tensor<T>& grad_emb) const {
    const std::string e = "enc." + mod + ".";
    Tensor<T> g = gap_backward(grad_emb, br.relu3.shape);
    g = relu_backward(g, br.relu3);
    g = batchnorm_backward(g, params.at(e + "bn3.gamma"), br.bn3,
                           grads.at(e + "bn3.gamma"), grads.at(e + "bn3.beta"));
    Tensor<T> g_pool2;
    conv_backward(br.pool2, params.at(e + "conv3.weight"), conv_geom_, g, &g_pool2,
                  grads.at(e + "conv3.weight"), grads.at(e + "conv3.bias"));
    g = maxpool_backward(g_pool2, br.argmax2, br.relu2.shape);
    g = relu_backward(g, br.relu2);
    g = batchnorm_backward(g, params.at(e + "bn2.gamma"), br.bn2,
                           grads.at(e + "bn2.gamma"), grads.at(e + "bn2.beta"));
    Tensor<T> g_pool1;
    conv_backward(br.pool1, params.at(e + "conv2.weight"), conv_geom_, g, &g_pool1,
                  grads.at(e + "conv2.weight"), grads.at(e + "conv2.bias"));
    g = maxpool_backward(g_pool1, br.argmax1, br.relu1.shape);
    g = relu_backward(g, br.relu1);
    g = batchnorm_backward(g, params.at(e + "bn1.gamma"), br.bn1,
                           grads.at(e + "bn1.gamma"), grads.at(e + "bn1.beta"));
    conv_backward(br.input, params.at(e + "conv1.weight"), conv_geom_, g,
                  static_cast<Tensor<T>*>(nullptr), grads.at(e + "conv1.weight"),
                  grads.at(e + "conv1.bias"));
  }

  ModelConfig cfg_;
  ConvGeom conv_geom_;
  int pool_z_ = 2;
};

// ---------------------------------------------------------------------------
// Checkpoint container: magic + JSON header (config, metadata, tensor
// manifest) + raw little-endian float32 tensor data in manifest order.
// ---------------------------------------------------------------------------

struct Checkpoint {
  ModelConfig config;
  NetworkParameters<float> params;
  nlohmann::ordered_json metadata;
};

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const NetworkParameters<float>& params,
                     const nlohmann::ordered_json& metadata);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace volfuse
