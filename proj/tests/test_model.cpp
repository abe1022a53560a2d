#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "volfuse/errors.hpp"
#include "volfuse/layers.hpp"
#include "volfuse/network.hpp"
#include "volfuse/rng.hpp"
#include "support.hpp"

using namespace volfuse;

namespace {

Tensor<float> random_batch(const std::vector<std::size_t>& shape, std::uint64_t seed,
                           double scale = 0.5) {
  Tensor<float> t(shape);
  Rng rng(seed);
  for (float& v : t.data) v = static_cast<float>(rng.normal() * scale);
  return t;
}

// Small 3D fusion model used by gradient and independence tests.
ModelConfig tiny_config() {
  ModelConfig c;
  c.modalities = {"t1", "gm"};
  c.encoder_channels = {2, 3, 4};
  c.embedding_dim = 4;
  c.fused_dim = 8;
  c.head_hidden = 5;
  c.n_classes = 2;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------

TEST_CASE("the four-encoder fusion model carries 312,706 trainable parameters") {
  const FusionNetwork<float> net{ModelConfig{}};
  const auto params = net.init_parameters(1);
  CHECK(parameter_count(params) == 312706);

  // One encoder alone: conv weights/biases plus BN affine pairs.
  std::size_t enc_t1 = 0;
  for (const auto& [name, t] : params.tensors) {
    if (name.rfind("enc.t1.", 0) == 0 && is_trainable_parameter(name)) {
      enc_t1 += t.size();
    }
  }
  CHECK(enc_t1 == 69888);

  // Running statistics exist but are excluded from the trainable count.
  CHECK(params.at("enc.t1.bn1.running_mean").size() == 16);
  CHECK_FALSE(is_trainable_parameter("enc.t1.bn1.running_mean"));
  CHECK_FALSE(is_trainable_parameter("enc.gm.bn2.running_var"));
}

TEST_CASE("the slice variant's first conv block is a 2D kernel") {
  const FusionNetwork<float> net{ModelConfig::slice_variant()};
  const auto params = net.init_parameters(1);
  const auto& w = params.at("enc.t1.conv1.weight");
  REQUIRE(w.shape == std::vector<std::size_t>{16, 1, 1, 3, 3});
  CHECK(w.size() + params.at("enc.t1.conv1.bias").size() == 160);
}

TEST_CASE("initialization is seed-deterministic and enumeration-independent") {
  const FusionNetwork<float> net{tiny_config()};
  const auto a = net.init_parameters(42);
  const auto b = net.init_parameters(42);
  const auto c = net.init_parameters(43);
  REQUIRE(a.tensors.size() == b.tensors.size());
  bool any_differs_from_c = false;
  for (const auto& [name, t] : a.tensors) {
    CHECK(t.data == b.at(name).data);
    if (t.data != c.at(name).data) any_differs_from_c = true;
  }
  CHECK(any_differs_from_c);
  CHECK(all_finite(a));

  // A weight tensor's values are a function of its name, not of the registry
  // iteration order: the same name must hash identically across models.
  CHECK(FusionNetwork<float>::name_hash("enc.t1.conv1.weight") ==
        FusionNetwork<float>::name_hash("enc.t1.conv1.weight"));
  CHECK(FusionNetwork<float>::name_hash("enc.t1.conv1.weight") !=
        FusionNetwork<float>::name_hash("enc.gm.conv1.weight"));
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

TEST_CASE("a full-resolution batch flows through all four branches" * doctest::timeout(300)) {
  const FusionNetwork<float> net{ModelConfig{}};
  auto params = net.init_parameters(7);
  const auto batch = random_batch({2, 4, 91, 109, 91}, 99, 0.25);

  const auto trace = net.forward(params, batch, RunMode::kEval);
  REQUIRE(trace.logits.shape == std::vector<std::size_t>{2, 2});
  REQUIRE(trace.branches.size() == 4);
  for (const auto& br : trace.branches) {
    CHECK(br.embedding.shape == std::vector<std::size_t>{2, 64});
  }
  CHECK(trace.fused.shape == std::vector<std::size_t>{2, 256});
  for (float v : trace.logits.data) CHECK(std::isfinite(v));

  // Eval mode is a pure function of (params, batch).
  auto params2 = net.init_parameters(7);
  const auto again = net.forward(params2, batch, RunMode::kEval);
  CHECK(trace.logits.data == again.logits.data);
}

TEST_CASE("the slice variant classifies 2D batches into four classes") {
  const FusionNetwork<float> net{ModelConfig::slice_variant()};
  auto params = net.init_parameters(3);
  const auto batch = random_batch({8, 1, 1, 64, 64}, 5);
  const auto trace = net.forward(params, batch, RunMode::kEval);
  REQUIRE(trace.logits.shape == std::vector<std::size_t>{8, 4});
  for (float v : trace.logits.data) CHECK(std::isfinite(v));
}

TEST_CASE("train-mode dropout is reproducible from the seed") {
  const FusionNetwork<float> net{tiny_config()};
  const auto base = net.init_parameters(21);
  const auto batch = random_batch({3, 2, 8, 8, 8}, 31);

  auto p1 = base;
  auto p2 = base;
  auto p3 = base;
  Rng d1(77), d2(77), d3(78);
  const auto a = net.forward(p1, batch, RunMode::kTrain, &d1);
  const auto b = net.forward(p2, batch, RunMode::kTrain, &d2);
  const auto c = net.forward(p3, batch, RunMode::kTrain, &d3);
  CHECK(a.dropout_mask == b.dropout_mask);
  CHECK(a.logits.data == b.logits.data);
  CHECK(a.dropout_mask != c.dropout_mask);

  // Train-mode forwards advance the running statistics.
  CHECK(p1.at("enc.t1.bn1.running_mean").data !=
        base.at("enc.t1.bn1.running_mean").data);
  // Forward without an RNG in train mode is a usage error.
  auto p4 = base;
  CHECK_THROWS_AS(net.forward(p4, batch, RunMode::kTrain, nullptr), ConfigError);
}

TEST_CASE("each encoder sees only its own channel") {
  const FusionNetwork<float> net{ModelConfig{}};
  auto params = net.init_parameters(13);
  auto batch = random_batch({1, 4, 16, 16, 16}, 17);
  const auto before = net.forward(params, batch, RunMode::kEval);

  // Perturb channel 2 (the WM input) only.
  const std::size_t spatial = 16 * 16 * 16;
  for (std::size_t s = 0; s < spatial; ++s) batch.ptr()[2 * spatial + s] += 0.5f;
  const auto after = net.forward(params, batch, RunMode::kEval);

  CHECK(after.branches[0].embedding.data == before.branches[0].embedding.data);
  CHECK(after.branches[1].embedding.data == before.branches[1].embedding.data);
  CHECK(after.branches[2].embedding.data != before.branches[2].embedding.data);
  CHECK(after.branches[3].embedding.data == before.branches[3].embedding.data);
  CHECK(after.logits.data != before.logits.data);
}

TEST_CASE("model configuration and input shapes are validated") {
  SUBCASE("fused_dim must match embedding x modalities") {
    ModelConfig c;
    c.fused_dim = 128;
    CHECK_THROWS_AS(FusionNetwork<float>{c}, ConfigError);
  }
  SUBCASE("embedding_dim must equal the last encoder stage") {
    ModelConfig c;
    c.embedding_dim = 32;
    c.fused_dim = 128;
    CHECK_THROWS_AS(FusionNetwork<float>{c}, ConfigError);
  }
  SUBCASE("degenerate dimensions are rejected") {
    ModelConfig c;
    c.encoder_channels = {16, 0, 64};
    CHECK_THROWS_AS(FusionNetwork<float>{c}, ConfigError);
    ModelConfig d;
    d.n_classes = 1;
    CHECK_THROWS_AS(FusionNetwork<float>{d}, ConfigError);
    ModelConfig e;
    e.dropout_p = 1.0;
    CHECK_THROWS_AS(FusionNetwork<float>{e}, ConfigError);
  }
  SUBCASE("batches must match the modality count and minimum extent") {
    const FusionNetwork<float> net{ModelConfig{}};
    auto params = net.init_parameters(1);
    const auto wrong_channels = random_batch({1, 3, 16, 16, 16}, 2);
    CHECK_THROWS_AS(net.forward(params, wrong_channels, RunMode::kEval), ShapeError);
    const auto too_small = random_batch({1, 4, 4, 4, 4}, 2);
    CHECK_THROWS_AS(net.forward(params, too_small, RunMode::kEval), ShapeError);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

TEST_CASE("checkpoints round-trip bitwise and reject corruption") {
  const auto dir = volfuse::testing::scratch_dir("checkpoint");
  const std::string path = (dir / "model.ckpt").string();

  const ModelConfig cfg = tiny_config();
  const FusionNetwork<float> net{cfg};
  const auto params = net.init_parameters(55);
  nlohmann::ordered_json meta;
  meta["fold"] = 3;
  meta["note"] = "round trip";
  save_checkpoint(path, cfg, params, meta);

  const Checkpoint back = load_checkpoint(path);
  CHECK(to_json(back.config).dump() == to_json(cfg).dump());
  CHECK(back.metadata["fold"] == 3);
  CHECK(back.metadata["note"] == "round trip");
  REQUIRE(back.params.tensors.size() == params.tensors.size());
  for (const auto& [name, t] : params.tensors) {
    CHECK(back.params.at(name).shape == t.shape);
    CHECK(back.params.at(name).data == t.data);  // exact float equality
  }

  // Stamp over the magic: the loader must refuse, naming the problem.
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f != nullptr);
    std::fwrite("XXXX", 1, 4, f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), ParseError);
  CHECK_THROWS_AS(load_checkpoint((dir / "absent.ckpt").string()), Error);
}

// ---------------------------------------------------------------------------
// Layer-level oracles
// ---------------------------------------------------------------------------

TEST_CASE("a centered delta kernel is the identity convolution") {
  auto x = random_batch({1, 1, 2, 3, 4}, 61);
  Tensor<float> w({1, 1, 3, 3, 3});
  w.data[13] = 1.0f;  // center tap (dz=1, dy=1, dx=1)
  Tensor<float> b({1});
  const auto y = conv_forward(x, w, b, ConvGeom::same_pad_3d(3));
  REQUIRE(y.shape == x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(y.data[i] == doctest::Approx(x.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("max pooling keeps the window maximum and its flat index") {
  Tensor<float> x({1, 1, 2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) x.data[i] = static_cast<float>(i + 1);
  std::vector<std::size_t> argmax;
  const auto y = maxpool_forward(x, 2, 2, 2, argmax);
  REQUIRE(y.shape == std::vector<std::size_t>{1, 1, 1, 1, 1});
  CHECK(y.data[0] == 8.0f);
  REQUIRE(argmax.size() == 1);
  CHECK(argmax[0] == 7);

  const auto gx = maxpool_backward(y, argmax, x.shape);
  CHECK(gx.data[7] == 8.0f);
  for (std::size_t i = 0; i < 7; ++i) CHECK(gx.data[i] == 0.0f);
}

TEST_CASE("train-mode batch norm standardizes channels and blends running stats") {
  auto x = random_batch({4, 2, 1, 1, 3}, 71, 1.5);
  // Shift channel 1 so the two channels have distinct statistics.
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t s = 0; s < 3; ++s) x.data[(n * 2 + 1) * 3 + s] += 2.0f;
  }
  Tensor<float> gamma({2}), beta({2}), rmean({2}), rvar({2});
  gamma.fill(1.0f);
  rvar.fill(1.0f);
  BatchNormCache<float> cache;
  const auto y = batchnorm_forward_train(x, gamma, beta, rmean, rvar, cache);
  CHECK(cache.count == 12);

  for (std::size_t c = 0; c < 2; ++c) {
    double x_sum = 0.0, x_sq = 0.0, y_sum = 0.0, y_sq = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t s = 0; s < 3; ++s) {
        const double xv = x.data[(n * 2 + c) * 3 + s];
        const double yv = y.data[(n * 2 + c) * 3 + s];
        x_sum += xv;
        x_sq += xv * xv;
        y_sum += yv;
        y_sq += yv * yv;
      }
    }
    const double mean = x_sum / 12.0;
    const double var = x_sq / 12.0 - mean * mean;
    // Output is standardized (up to the epsilon in the denominator).
    CHECK(std::fabs(y_sum / 12.0) < 1e-5);
    CHECK(y_sq / 12.0 == doctest::Approx(var / (var + kBatchNormEps)).epsilon(1e-4));
    // Running stats blend with momentum 0.1; variance uses the m/(m-1) form.
    CHECK(rmean.data[c] == doctest::Approx(0.1 * mean).epsilon(1e-5));
    CHECK(rvar.data[c] ==
          doctest::Approx(0.9 * 1.0 + 0.1 * var * 12.0 / 11.0).epsilon(1e-5));
  }
}

TEST_CASE("eval-mode batch norm applies the stored affine transform") {
  Tensor<float> x({1, 1, 1, 1, 1});
  x.data[0] = 3.0f;
  Tensor<float> gamma({1}), beta({1}), rmean({1}), rvar({1});
  gamma.data[0] = 2.0f;
  beta.data[0] = 0.5f;
  rmean.data[0] = 1.0f;
  rvar.data[0] = 4.0f;
  const auto y = batchnorm_forward_eval(x, gamma, beta, rmean, rvar);
  const double expect = 2.0 * (3.0 - 1.0) / std::sqrt(4.0 + kBatchNormEps) + 0.5;
  CHECK(y.data[0] == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("global average pooling means each channel and spreads gradients") {
  Tensor<float> x({2, 3, 1, 2, 2});
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = static_cast<float>(i);
  const auto y = gap_forward(x);
  REQUIRE(y.shape == std::vector<std::size_t>{2, 3});
  for (std::size_t nc = 0; nc < 6; ++nc) {
    const double expect = (4.0 * nc * 4 + 0 + 1 + 2 + 3) / 4.0;
    CHECK(y.data[nc] == doctest::Approx(expect).epsilon(1e-12));
  }
  Tensor<float> g({2, 3});
  g.fill(2.0f);
  const auto gx = gap_backward(g, x.shape);
  for (float v : gx.data) CHECK(v == 0.5f);
}

// ---------------------------------------------------------------------------
// Finite-difference verification of the full backward pass (double precision)
// ---------------------------------------------------------------------------

namespace {

double loss_at(const FusionNetwork<double>& net, const NetworkParameters<double>& base,
               const Tensor<double>& batch, const std::vector<int>& labels,
               const std::vector<double>& weights) {
  // Fresh parameter copy (train-mode forward mutates running stats) and a
  // fresh dropout stream so every evaluation sees the identical mask.
  NetworkParameters<double> p = base;
  Rng dropout(123);
  std::map<std::string, Tensor<double>> scratch;
  return net.loss_and_gradients(p, batch, labels, weights, &dropout, scratch);
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences" * doctest::timeout(300)) {
  const FusionNetwork<double> net{tiny_config()};
  const NetworkParameters<double> base = net.init_parameters(11);

  Tensor<double> batch({3, 2, 4, 4, 4});
  Rng rng(29);
  for (double& v : batch.data) v = rng.normal() * 0.5;
  const std::vector<int> labels = {0, 1, 0};
  const std::vector<double> weights = {1.0, 1.5};

  // Analytic gradients.
  std::map<std::string, Tensor<double>> grads;
  {
    NetworkParameters<double> p = base;
    Rng dropout(123);
    net.loss_and_gradients(p, batch, labels, weights, &dropout, grads);
  }

  const double h = 1e-5;
  for (const auto& [name, g] : grads) {
    double max_abs_diff = 0.0, max_mag = 1e-12;
    for (std::size_t i = 0; i < g.size(); ++i) {
      NetworkParameters<double> plus = base;
      plus.at(name).data[i] += h;
      NetworkParameters<double> minus = base;
      minus.at(name).data[i] -= h;
      const double fd = (loss_at(net, plus, batch, labels, weights) -
                         loss_at(net, minus, batch, labels, weights)) /
                        (2.0 * h);
      max_abs_diff = std::max(max_abs_diff, std::fabs(fd - g.data[i]));
      max_mag = std::max({max_mag, std::fabs(fd), std::fabs(g.data[i])});
    }
    const double rel = max_abs_diff / max_mag;
    // Conv biases feed straight into batch norm, so their true gradient is
    // zero; accept either a tight relative match or an absolute near-zero.
    const bool ok = rel <= 1e-3 || max_abs_diff <= 1e-7;
    CHECK_MESSAGE(ok, name, ": rel=", rel, " abs=", max_abs_diff);
  }
}
