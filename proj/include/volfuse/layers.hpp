// Neural-network building blocks, templated on the scalar type so the same
// code runs float for training and double for finite-difference checks.
//
// Convolutions are stride-1 im2col + GEMM. The 2D variant is expressed as a
// 3D op with a singleton Z axis and a 1-voxel kernel in Z, so every layer here
// covers both spatial ranks.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "volfuse/errors.hpp"
#include "volfuse/rng.hpp"
#include "volfuse/tensor.hpp"

namespace volfuse {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Stride is fixed at 1; padding is per axis.
struct ConvGeom {
  int kz = 3, ky = 3, kx = 3;
  int pz = 1, py = 1, px = 1;

  static ConvGeom same_pad_3d(int k) { return {k, k, k, k / 2, k / 2, k / 2}; }
  static ConvGeom same_pad_2d(int k) { return {1, k, k, 0, k / 2, k / 2}; }
};

namespace detail {

// Gathers one sample's receptive fields into a row-major [K x S] matrix,
// K = Cin·kz·ky·kx, S = Zo·Yo·Xo. Out-of-bounds taps read as zero.
template <typename T>
void im2col(const T* x, int cin, int Z, int Y, int X, const ConvGeom& g,
            int Zo, int Yo, int Xo, T* col) {
  const std::size_t S = static_cast<std::size_t>(Zo) * Yo * Xo;
  std::size_t row = 0;
  for (int c = 0; c < cin; ++c) {
    const T* chan = x + static_cast<std::size_t>(c) * Z * Y * X;
    for (int dz = 0; dz < g.kz; ++dz) {
      for (int dy = 0; dy < g.ky; ++dy) {
        for (int dx = 0; dx < g.kx; ++dx, ++row) {
          T* dst = col + row * S;
          std::size_t s = 0;
          for (int zo = 0; zo < Zo; ++zo) {
            const int zi = zo - g.pz + dz;
            const bool z_ok = zi >= 0 && zi < Z;
            for (int yo = 0; yo < Yo; ++yo) {
              const int yi = yo - g.py + dy;
              if (!z_ok || yi < 0 || yi >= Y) {
                for (int xo = 0; xo < Xo; ++xo) dst[s++] = T(0);
                continue;
              }
              const T* line = chan + (static_cast<std::size_t>(zi) * Y + yi) * X;
              const int xi0 = dx - g.px;
              for (int xo = 0; xo < Xo; ++xo) {
                const int xi = xi0 + xo;
                dst[s++] = (xi >= 0 && xi < X) ? line[xi] : T(0);
              }
            }
          }
        }
      }
    }
  }
}

// Scatter-add of a [K x S] gradient matrix back onto one sample's input.
template <typename T>
void col2im(const T* col, int cin, int Z, int Y, int X, const ConvGeom& g,
            int Zo, int Yo, int Xo, T* grad_x) {
  const std::size_t S = static_cast<std::size_t>(Zo) * Yo * Xo;
  std::size_t row = 0;
  for (int c = 0; c < cin; ++c) {
    T* chan = grad_x + static_cast<std::size_t>(c) * Z * Y * X;
    for (int dz = 0; dz < g.kz; ++dz) {
      for (int dy = 0; dy < g.ky; ++dy) {
        for (int dx = 0; dx < g.kx; ++dx, ++row) {
          const T* src = col + row * S;
          std::size_t s = 0;
          for (int zo = 0; zo < Zo; ++zo) {
            const int zi = zo - g.pz + dz;
            const bool z_ok = zi >= 0 && zi < Z;
            for (int yo = 0; yo < Yo; ++yo) {
              const int yi = yo - g.py + dy;
              if (!z_ok || yi < 0 || yi >= Y) {
                s += Xo;
                continue;
              }
              T* line = chan + (static_cast<std::size_t>(zi) * Y + yi) * X;
              const int xi0 = dx - g.px;
              for (int xo = 0; xo < Xo; ++xo, ++s) {
                const int xi = xi0 + xo;
                if (xi >= 0 && xi < X) line[xi] += src[s];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: [N, Cin, Z, Y, X]; w: [Cout, Cin, kz, ky, kx]; b: [Cout].
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                       const ConvGeom& g) {
  if (x.shape.size() != 5 || w.shape.size() != 5) {
    throw ShapeError("conv expects 5-axis input and weight tensors");
  }
  const int N = static_cast<int>(x.dim(0)), Cin = static_cast<int>(x.dim(1));
  const int Z = static_cast<int>(x.dim(2)), Y = static_cast<int>(x.dim(3)),
            X = static_cast<int>(x.dim(4));
  const int Cout = static_cast<int>(w.dim(0));
  if (static_cast<int>(w.dim(1)) != Cin) {
    throw ShapeError("conv weight channel count does not match the input");
  }
  const int Zo = Z + 2 * g.pz - g.kz + 1;
  const int Yo = Y + 2 * g.py - g.ky + 1;
  const int Xo = X + 2 * g.px - g.kx + 1;
  if (Zo < 1 || Yo < 1 || Xo < 1) throw ShapeError("conv input smaller than kernel");

  const std::size_t K = static_cast<std::size_t>(Cin) * g.kz * g.ky * g.kx;
  const std::size_t S = static_cast<std::size_t>(Zo) * Yo * Xo;
  Tensor<T> y({static_cast<std::size_t>(N), static_cast<std::size_t>(Cout),
               static_cast<std::size_t>(Zo), static_cast<std::size_t>(Yo),
               static_cast<std::size_t>(Xo)});

  std::vector<T> col(K * S);
  Eigen::Map<const RowMat<T>> W(w.ptr(), Cout, static_cast<Eigen::Index>(K));
  Eigen::Map<const ColVec<T>> bias(b.ptr(), Cout);
  for (int n = 0; n < N; ++n) {
    detail::im2col(x.ptr() + static_cast<std::size_t>(n) * Cin * Z * Y * X, Cin,
                   Z, Y, X, g, Zo, Yo, Xo, col.data());
    Eigen::Map<const RowMat<T>> colM(col.data(), static_cast<Eigen::Index>(K),
                                     static_cast<Eigen::Index>(S));
    Eigen::Map<RowMat<T>> out(y.ptr() + static_cast<std::size_t>(n) * Cout * S,
                              Cout, static_cast<Eigen::Index>(S));
    out.noalias() = W * colM;
    out.colwise() += bias;
  }
  return y;
}

// Accumulates into grad_w / grad_b (callers zero them first); grad_x optional.
template <typename T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& w, const ConvGeom& g,
                   const Tensor<T>& grad_y, Tensor<T>* grad_x, Tensor<T>& grad_w,
                   Tensor<T>& grad_b) {
  const int N = static_cast<int>(x.dim(0)), Cin = static_cast<int>(x.dim(1));
  const int Z = static_cast<int>(x.dim(2)), Y = static_cast<int>(x.dim(3)),
            X = static_cast<int>(x.dim(4));
  const int Cout = static_cast<int>(w.dim(0));
  const int Zo = static_cast<int>(grad_y.dim(2)), Yo = static_cast<int>(grad_y.dim(3)),
            Xo = static_cast<int>(grad_y.dim(4));
  const std::size_t K = static_cast<std::size_t>(Cin) * g.kz * g.ky * g.kx;
  const std::size_t S = static_cast<std::size_t>(Zo) * Yo * Xo;

  std::vector<T> col(K * S), gcol(K * S);
  Eigen::Map<const RowMat<T>> W(w.ptr(), Cout, static_cast<Eigen::Index>(K));
  Eigen::Map<RowMat<T>> gW(grad_w.ptr(), Cout, static_cast<Eigen::Index>(K));
  Eigen::Map<ColVec<T>> gB(grad_b.ptr(), Cout);
  if (grad_x) {
    *grad_x = Tensor<T>(x.shape);
  }
  for (int n = 0; n < N; ++n) {
    detail::im2col(x.ptr() + static_cast<std::size_t>(n) * Cin * Z * Y * X, Cin,
                   Z, Y, X, g, Zo, Yo, Xo, col.data());
    Eigen::Map<const RowMat<T>> colM(col.data(), static_cast<Eigen::Index>(K),
                                     static_cast<Eigen::Index>(S));
    Eigen::Map<const RowMat<T>> gY(grad_y.ptr() + static_cast<std::size_t>(n) * Cout * S,
                                   Cout, static_cast<Eigen::Index>(S));
    gW.noalias() += gY * colM.transpose();
    // Fixed-order scalar sum: Eigen's vectorized reduction splits at an
    // address-dependent boundary, which would make results vary with heap
    // layout (and thus with --jobs scheduling).
    for (int c = 0; c < Cout; ++c) {
      const T* row = grad_y.ptr() + (static_cast<std::size_t>(n) * Cout + c) * S;
      T acc = T(0);
      for (std::size_t s = 0; s < S; ++s) acc += row[s];
      gB(c) += acc;
    }
    if (grad_x) {
      Eigen::Map<RowMat<T>> gC(gcol.data(), static_cast<Eigen::Index>(K),
                               static_cast<Eigen::Index>(S));
      gC.noalias() = W.transpose() * gY;
      detail::col2im(gcol.data(), Cin, Z, Y, X, g, Zo, Yo, Xo,
                     grad_x->ptr() + static_cast<std::size_t>(n) * Cin * Z * Y * X);
    }
  }
}

// --------------------------------------------------------------------------
// Batch normalization (per channel over batch and spatial axes).
// Normalization uses the biased batch variance; running statistics blend in
// the unbiased one, so eval-mode outputs match the usual framework convention.
// --------------------------------------------------------------------------

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T>
struct BatchNormCache {
  Tensor<T> x_hat;
  std::vector<T> inv_std;  // per channel
  std::size_t count = 0;   // N * spatial
};

template <typename T>
Tensor<T> batchnorm_forward_train(const Tensor<T>& x, const Tensor<T>& gamma,
                                  const Tensor<T>& beta, Tensor<T>& running_mean,
                                  Tensor<T>& running_var, BatchNormCache<T>& cache) {
  const std::size_t N = x.dim(0), C = x.dim(1);
  const std::size_t S = x.size() / (N * C);
  const std::size_t m = N * S;
  if (m < 2) throw ShapeError("batch norm needs at least 2 values per channel");

  Tensor<T> y(x.shape);
  cache.x_hat = Tensor<T>(x.shape);
  cache.inv_std.assign(C, T(0));
  cache.count = m;

  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.ptr() + (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        sum += p[s];
        sq += static_cast<double>(p[s]) * p[s];
      }
    }
    const double mean = sum / m;
    const double var = std::max(sq / m - mean * mean, 0.0);
    const double inv_std = 1.0 / std::sqrt(var + kBatchNormEps);
    cache.inv_std[c] = static_cast<T>(inv_std);

    const double unbiased = var * static_cast<double>(m) / (m - 1);
    running_mean.data[c] = static_cast<T>((1.0 - kBatchNormMomentum) * running_mean.data[c] +
                                          kBatchNormMomentum * mean);
    running_var.data[c] = static_cast<T>((1.0 - kBatchNormMomentum) * running_var.data[c] +
                                         kBatchNormMomentum * unbiased);

    const T g = gamma.data[c], b = beta.data[c];
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.ptr() + (n * C + c) * S;
      T* xh = cache.x_hat.ptr() + (n * C + c) * S;
      T* out = y.ptr() + (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        xh[s] = static_cast<T>((p[s] - mean) * inv_std);
        out[s] = g * xh[s] + b;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> batchnorm_forward_eval(const Tensor<T>& x, const Tensor<T>& gamma,
                                 const Tensor<T>& beta, const Tensor<T>& running_mean,
                                 const Tensor<T>& running_var) {
  const std::size_t N = x.dim(0), C = x.dim(1);
  const std::size_t S = x.size() / (N * C);
  Tensor<T> y(x.shape);
  for (std::size_t c = 0; c < C; ++c) {
    const double inv_std = 1.0 / std::sqrt(static_cast<double>(running_var.data[c]) +
                                           kBatchNormEps);
    const double mean = running_mean.data[c];
    const T g = gamma.data[c], b = beta.data[c];
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.ptr() + (n * C + c) * S;
      T* out = y.ptr() + (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        out[s] = static_cast<T>(g * (p[s] - mean) * inv_std + b);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& grad_y, const Tensor<T>& gamma,
                             const BatchNormCache<T>& cache, Tensor<T>& grad_gamma,
                             Tensor<T>& grad_beta) {
  const std::size_t N = grad_y.dim(0), C = grad_y.dim(1);
  const std::size_t S = grad_y.size() / (N * C);
  const double m = static_cast<double>(cache.count);
  Tensor<T> grad_x(grad_y.shape);

  for (std::size_t c = 0; c < C; ++c) {
    double sum_gy = 0.0, sum_gy_xh = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* gy = grad_y.ptr() + (n * C + c) * S;
      const T* xh = cache.x_hat.ptr() + (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        sum_gy += gy[s];
        sum_gy_xh += static_cast<double>(gy[s]) * xh[s];
      }
    }
    grad_gamma.data[c] += static_cast<T>(sum_gy_xh);
    grad_beta.data[c] += static_cast<T>(sum_gy);

    const double scale = gamma.data[c] * cache.inv_std[c] / m;
    for (std::size_t n = 0; n < N; ++n) {
      const T* gy = grad_y.ptr() + (n * C + c) * S;
      const T* xh = cache.x_hat.ptr() + (n * C + c) * S;
      T* gx = grad_x.ptr() + (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        gx[s] = static_cast<T>(scale * (m * gy[s] - sum_gy - xh[s] * sum_gy_xh));
      }
    }
  }
  return grad_x;
}

// --------------------------------------------------------------------------
// Pointwise and pooling layers
// --------------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return y;
}

// Uses the forward output for the mask; at exactly 0 the gradient is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_y, const Tensor<T>& y) {
  Tensor<T> grad_x(grad_y.shape);
  for (std::size_t i = 0; i < grad_y.size(); ++i) {
    grad_x.data[i] = y.data[i] > T(0) ? grad_y.data[i] : T(0);
  }
  return grad_x;
}

// Non-overlapping max pooling (stride = kernel); trailing voxels that do not
// fill a window are dropped (floor semantics). argmax records flat input
// indices; the first maximum wins ties, keeping backward deterministic.
template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, int pz, int py, int px,
                          std::vector<std::size_t>& argmax) {
  const std::size_t N = x.dim(0), C = x.dim(1);
  const int Z = static_cast<int>(x.dim(2)), Y = static_cast<int>(x.dim(3)),
            X = static_cast<int>(x.dim(4));
  const int Zo = Z / pz, Yo = Y / py, Xo = X / px;
  if (Zo < 1 || Yo < 1 || Xo < 1) throw ShapeError("max pool window exceeds input");

  Tensor<T> y({N, C, static_cast<std::size_t>(Zo), static_cast<std::size_t>(Yo),
               static_cast<std::size_t>(Xo)});
  argmax.assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* chan = x.ptr() + nc * (static_cast<std::size_t>(Z) * Y * X);
    const std::size_t base = nc * (static_cast<std::size_t>(Z) * Y * X);
    for (int zo = 0; zo < Zo; ++zo) {
      for (int yo = 0; yo < Yo; ++yo) {
        for (int xo = 0; xo < Xo; ++xo, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_i = 0;
          for (int dz = 0; dz < pz; ++dz) {
            for (int dy = 0; dy < py; ++dy) {
              for (int dx = 0; dx < px; ++dx) {
                const std::size_t i =
                    (static_cast<std::size_t>(zo * pz + dz) * Y + (yo * py + dy)) * X +
                    (xo * px + dx);
                if (chan[i] > best) {
                  best = chan[i];
                  best_i = i;
                }
              }
            }
          }
          y.data[o] = best;
          argmax[o] = base + best_i;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_y, const std::vector<std::size_t>& argmax,
                           const std::vector<std::size_t>& x_shape) {
  Tensor<T> grad_x(x_shape);
  for (std::size_t o = 0; o < grad_y.size(); ++o) grad_x.data[argmax[o]] += grad_y.data[o];
  return grad_x;
}

// Global average pool: [N, C, Z, Y, X] -> [N, C].
template <typename T>
Tensor<T> gap_forward(const Tensor<T>& x) {
  const std::size_t N = x.dim(0), C = x.dim(1);
  const std::size_t S = x.size() / (N * C);
  Tensor<T> y({N, C});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    double sum = 0.0;
    const T* p = x.ptr() + nc * S;
    for (std::size_t s = 0; s < S; ++s) sum += p[s];
    y.data[nc] = static_cast<T>(sum / S);
  }
  return y;
}

template <typename T>
Tensor<T> gap_backward(const Tensor<T>& grad_y, const std::vector<std::size_t>& x_shape) {
  Tensor<T> grad_x(x_shape);
  const std::size_t N = x_shape[0], C = x_shape[1];
  const std::size_t S = grad_x.size() / (N * C);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T g = grad_y.data[nc] / static_cast<T>(S);
    T* p = grad_x.ptr() + nc * S;
    for (std::size_t s = 0; s < S; ++s) p[s] = g;
  }
  return grad_x;
}

// x: [N, I]; w: [O, I]; b: [O] -> [N, O].
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const std::size_t N = x.dim(0), I = x.dim(1), O = w.dim(0);
  if (w.dim(1) != I) throw ShapeError("linear weight width does not match input");
  Tensor<T> y({N, O});
  Eigen::Map<const RowMat<T>> X(x.ptr(), static_cast<Eigen::Index>(N),
                                static_cast<Eigen::Index>(I));
  Eigen::Map<const RowMat<T>> W(w.ptr(), static_cast<Eigen::Index>(O),
                                static_cast<Eigen::Index>(I));
  Eigen::Map<RowMat<T>> Ymap(y.ptr(), static_cast<Eigen::Index>(N),
                             static_cast<Eigen::Index>(O));
  Ymap.noalias() = X * W.transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(b.ptr(),
                                                             static_cast<Eigen::Index>(O));
  Ymap.rowwise() += bias;
  return y;
}

template <typename T>
void linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_y,
                     Tensor<T>* grad_x, Tensor<T>& grad_w, Tensor<T>& grad_b) {
  const std::size_t N = x.dim(0), I = x.dim(1), O = w.dim(0);
  Eigen::Map<const RowMat<T>> X(x.ptr(), static_cast<Eigen::Index>(N),
                                static_cast<Eigen::Index>(I));
  Eigen::Map<const RowMat<T>> W(w.ptr(), static_cast<Eigen::Index>(O),
                                static_cast<Eigen::Index>(I));
  Eigen::Map<const RowMat<T>> gY(grad_y.ptr(), static_cast<Eigen::Index>(N),
                                 static_cast<Eigen::Index>(O));
  Eigen::Map<RowMat<T>> gW(grad_w.ptr(), static_cast<Eigen::Index>(O),
                           static_cast<Eigen::Index>(I));
  gW.noalias() += gY.transpose() * X;
  // Fixed-order scalar sum (see conv_backward): batch-major accumulation, one
  // total per output unit, independent of buffer alignment.
  for (std::size_t o = 0; o < O; ++o) {
    T acc = T(0);
    for (std::size_t i = 0; i < N; ++i) acc += grad_y.ptr()[i * O + o];
    grad_b.ptr()[o] += acc;
  }
  if (grad_x) {
    *grad_x = Tensor<T>(x.shape);
    Eigen::Map<RowMat<T>> gX(grad_x->ptr(), static_cast<Eigen::Index>(N),
                             static_cast<Eigen::Index>(I));
    gX.noalias() = gY * W;
  }
}

// Inverted dropout: kept units are scaled by 1/(1-p) so eval needs no scaling.
template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& x, double p, Rng& rng, std::vector<T>& mask) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must lie in [0, 1)");
  mask.assign(x.size(), T(0));
  Tensor<T> y(x.shape);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.uniform() >= p ? keep_scale : T(0);
    y.data[i] = x.data[i] * mask[i];
  }
  return y;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_y, const std::vector<T>& mask) {
  Tensor<T> grad_x(grad_y.shape);
  for (std::size_t i = 0; i < grad_y.size(); ++i) grad_x.data[i] = grad_y.data[i] * mask[i];
  return grad_x;
}

// Softmax cross-entropy over logits [N, C]. Optional per-class weights (empty
// = uniform); the loss is the weighted mean and grad_logits matches it.
// Accumulation runs in double regardless of T.
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                        const std::vector<double>& class_weights,
                        Tensor<T>* grad_logits, Tensor<T>* probs_out = nullptr) {
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  if (labels.size() != N) throw ShapeError("label count does not match batch size");
  if (!class_weights.empty() && class_weights.size() != C) {
    throw ShapeError("class weight count does not match class count");
  }
  Tensor<T> probs({N, C});
  double loss = 0.0, weight_sum = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= C) {
      throw InvalidLabelError("label index " + std::to_string(y) + " out of range");
    }
    const T* l = logits.ptr() + n * C;
    double m = l[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, static_cast<double>(l[c]));
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(l[c]) - m);
    const double lse = m + std::log(denom);
    const double w = class_weights.empty() ? 1.0 : class_weights[y];
    loss += w * (lse - l[y]);
    weight_sum += w;
    for (std::size_t c = 0; c < C; ++c) {
      probs.data[n * C + c] = static_cast<T>(std::exp(static_cast<double>(l[c]) - lse));
    }
  }
  if (grad_logits) {
    *grad_logits = Tensor<T>({N, C});
    for (std::size_t n = 0; n < N; ++n) {
      const int y = labels[n];
      const double w = class_weights.empty() ? 1.0 : class_weights[y];
      for (std::size_t c = 0; c < C; ++c) {
        const double indicator = static_cast<int>(c) == y ? 1.0 : 0.0;
        grad_logits->data[n * C + c] =
            static_cast<T>(w * (probs.data[n * C + c] - indicator) / weight_sum);
      }
    }
  }
  if (probs_out) *probs_out = std::move(probs);
  return static_cast<T>(loss / weight_sum);
}

}  // namespace volfuse
