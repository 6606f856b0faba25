#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "veil/common.hpp"
#include "veil/rng.hpp"
#include "veil/tensor.hpp"

namespace veil {

/// Trainable weights of one layer. Conv kernels are OIHW, dense weights are
/// out x in; bias is one value per output channel/unit.
template <typename T>
struct LayerParams {
  Tensor<T> kernels;
  Tensor<T> bias;

  template <typename U>
  LayerParams<U> cast() const {
    return {kernels.template cast<U>(), bias.template cast<U>()};
  }
};

/// He-normal init (std = sqrt(2/fan_in)), zero bias. Draw order is fixed:
/// kernels in row-major order, then nothing for bias.
template <typename T>
LayerParams<T> conv_params_init(int out_ch, int in_ch, Rng& rng) {
  LayerParams<T> p;
  p.kernels = Tensor<T>({out_ch, in_ch, 3, 3});
  p.bias = Tensor<T>({out_ch});
  const double std_dev = std::sqrt(2.0 / (in_ch * 9));
  for (std::size_t i = 0; i < p.kernels.size(); ++i)
    p.kernels[i] = static_cast<T>(rng.normal() * std_dev);
  return p;
}

template <typename T>
LayerParams<T> dense_params_init(int out_dim, int in_dim, Rng& rng) {
  LayerParams<T> p;
  p.kernels = Tensor<T>({out_dim, in_dim});
  p.bias = Tensor<T>({out_dim});
  const double std_dev = std::sqrt(2.0 / in_dim);
  for (std::size_t i = 0; i < p.kernels.size(); ++i)
    p.kernels[i] = static_cast<T>(rng.normal() * std_dev);
  return p;
}

namespace detail {

// dst[h][w] += scale * src[h+sh][w+sw] over the intersection of both planes.
template <typename T>
void add_shifted(T* dst, const T* src, int H, int W, int sh, int sw, T scale) {
  const int h0 = std::max(0, -sh), h1 = std::min(H, H - sh);
  const int w0 = std::max(0, -sw), w1 = std::min(W, W - sw);
  for (int h = h0; h < h1; ++h) {
    T* d = dst + static_cast<std::size_t>(h) * W;
    const T* s = src + static_cast<std::size_t>(h + sh) * W + sw;
    for (int w = w0; w < w1; ++w) d[w] += scale * s[w];
  }
}

// dst[h][w] = src[h+sh][w+sw] over the intersection; dst must be pre-zeroed
// where the shift leaves padding.
template <typename T>
void copy_shifted(T* dst, const T* src, int H, int W, int sh, int sw) {
  const int h0 = std::max(0, -sh), h1 = std::min(H, H - sh);
  const int w0 = std::max(0, -sw), w1 = std::min(W, W - sw);
  for (int h = h0; h < h1; ++h) {
    T* d = dst + static_cast<std::size_t>(h) * W;
    const T* s = src + static_cast<std::size_t>(h + sh) * W + sw;
    for (int w = w0; w < w1; ++w) d[w] = s[w];
  }
}

template <typename T>
void axpy(T* __restrict dst, const T* __restrict src, std::size_t n, T scale) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += scale * src[i];
}

// Fixed accumulation order: 8 interleaved partial sums folded at the end.
template <typename T>
T dot(const T* __restrict a, const T* __restrict b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc[0] += a[i] * b[i];
    acc[1] += a[i + 1] * b[i + 1];
    acc[2] += a[i + 2] * b[i + 2];
    acc[3] += a[i + 3] * b[i + 3];
    acc[4] += a[i + 4] * b[i + 4];
    acc[5] += a[i + 5] * b[i + 5];
    acc[6] += a[i + 6] * b[i + 6];
    acc[7] += a[i + 7] * b[i + 7];
  }
  for (; i < n; ++i) acc[0] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}


// Patch matrix with a batch-fused pixel axis: row c = i*9 + kh*3 + kw holds
// the (kh,kw)-shifted, zero-padded plane of channel i for every sample, so
// each row is N*H*W long and every downstream loop runs contiguously.
template <typename T>
std::vector<T> im2col_batch(const Tensor<T>& x) {
  const int N = x.dim(0), I = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const std::size_t row = static_cast<std::size_t>(N) * plane;
  std::vector<T> col(static_cast<std::size_t>(I) * 9 * row, T(0));
  parallel_for(N, [&](std::int64_t n0, std::int64_t n1) {
    for (std::int64_t n = n0; n < n1; ++n) {
      for (int i = 0; i < I; ++i) {
        const T* xp = x.data() + (static_cast<std::size_t>(n) * I + i) * plane;
        for (int kh = 0; kh < 3; ++kh)
          for (int kw = 0; kw < 3; ++kw)
            copy_shifted(col.data() +
                             (static_cast<std::size_t>(i) * 9 + kh * 3 + kw) * row +
                             static_cast<std::size_t>(n) * plane,
                         xp, H, W, kh - 1, kw - 1);
      }
    }
  });
  return col;
}

template <typename T>
void check_conv_shapes(const Tensor<T>& x, const LayerParams<T>& p) {
  require(x.rank() == 4, "conv2d: input must be NCHW, got ", x.shape_str());
  require(p.kernels.rank() == 4 && p.kernels.dim(2) == 3 && p.kernels.dim(3) == 3,
          "conv2d: kernels must be OIHW with 3x3 spatial dims, got ",
          p.kernels.shape_str());
  require(x.dim(1) == p.kernels.dim(1),
          "conv2d: input channels do not match kernel input channels: input ",
          x.shape_str(), " vs kernels ", p.kernels.shape_str());
  require(p.bias.rank() == 1 && p.bias.dim(0) == p.kernels.dim(0),
          "conv2d: bias shape ", p.bias.shape_str(), " does not match kernels ",
          p.kernels.shape_str());
}

}  // namespace detail

/// 3x3 convolution, stride 1, zero same-padding. Input NCHW, kernels OIHW.
/// im2col form: one long GEMM-like pass per output channel over the
/// batch-fused pixel axis.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const LayerParams<T>& p) {
  detail::check_conv_shapes(x, p);
  const int N = x.dim(0), I = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = p.kernels.dim(0);
  const int C = I * 9;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const std::size_t row = static_cast<std::size_t>(N) * plane;

  const auto col = detail::im2col_batch(x);
  std::vector<T> ybuf(static_cast<std::size_t>(O) * row);
  // Tiled over the pixel axis so the O accumulator rows stay cache-hot while
  // each col row streams through once. Tiling never changes the per-element
  // accumulation order (c ascending).
  const std::size_t tile = 4096;
  const std::int64_t n_tiles = static_cast<std::int64_t>((row + tile - 1) / tile);
  parallel_for(n_tiles, [&](std::int64_t t0, std::int64_t t1) {
    for (std::int64_t t = t0; t < t1; ++t) {
      const std::size_t off = static_cast<std::size_t>(t) * tile;
      const std::size_t len = std::min(tile, row - off);
      for (int o = 0; o < O; ++o) {
        T* yr = ybuf.data() + static_cast<std::size_t>(o) * row + off;
        const T bo = p.bias[static_cast<std::size_t>(o)];
        for (std::size_t i = 0; i < len; ++i) yr[i] = bo;
      }
      for (int c = 0; c < C; ++c) {
        const T* cc = col.data() + static_cast<std::size_t>(c) * row + off;
        for (int o = 0; o < O; ++o)
          detail::axpy(ybuf.data() + static_cast<std::size_t>(o) * row + off,
                       cc, len,
                       p.kernels[static_cast<std::size_t>(o) * C +
                                 static_cast<std::size_t>(c)]);
      }
    }
  });

  Tensor<T> y({N, O, H, W});
  parallel_for(N, [&](std::int64_t n0, std::int64_t n1) {
    for (std::int64_t n = n0; n < n1; ++n)
      for (int o = 0; o < O; ++o)
        std::copy_n(ybuf.data() + static_cast<std::size_t>(o) * row +
                        static_cast<std::size_t>(n) * plane,
                    plane,
                    y.data() + (static_cast<std::size_t>(n) * O + o) * plane);
  });
  return y;
}

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  LayerParams<T> params;
};

/// Backward pass for conv2d_forward. `x` is the cached forward input and `gy`
/// the upstream gradient. Parameter gradients are skipped when
/// want_param_grads is false (input-gradient-only callers, e.g. attacks).
/// Every reduction has a fixed order, so results are bit-stable for any
/// worker count.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const LayerParams<T>& p,
                             const Tensor<T>& gy,
                             bool want_param_grads = true) {
  detail::check_conv_shapes(x, p);
  const int N = x.dim(0), I = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = p.kernels.dim(0);
  const int C = I * 9;
  require(gy.rank() == 4 && gy.dim(0) == N && gy.dim(1) == O &&
              gy.dim(2) == H && gy.dim(3) == W,
          "conv2d backward: upstream gradient shape ", gy.shape_str(),
          " does not match output [", N, "x", O, "x", H, "x", W, "]");
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const std::size_t row = static_cast<std::size_t>(N) * plane;

  // gy with the batch-fused pixel axis: gyf[o][n*plane + p]
  std::vector<T> gyf(static_cast<std::size_t>(O) * row);
  parallel_for(N, [&](std::int64_t n0, std::int64_t n1) {
    for (std::int64_t n = n0; n < n1; ++n)
      for (int o = 0; o < O; ++o)
        std::copy_n(gy.data() + (static_cast<std::size_t>(n) * O + o) * plane,
                    plane,
                    gyf.data() + static_cast<std::size_t>(o) * row +
                        static_cast<std::size_t>(n) * plane);
  });

  ConvGrads<T> g;

  // gcol[c] = sum_o kernels[o][c] * gyf[o], then col2im scatter-add.
  // Same tiling story as the forward pass, with the roles of O and C swapped.
  std::vector<T> gcol(static_cast<std::size_t>(C) * row, T(0));
  const std::size_t tile = 4096;
  const std::int64_t n_tiles = static_cast<std::int64_t>((row + tile - 1) / tile);
  parallel_for(n_tiles, [&](std::int64_t t0, std::int64_t t1) {
    for (std::int64_t t = t0; t < t1; ++t) {
      const std::size_t off = static_cast<std::size_t>(t) * tile;
      const std::size_t len = std::min(tile, row - off);
      for (int c = 0; c < C; ++c) {
        T* gr = gcol.data() + static_cast<std::size_t>(c) * row + off;
        for (int o = 0; o < O; ++o)
          detail::axpy(gr,
                       gyf.data() + static_cast<std::size_t>(o) * row + off,
                       len,
                       p.kernels[static_cast<std::size_t>(o) * C +
                                 static_cast<std::size_t>(c)]);
      }
    }
  });
  g.input = Tensor<T>({N, I, H, W});
  parallel_for(N, [&](std::int64_t n0, std::int64_t n1) {
    for (std::int64_t n = n0; n < n1; ++n)
      for (int i = 0; i < I; ++i) {
        T* gxp = g.input.data() + (static_cast<std::size_t>(n) * I + i) * plane;
        for (int kh = 0; kh < 3; ++kh)
          for (int kw = 0; kw < 3; ++kw)
            detail::add_shifted(
                gxp,
                gcol.data() +
                    (static_cast<std::size_t>(i) * 9 + kh * 3 + kw) * row +
                    static_cast<std::size_t>(n) * plane,
                H, W, -(kh - 1), -(kw - 1), T(1));
      }
  });
  gcol.clear();
  gcol.shrink_to_fit();

  if (want_param_grads) {
    const auto col = detail::im2col_batch(x);
    g.params.kernels = Tensor<T>({O, I, 3, 3});
    g.params.bias = Tensor<T>({O});
    // One full-row dot per (o, c): fixed order, no cross-tile accumulation.
    parallel_for(C, [&](std::int64_t c0, std::int64_t c1) {
      for (std::int64_t c = c0; c < c1; ++c) {
        const T* cc = col.data() + static_cast<std::size_t>(c) * row;
        for (int o = 0; o < O; ++o)
          g.params.kernels[static_cast<std::size_t>(o) * C +
                           static_cast<std::size_t>(c)] =
              detail::dot(gyf.data() + static_cast<std::size_t>(o) * row, cc,
                          row);
      }
    });
    parallel_for(O, [&](std::int64_t o0, std::int64_t o1) {
      for (std::int64_t o = o0; o < o1; ++o) {
        const T* gr = gyf.data() + static_cast<std::size_t>(o) * row;
        T bias_acc = T(0);
        for (std::size_t i = 0; i < row; ++i) bias_acc += gr[i];
        g.params.bias[static_cast<std::size_t>(o)] = bias_acc;
      }
    });
  }
  return g;
}

template <typename T>
struct MaxPoolResult {
  Tensor<T> y;
  // Flat input-plane index of each selected element; ties go to the lowest
  // linear index.
  std::vector<std::int32_t> argmax;
};

/// 2x2 max pooling, stride 2. Requires even spatial dims.
template <typename T>
MaxPoolResult<T> maxpool2x2_forward(const Tensor<T>& x) {
  require(x.rank() == 4, "maxpool2x2: input must be NCHW, got ", x.shape_str());
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % 2 == 0 && W % 2 == 0,
          "maxpool2x2: spatial dims must be even, got ", x.shape_str());
  const int Ho = H / 2, Wo = W / 2;
  MaxPoolResult<T> r;
  r.y = Tensor<T>({N, C, Ho, Wo});
  r.argmax.assign(r.y.size(), 0);
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t out_plane = static_cast<std::size_t>(Ho) * Wo;
  parallel_for(static_cast<std::int64_t>(N) * C, [&](std::int64_t p0, std::int64_t p1) {
    for (std::int64_t pc = p0; pc < p1; ++pc) {
      const T* xp = x.data() + pc * in_plane;
      T* yp = r.y.data() + pc * out_plane;
      std::int32_t* ap = r.argmax.data() + pc * out_plane;
      for (int ho = 0; ho < Ho; ++ho) {
        for (int wo = 0; wo < Wo; ++wo) {
          const int base = 2 * ho * W + 2 * wo;
          int best = base;
          T bv = xp[base];
          const int cand[3] = {base + 1, base + W, base + W + 1};
          for (int idx : cand) {
            if (xp[idx] > bv) {
              bv = xp[idx];
              best = idx;
            }
          }
          yp[ho * Wo + wo] = bv;
          ap[ho * Wo + wo] = best;
        }
      }
    }
  });
  return r;
}

/// Routes each upstream gradient to the cached argmax position, zero elsewhere.
template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& gy,
                              const std::vector<std::int32_t>& argmax,
                              const std::vector<int>& input_shape) {
  Tensor<T> gx(input_shape);
  const int N = input_shape[0], C = input_shape[1];
  const int H = input_shape[2], W = input_shape[3];
  require(gy.size() == argmax.size(),
          "maxpool2x2 backward: gradient/argmax size mismatch");
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t out_plane = gy.size() / (static_cast<std::size_t>(N) * C);
  parallel_for(static_cast<std::int64_t>(N) * C, [&](std::int64_t p0, std::int64_t p1) {
    for (std::int64_t pc = p0; pc < p1; ++pc) {
      const T* gyp = gy.data() + pc * out_plane;
      const std::int32_t* ap = argmax.data() + pc * out_plane;
      T* gxp = gx.data() + pc * in_plane;
      for (std::size_t i = 0; i < out_plane; ++i) gxp[ap[i]] += gyp[i];
    }
  });
  return gx;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  T* p = y.data();
  for (std::size_t i = 0; i < y.size(); ++i)
    if (p[i] < T(0)) p[i] = T(0);
  return y;
}

/// Subgradient at 0 is 0: gradient passes only where x > 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& gy) {
  require(x.same_shape(gy), "relu backward: shape mismatch ", x.shape_str(),
          " vs ", gy.shape_str());
  Tensor<T> gx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    gx[i] = x[i] > T(0) ? gy[i] : T(0);
  return gx;
}

/// y = W x + b for a batch of flattened inputs. x is [N, D], W is [O, D].
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const LayerParams<T>& p) {
  require(x.rank() == 2, "dense: input must be [N, D], got ", x.shape_str());
  require(p.kernels.rank() == 2, "dense: weights must be [O, D], got ",
          p.kernels.shape_str());
  const int N = x.dim(0), D = x.dim(1), O = p.kernels.dim(0);
  require(D == p.kernels.dim(1),
          "dense: input length does not match weight input dimension: input ",
          x.shape_str(), " vs weights ", p.kernels.shape_str());
  Tensor<T> y({N, O});
  parallel_for(N, [&](std::int64_t n0, std::int64_t n1) {
    for (std::int64_t n = n0; n < n1; ++n) {
      const T* xp = x.data() + static_cast<std::size_t>(n) * D;
      for (int o = 0; o < O; ++o) {
        const T* wp = p.kernels.data() + static_cast<std::size_t>(o) * D;
        y[static_cast<std::size_t>(n) * O + o] =
            p.bias[static_cast<std::size_t>(o)] +
            detail::dot(wp, xp, static_cast<std::size_t>(D));
      }
    }
  });
  return y;
}

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  LayerParams<T> params;
};

/// grad_input = W^T g, grad_W = g x^T, grad_b = g (summed over the batch).
template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const LayerParams<T>& p,
                             const Tensor<T>& gy,
                             bool want_param_grads = true) {
  const int N = x.dim(0), D = x.dim(1), O = p.kernels.dim(0);
  require(gy.rank() == 2 && gy.dim(0) == N && gy.dim(1) == O,
          "dense backward: upstream gradient shape ", gy.shape_str(),
          " does not match output [", N, "x", O, "]");
  DenseGrads<T> g;
  g.input = Tensor<T>({N, D});
  parallel_for(N, [&](std::int64_t n0, std::int64_t n1) {
    for (std::int64_t n = n0; n < n1; ++n) {
      T* gxp = g.input.data() + static_cast<std::size_t>(n) * D;
      for (int o = 0; o < O; ++o) {
        const T go = gy[static_cast<std::size_t>(n) * O + o];
        const T* wp = p.kernels.data() + static_cast<std::size_t>(o) * D;
        for (int d = 0; d < D; ++d) gxp[d] += go * wp[d];
      }
    }
  });
  if (want_param_grads) {
    g.params.kernels = Tensor<T>({O, D});
    g.params.bias = Tensor<T>({O});
    parallel_for(O, [&](std::int64_t o0, std::int64_t o1) {
      for (std::int64_t o = o0; o < o1; ++o) {
        T* gwp = g.params.kernels.data() + static_cast<std::size_t>(o) * D;
        T bias_acc = T(0);
        for (int n = 0; n < N; ++n) {
          const T go = gy[static_cast<std::size_t>(n) * O + o];
          bias_acc += go;
          const T* xp = x.data() + static_cast<std::size_t>(n) * D;
          for (int d = 0; d < D; ++d) gwp[d] += go * xp[d];
        }
        g.params.bias[static_cast<std::size_t>(o)] = bias_acc;
      }
    });
  }
  return g;
}

template <typename T>
struct SoftmaxCeResult {
  T loss;
  std::vector<T> grad_logits;  // softmax(logits) - onehot(label)
};

/// Cross-entropy of softmax(logits) against a class index, computed with
/// max-subtraction. loss = -log softmax(logits)[label].
template <typename T>
SoftmaxCeResult<T> softmax_cross_entropy(const T* logits, int k, int label) {
  require(k > 0, "softmax_cross_entropy: empty logits");
  require(label >= 0 && label < k, "softmax_cross_entropy: label ", label,
          " out of range [0, ", k, ")");
  T m = logits[0];
  for (int i = 1; i < k; ++i) m = std::max(m, logits[i]);
  T sum = T(0);
  SoftmaxCeResult<T> r;
  r.grad_logits.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const T e = std::exp(logits[i] - m);
    r.grad_logits[static_cast<std::size_t>(i)] = e;
    sum += e;
  }
  for (int i = 0; i < k; ++i) r.grad_logits[static_cast<std::size_t>(i)] /= sum;
  r.loss = -(logits[label] - m - std::log(sum));
  r.grad_logits[static_cast<std::size_t>(label)] -= T(1);
  return r;
}

template <typename T>
SoftmaxCeResult<T> softmax_cross_entropy(const Tensor<T>& logits, int label) {
  require(logits.rank() == 1, "softmax_cross_entropy: logits must be rank 1");
  return softmax_cross_entropy(logits.data(), logits.dim(0), label);
}

/// Per-sample cross-entropy over a [N, K] logit batch. Returns per-sample
/// losses and the per-sample gradients (unscaled); callers apply their own
/// weighting.
template <typename T>
struct BatchCeResult {
  std::vector<T> losses;
  Tensor<T> grad_logits;
};

template <typename T>
BatchCeResult<T> softmax_cross_entropy_batch(const Tensor<T>& logits,
                                             const std::vector<int>& labels) {
  require(logits.rank() == 2, "softmax_cross_entropy_batch: logits must be [N, K]");
  const int N = logits.dim(0), K = logits.dim(1);
  require(static_cast<std::size_t>(N) == labels.size(),
          "softmax_cross_entropy_batch: ", N, " rows vs ", labels.size(),
          " labels");
  BatchCeResult<T> r;
  r.losses.resize(static_cast<std::size_t>(N));
  r.grad_logits = Tensor<T>({N, K});
  for (int n = 0; n < N; ++n) {
    auto s = softmax_cross_entropy(logits.data() + static_cast<std::size_t>(n) * K,
                                   K, labels[static_cast<std::size_t>(n)]);
    r.losses[static_cast<std::size_t>(n)] = s.loss;
    for (int k = 0; k < K; ++k)
      r.grad_logits[static_cast<std::size_t>(n) * K + k] =
          s.grad_logits[static_cast<std::size_t>(k)];
  }
  return r;
}

/// SGD with momentum: v <- momentum*v + g; w <- w - lr*v.
/// Velocity tensors are lazily shaped on first use.
template <typename T>
void sgd_step(LayerParams<T>& params, const LayerParams<T>& grads,
              LayerParams<T>& velocity, double lr, double momentum,
              const std::string& layer_name) {
  require(lr >= 0.0, "sgd_step: lr must be >= 0, got ", lr);
  require(momentum >= 0.0 && momentum < 1.0,
          "sgd_step: momentum must be in [0, 1), got ", momentum);
  if (!grads.kernels.all_finite() || !grads.bias.all_finite())
    throw NumericError(concat("sgd_step: non-finite gradient in layer ",
                              layer_name));
  auto update = [&](Tensor<T>& w, const Tensor<T>& g, Tensor<T>& v) {
    if (!v.same_shape(w)) v = Tensor<T>(w.shape());
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = static_cast<T>(momentum) * v[i] + g[i];
      w[i] -= static_cast<T>(lr) * v[i];
    }
  };
  update(params.kernels, grads.kernels, velocity.kernels);
  update(params.bias, grads.bias, velocity.bias);
}

}  // namespace veil
