#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "veil/common.hpp"
#include "veil/data.hpp"
#include "veil/layers.hpp"
#include "veil/rng.hpp"
#include "veil/tensor.hpp"

namespace veil {

/// Forked multi-task classifier: a VGG-style trunk of conv-conv-pool blocks,
/// then two heads off the same trunk output. The hidden head is dense only;
/// the public head gets one extra conv block before its dense layers.
struct ArchConfig {
  int input_channels = 3;
  int image_size = 32;
  std::vector<int> trunk_widths = {16, 32, 64};
  int public_block_width = 128;
  int head_width = 128;
  int k_hidden = 5;
  int k_public = 2;

  int blocks() const { return static_cast<int>(trunk_widths.size()); }
  int trunk_spatial() const { return image_size >> blocks(); }
  int public_spatial() const { return trunk_spatial() / 2; }
  int trunk_flat() const {
    return trunk_widths.back() * trunk_spatial() * trunk_spatial();
  }
  int public_flat() const {
    return public_block_width * public_spatial() * public_spatial();
  }

  void validate() const {
    require(input_channels > 0 && image_size > 0, "arch: bad input geometry");
    require(!trunk_widths.empty(), "arch: trunk needs at least one block");
    for (int w : trunk_widths) require(w > 0, "arch: trunk widths must be positive");
    require(public_block_width > 0 && head_width > 0, "arch: bad head widths");
    require(k_hidden >= 2 && k_public >= 2, "arch: both heads need >= 2 classes");
    // Trunk pools once per block, the public head once more.
    require(image_size % (1 << (blocks() + 1)) == 0,
            "arch: image_size ", image_size, " not divisible by ",
            1 << (blocks() + 1));
  }

  bool operator==(const ArchConfig&) const = default;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  double alpha1 = 1.0;  // hidden-loss weight
  double alpha2 = 1.0;  // public-loss weight
  std::uint64_t seed = 1;

  void validate() const {
    require(epochs >= 0, "train: epochs must be >= 0");
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(lr >= 0.0, "train: lr must be >= 0");
    require(momentum >= 0.0 && momentum < 1.0, "train: momentum must be in [0, 1)");
    require(alpha1 >= 0.0 && alpha2 >= 0.0, "train: loss weights must be >= 0");
    require(alpha1 + alpha2 > 0.0, "train: alpha1 + alpha2 must be positive");
  }
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits_hidden;  // [N, K_h]
  Tensor<T> logits_public;  // [N, K_p]
};

namespace detail {

template <typename T>
struct BlockCache {
  Tensor<T> in;   // conv1 input
  Tensor<T> r1;   // post-relu conv1 output
  Tensor<T> r2;   // post-relu conv2 output
  MaxPoolResult<T> pool;
};

}  // namespace detail

/// All intermediate activations of one forward pass, for the backward pass.
template <typename T>
struct ForwardCache {
  std::vector<detail::BlockCache<T>> trunk;
  detail::BlockCache<T> public_block;
  Tensor<T> trunk_flat;  // [N, trunk_flat()] view of the trunk output
  Tensor<T> hidden_r1;   // post-relu hidden fc1
  Tensor<T> public_flat;
  Tensor<T> public_r1;
};

template <typename T>
class ForkedClassifier {
 public:
  ForkedClassifier() = default;

  /// He-initialized model; parameter draw order is the declaration order, so
  /// (arch, seed) fully determines every weight.
  static ForkedClassifier init(const ArchConfig& arch, std::uint64_t seed) {
    arch.validate();
    ForkedClassifier m;
    m.arch_ = arch;
    Rng rng(seed);
    int in_ch = arch.input_channels;
    for (int w : arch.trunk_widths) {
      m.params_.push_back(conv_params_init<T>(w, in_ch, rng));
      m.params_.push_back(conv_params_init<T>(w, w, rng));
      in_ch = w;
    }
    m.params_.push_back(conv_params_init<T>(arch.public_block_width, in_ch, rng));
    m.params_.push_back(
        conv_params_init<T>(arch.public_block_width, arch.public_block_width, rng));
    m.params_.push_back(dense_params_init<T>(arch.head_width, arch.trunk_flat(), rng));
    m.params_.push_back(dense_params_init<T>(arch.k_hidden, arch.head_width, rng));
    m.params_.push_back(dense_params_init<T>(arch.head_width, arch.public_flat(), rng));
    m.params_.push_back(dense_params_init<T>(arch.k_public, arch.head_width, rng));
    return m;
  }

  const ArchConfig& arch() const { return arch_; }
  std::size_t layer_count() const { return params_.size(); }
  LayerParams<T>& layer(std::size_t i) { return params_[i]; }
  const LayerParams<T>& layer(std::size_t i) const { return params_[i]; }

  std::string layer_name(std::size_t i) const {
    const std::size_t nb = arch_.trunk_widths.size();
    if (i < 2 * nb)
      return concat("trunk.b", i / 2, ".conv", i % 2 + 1);
    switch (i - 2 * nb) {
      case 0: return "public.conv1";
      case 1: return "public.conv2";
      case 2: return "hidden.fc1";
      case 3: return "hidden.fc2";
      case 4: return "public.fc1";
      default: return "public.fc2";
    }
  }

  bool all_finite() const {
    for (const auto& p : params_)
      if (!p.kernels.all_finite() || !p.bias.all_finite()) return false;
    return true;
  }

  template <typename U>
  ForkedClassifier<U> cast() const {
    ForkedClassifier<U> out;
    out.arch_ = arch_;
    for (const auto& p : params_) out.params_.push_back(p.template cast<U>());
    return out;
  }

  void check_input(const Tensor<T>& x) const {
    require(x.rank() == 4 && x.dim(1) == arch_.input_channels &&
                x.dim(2) == arch_.image_size && x.dim(3) == arch_.image_size,
            "forward: input geometry ", x.shape_str(), " does not match [Nx",
            arch_.input_channels, "x", arch_.image_size, "x", arch_.image_size,
            "]");
  }

  ForwardResult<T> forward(const Tensor<T>& x,
                           ForwardCache<T>* cache = nullptr) const {
    check_input(x);
    ForwardCache<T> local;
    ForwardCache<T>& c = cache ? *cache : local;
    const std::size_t nb = arch_.trunk_widths.size();
    c.trunk.resize(nb);

    // Inputs arrive in [0,1]; the trunk sees them centered at zero. This is
    // internal to the model (the gradient w.r.t. the raw pixels is
    // unchanged), it just keeps activation statistics sane at depth.
    Tensor<T> cur = x;
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] -= T(0.5);
    for (std::size_t b = 0; b < nb; ++b) {
      auto& bc = c.trunk[b];
      bc.in = std::move(cur);
      bc.r1 = relu_forward(conv2d_forward(bc.in, params_[2 * b]));
      bc.r2 = relu_forward(conv2d_forward(bc.r1, params_[2 * b + 1]));
      bc.pool = maxpool2x2_forward(bc.r2);
      cur = bc.pool.y;
    }
    // Both heads consume this identical trunk output.
    const Tensor<T>& trunk_out = c.trunk.back().pool.y;
    const int n = trunk_out.dim(0);

    ForwardResult<T> out;
    c.trunk_flat = reshape(trunk_out, {n, arch_.trunk_flat()});
    c.hidden_r1 = relu_forward(dense_forward(c.trunk_flat, params_[2 * nb + 2]));
    out.logits_hidden = dense_forward(c.hidden_r1, params_[2 * nb + 3]);

    auto& pb = c.public_block;
    pb.in = trunk_out;
    pb.r1 = relu_forward(conv2d_forward(pb.in, params_[2 * nb]));
    pb.r2 = relu_forward(conv2d_forward(pb.r1, params_[2 * nb + 1]));
    pb.pool = maxpool2x2_forward(pb.r2);
    c.public_flat = reshape(pb.pool.y, {n, arch_.public_flat()});
    c.public_r1 = relu_forward(dense_forward(c.public_flat, params_[2 * nb + 4]));
    out.logits_public = dense_forward(c.public_r1, params_[2 * nb + 5]);
    return out;
  }

  /// Backward pass from per-head logit gradients. Parameter gradients land in
  /// `param_grads` (indexed like the layers) when non-null; the input-image
  /// gradient lands in `grad_input` when non-null.
  void backward(const ForwardCache<T>& c, const Tensor<T>& glogits_hidden,
                const Tensor<T>& glogits_public,
                std::vector<LayerParams<T>>* param_grads,
                Tensor<T>* grad_input) const {
    const bool wp = param_grads != nullptr;
    const std::size_t nb = arch_.trunk_widths.size();
    if (wp) param_grads->resize(params_.size());

    // hidden head
    auto h2 = dense_backward(c.hidden_r1, params_[2 * nb + 3], glogits_hidden, wp);
    if (wp) (*param_grads)[2 * nb + 3] = std::move(h2.params);
    Tensor<T> gh = relu_backward(c.hidden_r1, h2.input);
    auto h1 = dense_backward(c.trunk_flat, params_[2 * nb + 2], gh, wp);
    if (wp) (*param_grads)[2 * nb + 2] = std::move(h1.params);

    // public head dense part
    auto p2 = dense_backward(c.public_r1, params_[2 * nb + 5], glogits_public, wp);
    if (wp) (*param_grads)[2 * nb + 5] = std::move(p2.params);
    Tensor<T> gp = relu_backward(c.public_r1, p2.input);
    auto p1 = dense_backward(c.public_flat, params_[2 * nb + 4], gp, wp);
    if (wp) (*param_grads)[2 * nb + 4] = std::move(p1.params);

    // public head conv block
    const auto& pb = c.public_block;
    Tensor<T> g = reshape(p1.input, pb.pool.y.shape());
    g = maxpool2x2_backward(g, pb.pool.argmax, pb.r2.shape());
    g = relu_backward(pb.r2, g);
    auto pc2 = conv2d_backward(pb.r1, params_[2 * nb + 1], g, wp);
    if (wp) (*param_grads)[2 * nb + 1] = std::move(pc2.params);
    g = relu_backward(pb.r1, pc2.input);
    auto pc1 = conv2d_backward(pb.in, params_[2 * nb], g, wp);
    if (wp) (*param_grads)[2 * nb] = std::move(pc1.params);

    // fork point: sum of both head gradients w.r.t. the trunk output
    Tensor<T> gtrunk = reshape(h1.input, pb.in.shape());
    for (std::size_t i = 0; i < gtrunk.size(); ++i) gtrunk[i] += pc1.input[i];

    // trunk, last block first
    for (std::size_t b = nb; b-- > 0;) {
      const auto& bc = c.trunk[b];
      Tensor<T> gb = maxpool2x2_backward(gtrunk, bc.pool.argmax, bc.r2.shape());
      gb = relu_backward(bc.r2, gb);
      auto c2 = conv2d_backward(bc.r1, params_[2 * b + 1], gb, wp);
      if (wp) (*param_grads)[2 * b + 1] = std::move(c2.params);
      gb = relu_backward(bc.r1, c2.input);
      const bool need_input = b > 0 || grad_input != nullptr;
      if (!need_input && !wp) break;
      auto c1 = conv2d_backward(bc.in, params_[2 * b], gb, wp);
      if (wp) (*param_grads)[2 * b] = std::move(c1.params);
      gtrunk = std::move(c1.input);
    }
    if (grad_input) *grad_input = std::move(gtrunk);
  }

  static Tensor<T> reshape(const Tensor<T>& t, std::vector<int> shape) {
    Tensor<T> out(std::move(shape));
    require(out.size() == t.size(), "reshape: size mismatch ", t.shape_str(),
            " -> ", out.shape_str());
    std::copy(t.data(), t.data() + t.size(), out.data());
    return out;
  }

  template <typename U>
  friend class ForkedClassifier;

 private:
  ArchConfig arch_;
  std::vector<LayerParams<T>> params_;
};

// --- Multi-task loss ------------------------------------------------------------

template <typename T>
struct MultitaskLossResult {
  T loss = T(0);
  Tensor<T> grad_logits_hidden;
  Tensor<T> grad_logits_public;
};

/// loss = alpha1 * mean CE(hidden) + alpha2 * mean CE(public); head gradients
/// are scaled the same way.
template <typename T>
MultitaskLossResult<T> multitask_loss(const Tensor<T>& logits_hidden,
                                      const std::vector<int>& labels_hidden,
                                      const Tensor<T>& logits_public,
                                      const std::vector<int>& labels_public,
                                      double alpha1, double alpha2) {
  require(alpha1 >= 0.0 && alpha2 >= 0.0,
          "multitask_loss: negative loss weights are not allowed");
  const int n = logits_hidden.dim(0);
  require(n == logits_public.dim(0), "multitask_loss: batch size mismatch");
  auto h = softmax_cross_entropy_batch(logits_hidden, labels_hidden);
  auto p = softmax_cross_entropy_batch(logits_public, labels_public);
  MultitaskLossResult<T> r;
  const T inv_n = T(1) / static_cast<T>(n);
  T hsum = T(0), psum = T(0);
  for (int i = 0; i < n; ++i) {
    hsum += h.losses[static_cast<std::size_t>(i)];
    psum += p.losses[static_cast<std::size_t>(i)];
  }
  r.loss = static_cast<T>(alpha1) * hsum * inv_n +
           static_cast<T>(alpha2) * psum * inv_n;
  r.grad_logits_hidden = std::move(h.grad_logits);
  r.grad_logits_public = std::move(p.grad_logits);
  const T sh = static_cast<T>(alpha1) * inv_n;
  const T sp = static_cast<T>(alpha2) * inv_n;
  for (std::size_t i = 0; i < r.grad_logits_hidden.size(); ++i)
    r.grad_logits_hidden[i] *= sh;
  for (std::size_t i = 0; i < r.grad_logits_public.size(); ++i)
    r.grad_logits_public[i] *= sp;
  return r;
}

// --- Prediction -------------------------------------------------------------------

/// Index of the largest value; ties break toward the lowest index.
template <typename T>
int argmax_lowest(const T* row, int k) {
  int best = 0;
  for (int j = 1; j < k; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

/// Argmax per head; ties break toward the lowest class index.
template <typename T>
std::pair<std::vector<int>, std::vector<int>> predict(
    const ForkedClassifier<T>& model, const Tensor<T>& x) {
  auto out = model.forward(x);
  auto argmax_rows = [](const Tensor<T>& logits) {
    const int n = logits.dim(0), k = logits.dim(1);
    std::vector<int> best(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i)
      best[static_cast<std::size_t>(i)] =
          argmax_lowest(logits.data() + static_cast<std::size_t>(i) * k, k);
    return best;
  };
  return {argmax_rows(out.logits_hidden), argmax_rows(out.logits_public)};
}

// --- Training ----------------------------------------------------------------------

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double hidden_acc = 0.0;
  double public_acc = 0.0;
};

namespace detail {

inline void gather_batch(const Dataset& ds, const std::vector<std::size_t>& order,
                         std::size_t begin, std::size_t end, Tensor<float>& x,
                         std::vector<int>& yh, std::vector<int>& yp) {
  const int n = static_cast<int>(end - begin);
  const auto& first = ds.items.front().pixels;
  x = Tensor<float>({n, first.dim(0), first.dim(1), first.dim(2)});
  yh.resize(static_cast<std::size_t>(n));
  yp.resize(static_cast<std::size_t>(n));
  const std::size_t stride = first.size();
  for (int i = 0; i < n; ++i) {
    const auto& item = ds.items[order[begin + static_cast<std::size_t>(i)]];
    std::copy(item.pixels.data(), item.pixels.data() + stride,
              x.data() + static_cast<std::size_t>(i) * stride);
    yh[static_cast<std::size_t>(i)] = item.hidden_label;
    yp[static_cast<std::size_t>(i)] = item.public_label;
  }
}

}  // namespace detail

/// SGD training over shuffled mini-batches. Deterministic for a fixed
/// (seed, dataset, config): shuffles come from the seeded Rng and every
/// gradient reduction has a fixed summation order.
inline std::vector<EpochStats> train(ForkedClassifier<float>& model,
                                     const Dataset& ds, const TrainConfig& cfg,
                                     std::ostream* log = nullptr) {
  cfg.validate();
  require(!ds.empty(), "train: dataset is empty");
  const auto& arch = model.arch();
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const auto& it = ds.items[i];
    require(it.hidden_label >= 0 && it.hidden_label < arch.k_hidden,
            "train: sample ", i, " hidden label ", it.hidden_label,
            " outside [0, ", arch.k_hidden, ")");
    require(it.public_label >= 0 && it.public_label < arch.k_public,
            "train: sample ", i, " public label ", it.public_label,
            " outside [0, ", arch.k_public, ")");
  }

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<LayerParams<float>> velocity(model.layer_count());
  std::vector<EpochStats> log_out;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.bounded(i)]);

    double loss_sum = 0.0;
    std::size_t correct_h = 0, correct_p = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      Tensor<float> x;
      std::vector<int> yh, yp;
      detail::gather_batch(ds, order, begin, end, x, yh, yp);

      ForwardCache<float> cache;
      auto out = model.forward(x, &cache);
      auto ml = multitask_loss(out.logits_hidden, yh, out.logits_public, yp,
                               cfg.alpha1, cfg.alpha2);
      if (!std::isfinite(static_cast<double>(ml.loss)))
        throw NumericError(concat("train: non-finite loss at epoch ", epoch,
                                  ", batch ", begin / cfg.batch_size));
      loss_sum += static_cast<double>(ml.loss) * static_cast<double>(end - begin);

      const int n = x.dim(0);
      for (int i = 0; i < n; ++i) {
        const float* rh = out.logits_hidden.data() +
                          static_cast<std::size_t>(i) * arch.k_hidden;
        const float* rp = out.logits_public.data() +
                          static_cast<std::size_t>(i) * arch.k_public;
        int bh = 0, bp = 0;
        for (int j = 1; j < arch.k_hidden; ++j)
          if (rh[j] > rh[bh]) bh = j;
        for (int j = 1; j < arch.k_public; ++j)
          if (rp[j] > rp[bp]) bp = j;
        if (bh == yh[static_cast<std::size_t>(i)]) ++correct_h;
        if (bp == yp[static_cast<std::size_t>(i)]) ++correct_p;
      }

      std::vector<LayerParams<float>> grads;
      model.backward(cache, ml.grad_logits_hidden, ml.grad_logits_public,
                     &grads, nullptr);
      for (std::size_t li = 0; li < grads.size(); ++li)
        sgd_step(model.layer(li), grads[li], velocity[li], cfg.lr, cfg.momentum,
                 model.layer_name(li));
    }
    if (!model.all_finite())
      throw NumericError(concat("train: non-finite parameters after epoch ", epoch));

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / static_cast<double>(ds.size());
    stats.hidden_acc = static_cast<double>(correct_h) / static_cast<double>(ds.size());
    stats.public_acc = static_cast<double>(correct_p) / static_cast<double>(ds.size());
    log_out.push_back(stats);
    if (log)
      *log << "epoch " << epoch << " loss " << stats.loss << " hidden_acc "
           << stats.hidden_acc << " public_acc " << stats.public_acc << "\n";
  }
  return log_out;
}

// --- Serialization ------------------------------------------------------------------

struct BadMagicError : IoError {
  using IoError::IoError;
};
struct VersionError : IoError {
  using IoError::IoError;
};
struct ChecksumError : IoError {
  using IoError::IoError;
};

namespace detail {

inline void push_u32le(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 24));
}

inline std::uint32_t read_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline constexpr char kModelMagic[4] = {'F', 'O', 'B', '1'};
inline constexpr std::uint32_t kModelVersion = 1;

/// FOB1 model file: magic, version, architecture descriptor, then every
/// parameter tensor as little-endian float32 in declaration order, and a
/// trailing FNV-1a 64 checksum of everything after the magic.
inline void save_model(const ForkedClassifier<float>& model,
                       const std::string& path) {
  std::vector<std::uint8_t> payload;
  const auto& arch = model.arch();
  detail::push_u32le(payload, kModelVersion);
  detail::push_u32le(payload, static_cast<std::uint32_t>(arch.input_channels));
  detail::push_u32le(payload, static_cast<std::uint32_t>(arch.image_size));
  detail::push_u32le(payload, static_cast<std::uint32_t>(arch.trunk_widths.size()));
  for (int w : arch.trunk_widths)
    detail::push_u32le(payload, static_cast<std::uint32_t>(w));
  detail::push_u32le(payload, static_cast<std::uint32_t>(arch.public_block_width));
  detail::push_u32le(payload, static_cast<std::uint32_t>(arch.head_width));
  detail::push_u32le(payload, static_cast<std::uint32_t>(arch.k_hidden));
  detail::push_u32le(payload, static_cast<std::uint32_t>(arch.k_public));
  for (std::size_t li = 0; li < model.layer_count(); ++li) {
    auto dump = [&payload](const Tensor<float>& t) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        std::uint32_t bits;
        const float v = t[i];
        std::memcpy(&bits, &v, 4);
        detail::push_u32le(payload, bits);
      }
    };
    dump(model.layer(li).kernels);
    dump(model.layer(li).bias);
  }

  std::vector<std::uint8_t> file;
  file.insert(file.end(), kModelMagic, kModelMagic + 4);
  file.insert(file.end(), payload.begin(), payload.end());
  const std::uint64_t checksum = fnv1a64(payload.data(), payload.size());
  for (int i = 0; i < 8; ++i)
    file.push_back(static_cast<std::uint8_t>(checksum >> (8 * i)));
  detail::write_file_bytes(path, file);
}

inline ForkedClassifier<float> load_model(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() < 4)
    throw ChecksumError(concat(path, ": file too short to be a model"));
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    throw BadMagicError(concat(path, ": bad magic (not a FOB1 model file)"));
  if (bytes.size() < 16)
    throw ChecksumError(concat(path, ": truncated model file"));

  const std::size_t payload_len = bytes.size() - 4 - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + i]) << (8 * i);
  if (fnv1a64(bytes.data() + 4, payload_len) != stored)
    throw ChecksumError(concat(path, ": checksum mismatch (corrupt or truncated)"));

  const std::uint8_t* p = bytes.data() + 4;
  const std::uint8_t* end = bytes.data() + 4 + payload_len;
  auto take_u32 = [&]() {
    if (p + 4 > end) throw IoError(concat(path, ": malformed model payload"));
    const std::uint32_t v = detail::read_u32le(p);
    p += 4;
    return v;
  };
  const std::uint32_t version = take_u32();
  if (version != kModelVersion)
    throw VersionError(concat(path, ": unsupported model version ", version,
                              " (expected ", kModelVersion, ")"));
  ArchConfig arch;
  arch.input_channels = static_cast<int>(take_u32());
  arch.image_size = static_cast<int>(take_u32());
  const std::uint32_t nb = take_u32();
  require<IoError>(nb >= 1 && nb <= 16, path, ": implausible block count ", nb);
  arch.trunk_widths.clear();
  for (std::uint32_t i = 0; i < nb; ++i)
    arch.trunk_widths.push_back(static_cast<int>(take_u32()));
  arch.public_block_width = static_cast<int>(take_u32());
  arch.head_width = static_cast<int>(take_u32());
  arch.k_hidden = static_cast<int>(take_u32());
  arch.k_public = static_cast<int>(take_u32());
  arch.validate();

  auto model = ForkedClassifier<float>::init(arch, 0);
  for (std::size_t li = 0; li < model.layer_count(); ++li) {
    auto fill = [&](Tensor<float>& t) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        const std::uint32_t bits = take_u32();
        float v;
        std::memcpy(&v, &bits, 4);
        t[i] = v;
      }
    };
    fill(model.layer(li).kernels);
    fill(model.layer(li).bias);
  }
  require<IoError>(p == end, path, ": trailing bytes after parameters");
  return model;
}

}  // namespace veil
