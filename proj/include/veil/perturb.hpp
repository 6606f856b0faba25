#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "veil/common.hpp"
#include "veil/data.hpp"
#include "veil/model.hpp"
#include "veil/tensor.hpp"

namespace veil {

enum class AttackMethod { Fgsm, Pgd };

inline std::string to_string(AttackMethod m) {
  return m == AttackMethod::Fgsm ? "fgsm" : "pgd";
}

inline AttackMethod attack_method_from_string(const std::string& s) {
  if (s == "fgsm") return AttackMethod::Fgsm;
  if (s == "pgd") return AttackMethod::Pgd;
  throw ConfigError(concat("unknown attack method: ", s, " (expected fgsm or pgd)"));
}

/// Attack parameters. epsilon is the l-inf radius in [0,1] pixel units.
/// step_size < 0 means "derive as 2.5*epsilon/steps"; FGSM ignores
/// steps/step_size entirely.
struct AttackConfig {
  AttackMethod method = AttackMethod::Pgd;
  double epsilon = 0.2;
  int steps = 40;
  double step_size = -1.0;
  double alpha1 = 1.0;  // hidden-confusion weight
  double alpha2 = 1.0;  // public-preservation weight
  double clip_min = 0.0;
  double clip_max = 1.0;

  double resolved_step_size() const {
    return step_size < 0.0 ? 2.5 * epsilon / steps : step_size;
  }

  /// Strict validation for the CLI/pipeline boundary: PGD must make progress.
  void validate() const {
    require(epsilon > 0.0 && epsilon <= 1.0,
            "attack: epsilon must be in (0, 1], got ", epsilon);
    require(alpha1 >= 0.0 && alpha2 >= 0.0, "attack: weights must be >= 0");
    require(clip_min < clip_max, "attack: empty clip range");
    if (method == AttackMethod::Pgd) {
      require(steps >= 1, "attack: PGD needs steps >= 1, got ", steps);
      require(resolved_step_size() > 0.0,
              "attack: PGD needs step_size > 0, got ", resolved_step_size());
    }
  }
};

struct PerturbedSample {
  Tensor<float> original;
  Tensor<float> perturbed;
  // Attack-objective values: J(x_0) .. J(x_T) for PGD, {J(x)} for FGSM.
  std::vector<double> objective_trace;
};

/// J = alpha1 * CE_hidden - alpha2 * CE_public per sample, with its gradient
/// with respect to the input pixels via a full backward pass.
template <typename T>
struct AttackObjective {
  std::vector<T> values;  // per sample
  Tensor<T> grad_x;
};

template <typename T>
AttackObjective<T> attack_objective_grad(const ForkedClassifier<T>& model,
                                         const Tensor<T>& x,
                                         const std::vector<int>& labels_hidden,
                                         const std::vector<int>& labels_public,
                                         double alpha1, double alpha2,
                                         bool want_grad = true) {
  require(alpha1 >= 0.0 && alpha2 >= 0.0,
          "attack_objective_grad: weights must be >= 0");
  if (!model.all_finite())
    throw NumericError("attack_objective_grad: model parameters are not finite");
  ForwardCache<T> cache;
  auto out = model.forward(x, &cache);
  auto h = softmax_cross_entropy_batch(out.logits_hidden, labels_hidden);
  auto p = softmax_cross_entropy_batch(out.logits_public, labels_public);
  AttackObjective<T> r;
  const int n = x.dim(0);
  r.values.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    r.values[static_cast<std::size_t>(i)] =
        static_cast<T>(alpha1) * h.losses[static_cast<std::size_t>(i)] -
        static_cast<T>(alpha2) * p.losses[static_cast<std::size_t>(i)];
  if (want_grad) {
    for (std::size_t i = 0; i < h.grad_logits.size(); ++i)
      h.grad_logits[i] *= static_cast<T>(alpha1);
    for (std::size_t i = 0; i < p.grad_logits.size(); ++i)
      p.grad_logits[i] *= static_cast<T>(-alpha2);
    model.backward(cache, h.grad_logits, p.grad_logits, nullptr, &r.grad_x);
  }
  return r;
}

/// Elementwise clamp to [origin - eps, origin + eps], then to
/// [clip_min, clip_max].
template <typename T>
Tensor<T> project_linf(const Tensor<T>& candidate, const Tensor<T>& origin,
                       double epsilon, double clip_min, double clip_max) {
  require(candidate.same_shape(origin), "project_linf: shape mismatch ",
          candidate.shape_str(), " vs ", origin.shape_str());
  Tensor<T> out = candidate;
  const T eps = static_cast<T>(epsilon);
  const T lo = static_cast<T>(clip_min), hi = static_cast<T>(clip_max);
  for (std::size_t i = 0; i < out.size(); ++i) {
    T v = out[i];
    const T o = origin[i];
    if (v > o + eps) v = o + eps;
    if (v < o - eps) v = o - eps;
    if (v > hi) v = hi;
    if (v < lo) v = lo;
    out[i] = v;
  }
  return out;
}

namespace detail {

template <typename T>
inline T sign_of(T v) {
  return v > T(0) ? T(1) : v < T(0) ? T(-1) : T(0);
}

}  // namespace detail

/// Batched FGSM: x' = clip(x + eps * sign(grad J), clip range). One gradient
/// evaluation. Returns the perturbed batch and per-sample J(x).
struct BatchAttackResult {
  Tensor<float> perturbed;
  std::vector<std::vector<double>> traces;  // per sample
};

inline BatchAttackResult fgsm_batch(const ForkedClassifier<float>& model,
                                    const Tensor<float>& x,
                                    const std::vector<int>& yh,
                                    const std::vector<int>& yp,
                                    const AttackConfig& cfg) {
  require(cfg.epsilon > 0.0, "fgsm: epsilon must be > 0, got ", cfg.epsilon);
  auto obj = attack_objective_grad(model, x, yh, yp, cfg.alpha1, cfg.alpha2);
  BatchAttackResult r;
  r.perturbed = x;
  const auto eps = static_cast<float>(cfg.epsilon);
  const auto lo = static_cast<float>(cfg.clip_min);
  const auto hi = static_cast<float>(cfg.clip_max);
  for (std::size_t i = 0; i < x.size(); ++i) {
    float v = x[i] + eps * detail::sign_of(obj.grad_x[i]);
    if (v > hi) v = hi;
    if (v < lo) v = lo;
    r.perturbed[i] = v;
  }
  r.traces.resize(static_cast<std::size_t>(x.dim(0)));
  for (std::size_t i = 0; i < r.traces.size(); ++i)
    r.traces[i] = {static_cast<double>(obj.values[i])};
  return r;
}

/// Batched PGD: deterministic start at x, T iterations of signed ascent with
/// projection onto the l-inf ball and clip range after every step. The trace
/// records J at every iterate including the final one (length steps+1).
/// step_size 0 is a legal no-op (returns x); the strict config validation at
/// the pipeline boundary rejects it.
inline BatchAttackResult pgd_batch(const ForkedClassifier<float>& model,
                                   const Tensor<float>& x,
                                   const std::vector<int>& yh,
                                   const std::vector<int>& yp,
                                   const AttackConfig& cfg) {
  require(cfg.epsilon > 0.0, "pgd: epsilon must be > 0, got ", cfg.epsilon);
  require(cfg.steps >= 1, "pgd: steps must be >= 1, got ", cfg.steps);
  const double eta = cfg.resolved_step_size();
  require(eta >= 0.0, "pgd: step_size must be >= 0, got ", eta);

  BatchAttackResult r;
  r.traces.assign(static_cast<std::size_t>(x.dim(0)), {});
  Tensor<float> cur = x;
  for (int t = 0; t < cfg.steps; ++t) {
    auto obj = attack_objective_grad(model, cur, yh, yp, cfg.alpha1, cfg.alpha2);
    for (std::size_t i = 0; i < r.traces.size(); ++i)
      r.traces[i].push_back(static_cast<double>(obj.values[i]));
    for (std::size_t i = 0; i < cur.size(); ++i)
      cur[i] += static_cast<float>(eta) * detail::sign_of(obj.grad_x[i]);
    cur = project_linf(cur, x, cfg.epsilon, cfg.clip_min, cfg.clip_max);
  }
  auto final_obj =
      attack_objective_grad(model, cur, yh, yp, cfg.alpha1, cfg.alpha2, false);
  for (std::size_t i = 0; i < r.traces.size(); ++i)
    r.traces[i].push_back(static_cast<double>(final_obj.values[i]));
  r.perturbed = std::move(cur);
  return r;
}

/// Single-sample wrappers.
inline PerturbedSample fgsm(const ForkedClassifier<float>& model,
                            const Tensor<float>& image, int y_hidden,
                            int y_public, const AttackConfig& cfg) {
  Tensor<float> x({1, image.dim(0), image.dim(1), image.dim(2)});
  std::copy(image.data(), image.data() + image.size(), x.data());
  auto b = fgsm_batch(model, x, {y_hidden}, {y_public}, cfg);
  PerturbedSample s;
  s.original = image;
  s.perturbed = Tensor<float>(image.shape());
  std::copy(b.perturbed.data(), b.perturbed.data() + image.size(),
            s.perturbed.data());
  s.objective_trace = std::move(b.traces[0]);
  return s;
}

inline PerturbedSample pgd(const ForkedClassifier<float>& model,
                           const Tensor<float>& image, int y_hidden,
                           int y_public, const AttackConfig& cfg) {
  Tensor<float> x({1, image.dim(0), image.dim(1), image.dim(2)});
  std::copy(image.data(), image.data() + image.size(), x.data());
  auto b = pgd_batch(model, x, {y_hidden}, {y_public}, cfg);
  PerturbedSample s;
  s.original = image;
  s.perturbed = Tensor<float>(image.shape());
  std::copy(b.perturbed.data(), b.perturbed.data() + image.size(),
            s.perturbed.data());
  s.objective_trace = std::move(b.traces[0]);
  return s;
}

struct SampleDiagnostics {
  std::string id;
  double max_abs_delta = 0.0;
  double objective_start = 0.0;
  double objective_end = 0.0;
};

struct PerturbResult {
  Dataset dataset;  // labels and ids carried through, order preserved
  std::vector<SampleDiagnostics> diagnostics;
};

/// Perturbs every sample of a dataset with the configured attack. Processing
/// is chunked for throughput; results are independent of the chunking because
/// every per-sample computation is pure.
inline PerturbResult perturb_dataset(const ForkedClassifier<float>& model,
                                     const Dataset& ds, const AttackConfig& cfg,
                                     int chunk_size = 64) {
  cfg.validate();
  require(chunk_size >= 1, "perturb_dataset: chunk_size must be >= 1");
  if (!model.all_finite())
    throw NumericError("perturb_dataset: model parameters are not finite");
  const auto& arch = model.arch();
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const auto& px = ds.items[i].pixels;
    require(px.rank() == 3 && px.dim(0) == arch.input_channels &&
                px.dim(1) == arch.image_size && px.dim(2) == arch.image_size,
            "perturb_dataset: sample ", i, " (id ", ds.items[i].id,
            ") geometry ", px.shape_str(), " does not match model input");
  }

  PerturbResult out;
  out.dataset.k_hidden = ds.k_hidden;
  out.dataset.k_public = ds.k_public;
  out.dataset.items.reserve(ds.items.size());
  out.diagnostics.reserve(ds.items.size());

  for (std::size_t begin = 0; begin < ds.items.size();
       begin += static_cast<std::size_t>(chunk_size)) {
    const std::size_t end =
        std::min(ds.items.size(), begin + static_cast<std::size_t>(chunk_size));
    const int n = static_cast<int>(end - begin);
    const auto& first = ds.items.front().pixels;
    Tensor<float> x({n, first.dim(0), first.dim(1), first.dim(2)});
    std::vector<int> yh(static_cast<std::size_t>(n)), yp(static_cast<std::size_t>(n));
    const std::size_t stride = first.size();
    for (int i = 0; i < n; ++i) {
      const auto& item = ds.items[begin + static_cast<std::size_t>(i)];
      std::copy(item.pixels.data(), item.pixels.data() + stride,
                x.data() + static_cast<std::size_t>(i) * stride);
      yh[static_cast<std::size_t>(i)] = item.hidden_label;
      yp[static_cast<std::size_t>(i)] = item.public_label;
    }
    BatchAttackResult batch = cfg.method == AttackMethod::Fgsm
                                  ? fgsm_batch(model, x, yh, yp, cfg)
                                  : pgd_batch(model, x, yh, yp, cfg);
    for (int i = 0; i < n; ++i) {
      const auto& src = ds.items[begin + static_cast<std::size_t>(i)];
      LabeledImage item;
      item.id = src.id;
      item.hidden_label = src.hidden_label;
      item.public_label = src.public_label;
      item.pixels = Tensor<float>(src.pixels.shape());
      std::copy(batch.perturbed.data() + static_cast<std::size_t>(i) * stride,
                batch.perturbed.data() + static_cast<std::size_t>(i + 1) * stride,
                item.pixels.data());
      SampleDiagnostics diag;
      diag.id = src.id;
      for (std::size_t j = 0; j < stride; ++j)
        diag.max_abs_delta =
            std::max(diag.max_abs_delta,
                     std::fabs(static_cast<double>(item.pixels[j]) -
                               static_cast<double>(src.pixels[j])));
      const auto& trace = batch.traces[static_cast<std::size_t>(i)];
      diag.objective_start = trace.front();
      diag.objective_end = trace.back();
      out.dataset.items.push_back(std::move(item));
      out.diagnostics.push_back(std::move(diag));
    }
  }
  return out;
}

}  // namespace veil
