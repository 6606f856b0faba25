#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "veil/layers.hpp"
#include "veil/rng.hpp"
#include "veil/tensor.hpp"

namespace veil {

struct GradCheckGroup {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double tolerance = 0.0;

  bool pass() const {
    for (const auto& g : groups)
      if (!g.pass) return false;
    return true;
  }
};

/// One perturbable parameter group: `values` are wiggled in place, `analytic`
/// holds the gradient under test (same length).
struct GradCheckSlot {
  std::string name;
  double* values;
  const double* analytic;
  std::size_t count;
};

/// Compares analytic gradients against central finite differences of
/// `loss_fn`, which must re-evaluate the loss from the current contents of
/// every slot. Error metric per coordinate: |a - n| / max(1, |a|, |n|).
/// 64-bit only; h defaults to 1e-5.
inline GradCheckReport grad_check(const std::function<double()>& loss_fn,
                                  const std::vector<GradCheckSlot>& slots,
                                  double tolerance, double h = 1e-5) {
  GradCheckReport report;
  report.tolerance = tolerance;
  for (const auto& slot : slots) {
    GradCheckGroup group;
    group.name = slot.name;
    for (std::size_t i = 0; i < slot.count; ++i) {
      const double saved = slot.values[i];
      slot.values[i] = saved + h;
      const double f_plus = loss_fn();
      slot.values[i] = saved - h;
      const double f_minus = loss_fn();
      slot.values[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double analytic = slot.analytic[i];
      const double denom =
          std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
      const double rel = std::fabs(analytic - numeric) / denom;
      if (rel > group.max_rel_err) group.max_rel_err = rel;
    }
    group.pass = group.max_rel_err < tolerance;
    report.groups.push_back(std::move(group));
  }
  return report;
}

enum class LayerKind { Conv2d, Dense, Relu, MaxPool, SoftmaxCe };

/// A randomized layer instance for verification: geometry plus the seed that
/// generates its parameters and input.
struct LayerCheckSpec {
  LayerKind kind = LayerKind::Conv2d;
  int batch = 1;
  int in_channels = 2;   // conv/pool/relu channel count, dense input dim
  int out_channels = 3;  // conv output channels, dense output dim
  int height = 6;
  int width = 6;
  std::uint64_t seed = 1;
};

namespace detail {

// Inputs drawn away from kinks: relu/maxpool gradients are only defined where
// the argmax/sign pattern is locally stable, so magnitudes are kept >= 0.1 and
// pool windows are made tie-free by construction.
inline Tensor<double> smooth_random_input(const std::vector<int>& shape,
                                          Rng& rng) {
  Tensor<double> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double mag = 0.1 + 0.9 * rng.uniform();
    t[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

inline std::vector<double> random_upstream(std::size_t n, Rng& rng) {
  std::vector<double> g(n);
  for (auto& v : g) v = rng.uniform(-1.0, 1.0);
  return g;
}

}  // namespace detail

/// Finite-difference verification of one randomized layer instance.
/// The scalar objective is sum(upstream .* layer_output) with a fixed random
/// upstream, whose analytic input/parameter gradients are exactly the layer's
/// backward pass applied to that upstream.
inline GradCheckReport grad_check_layer(const LayerCheckSpec& spec,
                                        double tolerance, double h = 1e-5) {
  Rng rng(spec.seed);
  switch (spec.kind) {
    case LayerKind::Conv2d: {
      Tensor<double> x = detail::smooth_random_input(
          {spec.batch, spec.in_channels, spec.height, spec.width}, rng);
      LayerParams<double> p =
          conv_params_init<double>(spec.out_channels, spec.in_channels, rng);
      for (std::size_t i = 0; i < p.bias.size(); ++i)
        p.bias[i] = rng.uniform(-0.5, 0.5);
      auto up = detail::random_upstream(
          static_cast<std::size_t>(spec.batch) * spec.out_channels *
              spec.height * spec.width,
          rng);
      auto loss = [&]() {
        Tensor<double> y = conv2d_forward(x, p);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += up[i] * y[i];
        return s;
      };
      Tensor<double> gy({spec.batch, spec.out_channels, spec.height, spec.width});
      for (std::size_t i = 0; i < gy.size(); ++i) gy[i] = up[i];
      auto grads = conv2d_backward(x, p, gy);
      return grad_check(loss,
                        {{"input", x.data(), grads.input.data(), x.size()},
                         {"kernels", p.kernels.data(),
                          grads.params.kernels.data(), p.kernels.size()},
                         {"bias", p.bias.data(), grads.params.bias.data(),
                          p.bias.size()}},
                        tolerance, h);
    }
    case LayerKind::Dense: {
      Tensor<double> x =
          detail::smooth_random_input({spec.batch, spec.in_channels}, rng);
      LayerParams<double> p =
          dense_params_init<double>(spec.out_channels, spec.in_channels, rng);
      for (std::size_t i = 0; i < p.bias.size(); ++i)
        p.bias[i] = rng.uniform(-0.5, 0.5);
      auto up = detail::random_upstream(
          static_cast<std::size_t>(spec.batch) * spec.out_channels, rng);
      auto loss = [&]() {
        Tensor<double> y = dense_forward(x, p);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += up[i] * y[i];
        return s;
      };
      Tensor<double> gy({spec.batch, spec.out_channels});
      for (std::size_t i = 0; i < gy.size(); ++i) gy[i] = up[i];
      auto grads = dense_backward(x, p, gy);
      return grad_check(loss,
                        {{"input", x.data(), grads.input.data(), x.size()},
                         {"weights", p.kernels.data(),
                          grads.params.kernels.data(), p.kernels.size()},
                         {"bias", p.bias.data(), grads.params.bias.data(),
                          p.bias.size()}},
                        tolerance, h);
    }
    case LayerKind::Relu: {
      Tensor<double> x = detail::smooth_random_input(
          {spec.batch, spec.in_channels, spec.height, spec.width}, rng);
      auto up = detail::random_upstream(x.size(), rng);
      auto loss = [&]() {
        Tensor<double> y = relu_forward(x);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += up[i] * y[i];
        return s;
      };
      Tensor<double> gy(x.shape());
      for (std::size_t i = 0; i < gy.size(); ++i) gy[i] = up[i];
      Tensor<double> gx = relu_backward(x, gy);
      return grad_check(loss, {{"input", x.data(), gx.data(), x.size()}},
                        tolerance, h);
    }
    case LayerKind::MaxPool: {
      // Tie-free windows: every element gets a distinct magnitude.
      Tensor<double> x({spec.batch, spec.in_channels, spec.height, spec.width});
      for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = rng.uniform(-1.0, 1.0) + 0.001 * static_cast<double>(i % 97);
      auto up = detail::random_upstream(x.size() / 4, rng);
      auto loss = [&]() {
        auto r = maxpool2x2_forward(x);
        double s = 0.0;
        for (std::size_t i = 0; i < r.y.size(); ++i) s += up[i] * r.y[i];
        return s;
      };
      auto fwd = maxpool2x2_forward(x);
      Tensor<double> gy(fwd.y.shape());
      for (std::size_t i = 0; i < gy.size(); ++i) gy[i] = up[i];
      Tensor<double> gx = maxpool2x2_backward(gy, fwd.argmax, x.shape());
      return grad_check(loss, {{"input", x.data(), gx.data(), x.size()}},
                        tolerance, h);
    }
    case LayerKind::SoftmaxCe: {
      const int k = spec.in_channels;
      Tensor<double> logits({k});
      for (std::size_t i = 0; i < logits.size(); ++i)
        logits[i] = rng.uniform(-2.0, 2.0);
      const int label = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(k)));
      auto loss = [&]() { return softmax_cross_entropy(logits, label).loss; };
      auto r = softmax_cross_entropy(logits, label);
      return grad_check(
          loss, {{"logits", logits.data(), r.grad_logits.data(), logits.size()}},
          tolerance, h);
    }
  }
  throw ConfigError("grad_check_layer: unknown layer kind");
}

}  // namespace veil
