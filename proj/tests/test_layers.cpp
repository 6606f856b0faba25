#include <doctest.h>

#include <cmath>

#include "veil/grad_check.hpp"
#include "veil/layers.hpp"
#include "veil/rng.hpp"

using namespace veil;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                        double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace

TEST_CASE("conv2d scalar product through the center tap") {
  Tensor<double> x({1, 1, 1, 1});
  x[0] = 2.0;
  LayerParams<double> p;
  p.kernels = Tensor<double>({1, 1, 3, 3});
  p.kernels[4] = 3.0;  // center
  p.bias = Tensor<double>({1});
  auto y = conv2d_forward(x, p);
  CHECK(y.size() == 1);
  CHECK(y[0] == doctest::Approx(6.0));
}

TEST_CASE("conv2d identity kernel is the identity map exactly") {
  Rng rng(5);
  auto x = random_tensor<double>({2, 3, 8, 8}, rng);
  LayerParams<double> p;
  p.kernels = Tensor<double>({3, 3, 3, 3});
  for (int c = 0; c < 3; ++c) p.kernels[(c * 3 + c) * 9 + 4] = 1.0;
  p.bias = Tensor<double>({3});
  auto y = conv2d_forward(x, p);
  REQUIRE(y.same_shape(x));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d rejects channel mismatch naming both shapes") {
  Tensor<float> x({1, 2, 4, 4});
  LayerParams<float> p;
  p.kernels = Tensor<float>({3, 5, 3, 3});
  p.bias = Tensor<float>({3});
  CHECK_THROWS_WITH_AS(conv2d_forward(x, p),
                       doctest::Contains("[1x2x4x4]"), ConfigError);
  CHECK_THROWS_WITH_AS(conv2d_forward(x, p),
                       doctest::Contains("[3x5x3x3]"), ConfigError);
}

TEST_CASE("conv2d gradients match finite differences") {
  LayerCheckSpec spec;
  spec.kind = LayerKind::Conv2d;
  spec.batch = 1;
  spec.in_channels = 2;
  spec.out_channels = 3;
  spec.height = 5;
  spec.width = 5;
  spec.seed = 101;
  auto report = grad_check_layer(spec, 1e-6);
  for (const auto& g : report.groups) {
    INFO(g.name, " max rel err ", g.max_rel_err);
    CHECK(g.pass);
  }
}

TEST_CASE("conv2d forward is identical regardless of thread count") {
  Rng rng(17);
  auto x = random_tensor<float>({4, 3, 16, 16}, rng);
  LayerParams<float> p;
  Rng prng(18);
  p = conv_params_init<float>(8, 3, prng);
  const int saved = thread_count();
  set_thread_count(1);
  auto y1 = conv2d_forward(x, p);
  set_thread_count(4);
  auto y2 = conv2d_forward(x, p);
  set_thread_count(saved);
  CHECK(y1 == y2);
}

TEST_CASE("maxpool picks the window maximum") {
  Tensor<double> x({1, 1, 2, 2});
  x[0] = 1;
  x[1] = 2;
  x[2] = 3;
  x[3] = 4;
  auto r = maxpool2x2_forward(x);
  CHECK(r.y.size() == 1);
  CHECK(r.y[0] == 4.0);
}

TEST_CASE("maxpool tie-break routes gradient to the lowest linear index") {
  auto x = Tensor<double>::full({1, 1, 2, 2}, 5.0);
  auto r = maxpool2x2_forward(x);
  CHECK(r.y[0] == 5.0);
  CHECK(r.argmax[0] == 0);
  Tensor<double> gy({1, 1, 1, 1});
  gy[0] = 1.0;
  auto gx = maxpool2x2_backward(gy, r.argmax, {1, 1, 2, 2});
  CHECK(gx[0] == 1.0);
  CHECK(gx[1] == 0.0);
  CHECK(gx[2] == 0.0);
  CHECK(gx[3] == 0.0);
}

TEST_CASE("maxpool rejects odd spatial dims") {
  Tensor<float> x({1, 1, 3, 4});
  CHECK_THROWS_AS(maxpool2x2_forward(x), ConfigError);
}

TEST_CASE("maxpool gradient matches finite differences away from ties") {
  LayerCheckSpec spec;
  spec.kind = LayerKind::MaxPool;
  spec.batch = 2;
  spec.in_channels = 2;
  spec.height = 6;
  spec.width = 6;
  spec.seed = 31;
  auto report = grad_check_layer(spec, 1e-6);
  CHECK(report.pass());
}

TEST_CASE("relu forward and the all-negative edge case") {
  Tensor<double> x({2});
  x[0] = -1.0;
  x[1] = 2.0;
  auto y = relu_forward(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 2.0);

  auto neg = Tensor<double>::full({1, 1, 2, 2}, -3.0);
  auto yn = relu_forward(neg);
  auto gn = relu_backward(neg, Tensor<double>::full({1, 1, 2, 2}, 1.0));
  for (std::size_t i = 0; i < yn.size(); ++i) {
    CHECK(yn[i] == 0.0);
    CHECK(gn[i] == 0.0);
  }
}

TEST_CASE("relu gradient matches finite differences away from zero") {
  LayerCheckSpec spec;
  spec.kind = LayerKind::Relu;
  spec.batch = 2;
  spec.in_channels = 3;
  spec.height = 4;
  spec.width = 4;
  spec.seed = 77;
  auto report = grad_check_layer(spec, 1e-6);
  CHECK(report.pass());
}

TEST_CASE("dense identity weights pass the input through") {
  Tensor<double> x({1, 4});
  for (int i = 0; i < 4; ++i) x[i] = i + 0.5;
  LayerParams<double> p;
  p.kernels = Tensor<double>({4, 4});
  for (int i = 0; i < 4; ++i) p.kernels[i * 4 + i] = 1.0;
  p.bias = Tensor<double>({4});
  auto y = dense_forward(x, p);
  for (int i = 0; i < 4; ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("dense zero input returns the bias") {
  Tensor<double> x({2, 3});
  LayerParams<double> p;
  p.kernels = Tensor<double>::full({4, 3}, 0.7);
  p.bias = Tensor<double>({4});
  for (int i = 0; i < 4; ++i) p.bias[i] = i - 1.5;
  auto y = dense_forward(x, p);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 4; ++i) CHECK(y[n * 4 + i] == p.bias[i]);
}

TEST_CASE("dense rejects dimension mismatch") {
  Tensor<float> x({1, 5});
  LayerParams<float> p;
  p.kernels = Tensor<float>({4, 3});
  p.bias = Tensor<float>({4});
  CHECK_THROWS_AS(dense_forward(x, p), ConfigError);
}

TEST_CASE("dense gradients match finite differences") {
  LayerCheckSpec spec;
  spec.kind = LayerKind::Dense;
  spec.batch = 3;
  spec.in_channels = 8;
  spec.out_channels = 4;
  spec.seed = 13;
  auto report = grad_check_layer(spec, 1e-6);
  for (const auto& g : report.groups) {
    INFO(g.name, " max rel err ", g.max_rel_err);
    CHECK(g.pass);
  }
}

TEST_CASE("softmax cross entropy at uniform logits equals ln K") {
  Tensor<double> logits({5});
  auto r = softmax_cross_entropy(logits, 2);
  CHECK(r.loss == doctest::Approx(std::log(5.0)).epsilon(1e-15));
}

TEST_CASE("softmax cross entropy gradient at uniform two-class logits") {
  Tensor<double> logits({2});
  auto r = softmax_cross_entropy(logits, 0);
  CHECK(r.grad_logits[0] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(r.grad_logits[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax cross entropy rejects out-of-range labels") {
  Tensor<float> logits({3});
  CHECK_THROWS_AS(softmax_cross_entropy(logits, 3), ConfigError);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, -1), ConfigError);
}

TEST_CASE("softmax probabilities are nonnegative, sum to one, loss >= 0") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(rng.bounded(9));
    Tensor<double> logits({k});
    for (int i = 0; i < k; ++i) logits[i] = rng.uniform(-30.0, 30.0);
    const int label = static_cast<int>(rng.bounded(k));
    auto r = softmax_cross_entropy(logits, label);
    CHECK(r.loss >= 0.0);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      const double p = r.grad_logits[i] + (i == label ? 1.0 : 0.0);
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("softmax cross entropy loss gradient matches finite differences") {
  LayerCheckSpec spec;
  spec.kind = LayerKind::SoftmaxCe;
  spec.in_channels = 5;
  spec.seed = 59;
  auto report = grad_check_layer(spec, 1e-6);
  CHECK(report.pass());
}

TEST_CASE("sgd with lr = 0 is the identity on parameters") {
  LayerParams<double> p;
  p.kernels = Tensor<double>::full({2, 2}, 1.5);
  p.bias = Tensor<double>::full({2}, -0.5);
  auto saved = p;
  LayerParams<double> g;
  g.kernels = Tensor<double>::full({2, 2}, 3.0);
  g.bias = Tensor<double>::full({2}, 3.0);
  LayerParams<double> v;
  sgd_step(p, g, v, 0.0, 0.9, "test");
  CHECK(p.kernels == saved.kernels);
  CHECK(p.bias == saved.bias);
}

TEST_CASE("sgd update rule without momentum") {
  LayerParams<double> p;
  p.kernels = Tensor<double>::full({1}, 1.0);
  p.bias = Tensor<double>({1});
  LayerParams<double> g;
  g.kernels = Tensor<double>::full({1}, 0.5);
  g.bias = Tensor<double>({1});
  LayerParams<double> v;
  sgd_step(p, g, v, 0.1, 0.0, "test");
  CHECK(p.kernels[0] == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("sgd momentum accumulates across steps") {
  LayerParams<double> p;
  p.kernels = Tensor<double>({1});
  p.bias = Tensor<double>({1});
  LayerParams<double> g;
  g.kernels = Tensor<double>::full({1}, 1.0);
  g.bias = Tensor<double>({1});
  LayerParams<double> v;
  sgd_step(p, g, v, 0.1, 0.9, "test");
  CHECK(p.kernels[0] == doctest::Approx(-0.1).epsilon(1e-12));
  sgd_step(p, g, v, 0.1, 0.9, "test");
  CHECK(p.kernels[0] == doctest::Approx(-0.29).epsilon(1e-12));
}

TEST_CASE("sgd rejects non-finite gradients naming the layer") {
  LayerParams<float> p;
  p.kernels = Tensor<float>({2});
  p.bias = Tensor<float>({2});
  LayerParams<float> g;
  g.kernels = Tensor<float>({2});
  g.kernels[1] = std::numeric_limits<float>::quiet_NaN();
  g.bias = Tensor<float>({2});
  LayerParams<float> v;
  CHECK_THROWS_WITH_AS(sgd_step(p, g, v, 0.1, 0.0, "trunk.b0.conv1"),
                       doctest::Contains("trunk.b0.conv1"), NumericError);
}

TEST_CASE("sgd validates hyperparameters") {
  LayerParams<float> p, g, v;
  p.kernels = g.kernels = Tensor<float>({1});
  p.bias = g.bias = Tensor<float>({1});
  CHECK_THROWS_AS(sgd_step(p, g, v, -0.1, 0.0, "x"), ConfigError);
  CHECK_THROWS_AS(sgd_step(p, g, v, 0.1, 1.0, "x"), ConfigError);
}
