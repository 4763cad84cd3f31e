#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "graphcaps/nn/adam.hpp"
#include "graphcaps/nn/capsule.hpp"
#include "graphcaps/nn/checkpoint.hpp"
#include "graphcaps/nn/conv.hpp"
#include "graphcaps/nn/dense.hpp"
#include "graphcaps/nn/grad_check.hpp"
#include "graphcaps/nn/loss.hpp"

namespace gc = graphcaps;
namespace nn = graphcaps::nn;

namespace {

gc::Tensor random_tensor(gc::Shape shape, gc::Rng& rng, double scale = 1.0) {
  gc::Tensor t(std::move(shape));
  for (double& x : t.values()) x = scale * (2.0 * gc::uniform01(rng) - 1.0);
  return t;
}

double norm(std::span<double const> v) {
  double q = 0;
  for (double x : v) q += x * x;
  return std::sqrt(q);
}

// Direct definition of valid cross-correlation, one output at a time.
gc::Tensor conv_oracle(gc::Tensor const& x, gc::Tensor const& k, gc::Tensor const& b, std::size_t stride) {
  std::size_t const h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  std::size_t const kh = k.dim(0), kw = k.dim(1), cout = k.dim(3);
  std::size_t const oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
  gc::Tensor y({oh, ow, cout});
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j)
      for (std::size_t o = 0; o < cout; ++o) {
        double acc = b[o];
        for (std::size_t di = 0; di < kh; ++di)
          for (std::size_t dj = 0; dj < kw; ++dj)
            for (std::size_t c = 0; c < cin; ++c) acc += x.at(i * stride + di, j * stride + dj, c) * k.at(di, dj, c, o);
        y.at(i, j, o) = acc;
      }
  return y;
}

// Scalar objective sum(weights * output) used to pull gradients through a layer.
double weighted_sum(std::span<double const> out, std::span<double const> weights) {
  return std::inner_product(out.begin(), out.end(), weights.begin(), 0.0);
}

}  // namespace

TEST(Conv2d, IdentityKernelReproducesInput) {
  gc::Rng rng(1);
  auto x = random_tensor({4, 5, 3}, rng);
  gc::Tensor k({1, 1, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) k.at(0, 0, c, c) = 1.0;
  EXPECT_EQ(nn::conv2d_forward(x, k, gc::Tensor({3}), 1), x);
}

TEST(Conv2d, ZeroInputGivesBias) {
  gc::Rng rng(2);
  auto k = random_tensor({3, 3, 2, 4}, rng);
  gc::Tensor b({4}, {0.5, -1.0, 2.0, 0.0});
  auto y = nn::conv2d_forward(gc::Tensor({6, 6, 2}), k, b, 1);
  ASSERT_EQ(y.shape(), (gc::Shape{4, 4, 4}));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], b[i % 4]);
}

TEST(Conv2d, MatchesLoopOracle) {
  gc::Rng rng(3);
  for (std::size_t stride : {1u, 2u}) {
    auto x = random_tensor({5, 5, 2}, rng);
    auto k = random_tensor({3, 3, 2, 1}, rng);
    auto b = random_tensor({1}, rng);
    auto y = nn::conv2d_forward(x, k, b, stride);
    auto want = conv_oracle(x, k, b, stride);
    ASSERT_EQ(y.shape(), want.shape());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-12);
  }
  auto x = random_tensor({7, 6, 3}, rng);
  auto k = random_tensor({2, 3, 3, 5}, rng);
  auto b = random_tensor({5}, rng);
  auto y = nn::conv2d_forward(x, k, b, 2);
  auto want = conv_oracle(x, k, b, 2);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-12);
}

TEST(Conv2d, BatchedEqualsPerSample) {
  gc::Rng rng(4);
  auto x = random_tensor({3, 6, 5, 2}, rng);
  auto k = random_tensor({3, 2, 2, 4}, rng);
  auto b = random_tensor({4}, rng);
  auto y = nn::conv2d_forward(x, k, b, 1);
  std::size_t const in = 6 * 5 * 2, out = y.size() / 3;
  for (std::size_t s = 0; s < 3; ++s) {
    gc::Tensor xs({6, 5, 2}, std::vector<double>(x.data() + s * in, x.data() + (s + 1) * in));
    auto ys = nn::conv2d_forward(xs, k, b, 1);
    for (std::size_t i = 0; i < out; ++i) EXPECT_NEAR(y[s * out + i], ys[i], 1e-12);
  }
}

TEST(Conv2d, GeometryErrors) {
  EXPECT_THROW(nn::conv2d_forward(gc::Tensor({2, 2, 1}), gc::Tensor({3, 3, 1, 1}), gc::Tensor({1}), 1), gc::ShapeError);
  EXPECT_THROW(nn::conv2d_forward(gc::Tensor({4, 4, 2}), gc::Tensor({3, 3, 1, 1}), gc::Tensor({1}), 1), gc::ShapeError);
  EXPECT_THROW(nn::conv2d_forward(gc::Tensor({4, 4, 1}), gc::Tensor({3, 3, 1, 2}), gc::Tensor({1}), 1), gc::ShapeError);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  gc::Rng rng(5);
  auto x = random_tensor({2, 5, 4, 2}, rng);
  auto k = random_tensor({3, 2, 2, 3}, rng);
  auto b = random_tensor({3}, rng);
  std::size_t const stride = 2;
  auto probe = random_tensor(nn::conv2d_forward(x, k, b, stride).shape(), rng);
  auto grads = nn::conv2d_backward(x, k, stride, probe);

  auto check = [&](gc::Tensor& target, gc::Tensor const& analytic) {
    auto const saved = target;
    auto r = nn::grad_check(
        [&](std::span<double const> p, std::span<double> g) {
          std::copy(p.begin(), p.end(), target.data());
          std::copy(analytic.values().begin(), analytic.values().end(), g.begin());
          return weighted_sum(nn::conv2d_forward(x, k, b, stride).values(), probe.values());
        },
        std::vector<double>(target.values().begin(), target.values().end()));
    target = saved;
    EXPECT_LT(r.max_relative_error, 1e-7);
  };
  check(x, grads.input);
  check(k, grads.kernel);
  check(b, grads.bias);

  // The layer form accumulates the same gradients.
  nn::Conv2d layer("c", 3, 2, 2, 3, stride);
  layer.weight.value = k;
  layer.bias.value = b;
  layer.forward(x);
  auto dx = layer.backward(probe, true);
  for (std::size_t i = 0; i < dx.size(); ++i) EXPECT_NEAR(dx[i], grads.input[i], 1e-12);
  for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(layer.weight.grad[i], grads.kernel[i], 1e-12);
}

TEST(Dense, GradientsMatchFiniteDifferences) {
  gc::Rng rng(6);
  nn::Dense layer("d", 5, 3);
  layer.init_glorot(rng);
  auto x = random_tensor({4, 5}, rng);
  auto probe = random_tensor({4, 3}, rng);
  auto params = std::vector<nn::Parameter*>{&layer.weight, &layer.bias};
  auto r = nn::grad_check(params, [&] {
    for (auto* p : params) p->zero_grad();
    double f = weighted_sum(layer.forward(x).values(), probe.values());
    layer.backward(probe, false);
    return f;
  });
  EXPECT_LT(r.max_relative_error, 1e-7);
}

TEST(Activations, SigmoidAndReluBackward) {
  gc::Tensor x({4}, {-2.0, -0.0, 0.5, 3.0});
  auto y = nn::relu(x);
  EXPECT_EQ(y, gc::Tensor({4}, {0.0, 0.0, 0.5, 3.0}));
  EXPECT_EQ(nn::relu_backward(y, gc::Tensor({4}, 1.0)), gc::Tensor({4}, {0.0, 0.0, 1.0, 1.0}));
  EXPECT_DOUBLE_EQ(nn::sigmoid(0.0), 0.5);
  EXPECT_NEAR(nn::sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_DOUBLE_EQ(nn::sigmoid(800.0), 1.0);
  auto s = nn::sigmoid(gc::Tensor({1}, {0.3}));
  auto ds = nn::sigmoid_backward(s, gc::Tensor({1}, 1.0));
  double const h = 1e-6;
  EXPECT_NEAR(ds[0], (nn::sigmoid(0.3 + h) - nn::sigmoid(0.3 - h)) / (2 * h), 1e-9);
}

TEST(Dropout, InferenceIsIdentityTrainingRescales) {
  gc::Rng rng(7);
  nn::Dropout d(0.5);
  gc::Tensor x({1000}, 1.0);
  EXPECT_EQ(d.forward(x, false, rng), x);
  auto y = d.forward(x, true, rng);
  std::size_t zeros = 0;
  for (double v : y.values()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    zeros += v == 0.0;
  }
  EXPECT_GT(zeros, 400u);
  EXPECT_LT(zeros, 600u);
  EXPECT_EQ(d.backward(gc::Tensor({1000}, 1.0)), y);
}

TEST(Squash, ClosedFormExamples) {
  std::vector<double> zero(4, 0.0);
  EXPECT_EQ(nn::squash(zero), zero);
  std::vector<double> e{0.0, 1.0, 0.0};
  auto half = nn::squash(e);
  EXPECT_NEAR(half[1], 0.5, 1e-9);
  EXPECT_EQ(half[0], 0.0);
  std::vector<double> three{0.0, 0.0, 3.0};
  EXPECT_NEAR(nn::squash(three)[2], 0.9, 1e-9);
}

TEST(Squash, NormBelowOneAndDirectionKept) {
  gc::Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t const dim = 1 + gc::uniform_below(rng, 16);
    double const scale = std::pow(10.0, 6.0 * gc::uniform01(rng) - 3.0);
    auto s = random_tensor({dim}, rng, scale);
    auto v = nn::squash(s.values());
    double const ns = norm(s.values()), nv = norm(v);
    EXPECT_LT(nv, 1.0);
    EXPECT_NEAR(nv, ns * ns / (1 + ns * ns), 1e-9);
    double const cosine = std::inner_product(v.begin(), v.end(), s.data(), 0.0) / (nv * ns);
    EXPECT_NEAR(cosine, 1.0, 1e-12);
  }
}

TEST(Squash, GradientMatchesFiniteDifferences) {
  gc::Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = random_tensor({8}, rng, trial < 25 ? 0.3 : 3.0);
    auto probe = random_tensor({8}, rng);
    auto r = nn::grad_check(
        [&](std::span<double const> p, std::span<double> g) {
          nn::squash_backward(p, probe.values(), g);
          return weighted_sum(nn::squash(p), probe.values());
        },
        s.values(), 1e-5);
    EXPECT_LT(r.max_relative_error, 1e-6);
  }
}

TEST(Routing, SingleInputSingleOutputIsSquash) {
  gc::Tensor u({1, 1, 4}, {0.3, -1.0, 2.0, 0.5});
  nn::RoutingTrace tr;
  auto v = nn::dynamic_routing(u, 3, &tr);
  auto want = nn::squash(u.values());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(v[i], want[i]);
  for (double c : tr.coupling) EXPECT_EQ(c, 1.0);
}

TEST(Routing, OneIterationCouplesUniformly) {
  gc::Rng rng(10);
  auto u = random_tensor({6, 4, 3}, rng);
  nn::RoutingTrace tr;
  auto v = nn::dynamic_routing(u, 1, &tr);
  for (double c : tr.coupling) EXPECT_DOUBLE_EQ(c, 0.25);
  for (std::size_t j = 0; j < 4; ++j) {
    std::vector<double> s(3, 0.0);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t e = 0; e < 3; ++e) s[e] += 0.25 * u.at(i, j, e);
    auto want = nn::squash(s);
    for (std::size_t e = 0; e < 3; ++e) EXPECT_NEAR(v.at(j, e), want[e], 1e-15);
  }
}

TEST(Routing, CouplingRowsSumToOne) {
  gc::Rng rng(11);
  for (std::size_t iters = 1; iters <= 5; ++iters) {
    for (int trial = 0; trial < 20; ++trial) {
      std::size_t const n_in = 1 + gc::uniform_below(rng, 30), n_out = 1 + gc::uniform_below(rng, 6);
      auto u = random_tensor({n_in, n_out, 5}, rng, 2.0);
      nn::RoutingTrace tr;
      nn::dynamic_routing(u, iters, &tr);
      for (std::size_t t = 0; t < iters; ++t) {
        auto c = tr.coupling_at(t);
        for (std::size_t i = 0; i < n_in; ++i) {
          double sum = 0;
          for (std::size_t j = 0; j < n_out; ++j) sum += c[i * n_out + j];
          EXPECT_NEAR(sum, 1.0, 1e-9);
        }
      }
    }
  }
}

TEST(Routing, GradientThroughUnrolledIterations) {
  gc::Rng rng(12);
  for (std::size_t iters = 1; iters <= 4; ++iters) {
    auto u = random_tensor({7, 3, 4}, rng, 0.8);
    auto probe = random_tensor({3, 4}, rng);
    auto r = nn::grad_check(
        [&](std::span<double const> p, std::span<double> g) {
          gc::Tensor up(u.shape(), std::vector<double>(p.begin(), p.end()));
          nn::RoutingTrace tr;
          auto v = nn::dynamic_routing(up, iters, &tr);
          nn::dynamic_routing_backward(up.values(), tr, probe.values(), g);
          return weighted_sum(v.values(), probe.values());
        },
        u.values());
    EXPECT_LT(r.max_relative_error, 1e-6) << iters << " iterations";
  }
  EXPECT_THROW(nn::dynamic_routing(gc::Tensor({1, 1, 1}), 0), gc::DomainError);
}

TEST(CapsuleTransform, GradientsMatchFiniteDifferences) {
  gc::Rng rng(13);
  nn::CapsuleTransform t("t", 5, 3, 2, 4);
  t.init(0.5, rng);
  auto u = random_tensor({5, 3}, rng);
  auto probe = random_tensor({5, 2, 4}, rng);
  std::vector<double> du(15);
  auto params = std::vector<nn::Parameter*>{&t.weight};
  auto r = nn::grad_check(params, [&] {
    t.weight.zero_grad();
    std::vector<double> uh(t.prediction_size());
    t.forward(u.values(), uh);
    t.backward(u.values(), probe.values(), du);
    return weighted_sum(uh, probe.values());
  });
  EXPECT_LT(r.max_relative_error, 1e-7);
  auto ru = nn::grad_check(
      [&](std::span<double const> p, std::span<double> g) {
        std::vector<double> uh(t.prediction_size());
        t.forward(p, uh);
        t.backward(p, probe.values(), g);
        return weighted_sum(uh, probe.values());
      },
      u.values());
  EXPECT_LT(ru.max_relative_error, 1e-7);
}

TEST(MarginLoss, ClosedFormExamples) {
  std::vector<double> ideal{0.9, 0.1, 0.1};
  EXPECT_EQ(nn::margin_loss(ideal, 0), 0.0);
  std::vector<double> silent{0.0, 0.0};
  EXPECT_DOUBLE_EQ(nn::margin_loss(silent, 0), 0.81);
  std::vector<double> wrong{0.9, 1.0};
  EXPECT_DOUBLE_EQ(nn::margin_loss(wrong, 0, {.lambda = 0.5}), 0.405);
}

TEST(MarginLoss, NonNegativeWithMatchingGradient) {
  gc::Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> n(4);
    for (double& x : n) x = 0.999 * gc::uniform01(rng);
    std::size_t const target = gc::uniform_below(rng, 4);
    EXPECT_GE(nn::margin_loss(n, target), 0.0);
    auto r = nn::grad_check([&](std::span<double const> p, std::span<double> g) { return nn::margin_loss(p, target, {}, g); }, n);
    EXPECT_LT(r.max_relative_error, 1e-6);
  }
}

TEST(BinaryLoss, Examples) {
  std::vector<double> equal{0.4, 0.4};
  EXPECT_NEAR(nn::binary_margin_loss(equal, 1), std::log(2.0), 1e-15);
  std::vector<double> sure{60.0, 0.0};
  EXPECT_LT(nn::binary_margin_loss(sure, 0), 1e-20);
  std::vector<double> n{0.9, 0.1};
  // log(1 + e^{-0.8}) evaluated in 40-digit arithmetic.
  EXPECT_NEAR(nn::binary_margin_loss(n, 0), 0.3711006659477777260061389, 1e-15);
  std::vector<double> three{0.1, 0.2, 0.3};
  EXPECT_THROW(nn::binary_margin_loss(three, 0), gc::DomainError);
  auto r = nn::grad_check([](std::span<double const> p, std::span<double> g) { return nn::binary_margin_loss(p, 1, g); }, n);
  EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(ReconstructionLoss, Examples) {
  gc::Tensor a({2, 3}, 0.25);
  EXPECT_EQ(nn::reconstruction_loss(a, a), 0.0);
  gc::Tensor b({2, 3}, 1.25);
  EXPECT_DOUBLE_EQ(nn::reconstruction_loss(b, a), 1.0);
  EXPECT_THROW(nn::reconstruction_loss(a, gc::Tensor({3, 2})), gc::ShapeError);
  gc::Rng rng(15);
  auto x = random_tensor({40}, rng), y = random_tensor({40}, rng);
  double want = 0;
  for (std::size_t i = 0; i < 40; ++i) want += (x[i] - y[i]) * (x[i] - y[i]);
  EXPECT_NEAR(nn::reconstruction_loss(x, y), want / 40.0, 1e-15);
}

TEST(TotalLoss, Additivity) {
  EXPECT_EQ(nn::total_loss(0.0, 0.0), 0.0);
  EXPECT_EQ(nn::total_loss(0.81, 0.0, 1.0), 0.81);
  EXPECT_DOUBLE_EQ(nn::total_loss(0.3, 0.2, 0.5), 0.4);
}

TEST(Adam, ZeroGradientLeavesParametersButCountsStep) {
  nn::Parameter p("p", {3});
  p.value = gc::Tensor({3}, {1.0, -2.0, 3.0});
  nn::AdamState st;
  nn::adam_step({&p}, st, {}, 0);
  EXPECT_EQ(p.value, gc::Tensor({3}, {1.0, -2.0, 3.0}));
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  nn::Parameter p("p", {1});
  p.grad[0] = 1.0;
  nn::AdamState st;
  nn::adam_step({&p}, st, {.base_lr = 0.01}, 0);
  EXPECT_NEAR(p.value[0], -0.01, 1e-9);
}

TEST(Adam, TwoStepsOnSquareMatchHandTrace) {
  nn::Parameter p("x", {1});
  p.value[0] = 1.0;
  nn::AdamState st;
  nn::AdamConfig cfg{.base_lr = 0.1};
  double const want[] = {0.9000000004999999975, 0.8004122286917921452};
  for (int t = 0; t < 2; ++t) {
    p.grad[0] = 2.0 * p.value[0];
    nn::adam_step({&p}, st, cfg, 0);
    EXPECT_NEAR(p.value[0], want[t], 1e-15);
  }
}

TEST(Adam, ConvergesOnTwoParameterBowl) {
  nn::Parameter p("ab", {2});
  nn::AdamState st;
  nn::AdamConfig cfg{.base_lr = 0.05};
  double loss = 1.0;
  int steps = 0;
  for (; steps < 2000 && loss >= 1e-6; ++steps) {
    double const a = p.value[0], b = p.value[1];
    loss = (a - 3) * (a - 3) + 10 * (b + 1) * (b + 1);
    p.grad[0] = 2 * (a - 3);
    p.grad[1] = 20 * (b + 1);
    nn::adam_step({&p}, st, cfg, 0);
  }
  EXPECT_LT(loss, 1e-6);
  EXPECT_LE(steps, 2000);
}

TEST(Adam, LearningRateDecayAndFloor) {
  nn::AdamConfig cfg{.base_lr = 0.001, .decay = 0.25};
  EXPECT_DOUBLE_EQ(nn::learning_rate(cfg, 0), 0.001);
  EXPECT_NEAR(nn::learning_rate(cfg, 4), 0.001 * std::exp(-1.0), 1e-18);
  EXPECT_EQ(nn::learning_rate(cfg, 1000), 1e-6);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  nn::Parameter p("decoder1.weight", {2});
  p.grad[1] = std::nan("");
  nn::AdamState st;
  try {
    nn::adam_step({&p}, st, {}, 0);
    FAIL() << "expected TrainingError";
  } catch (gc::TrainingError const& e) {
    EXPECT_NE(std::string(e.what()).find("decoder1.weight"), std::string::npos);
  }
  EXPECT_EQ(st.t, 0u);
}

TEST(GradCheck, LinearMapIsExact) {
  std::vector<double> a{1.5, -2.0, 0.25, 4.0};
  auto r = nn::grad_check(
      [&](std::span<double const> x, std::span<double> g) {
        std::copy(a.begin(), a.end(), g.begin());
        return weighted_sum(x, a);
      },
      std::vector<double>{0.1, 0.2, 0.3, 0.4});
  EXPECT_LT(r.max_relative_error, 1e-9);
  EXPECT_EQ(r.checked, 4u);
  EXPECT_THROW(nn::grad_check([](auto, auto) { return 0.0; }, std::vector<double>{1.0}, 0.0), gc::DomainError);
}

TEST(GradCheck, DetectsWrongGradient) {
  auto r = nn::grad_check(
      [](std::span<double const> x, std::span<double> g) {
        g[0] = 3.0 * x[0];  // true derivative of x^2 is 2x
        return x[0] * x[0];
      },
      std::vector<double>{1.0});
  EXPECT_GT(r.max_relative_error, 0.3);
}

TEST(Checkpoint, RoundTripAndValidation) {
  gc::Rng rng(16);
  nn::Parameter a("conv1.weight", {3, 3, 2, 4}), b("conv1.bias", {4});
  a.value = random_tensor(a.value.shape(), rng);
  b.value = random_tensor(b.value.shape(), rng);
  auto path = std::filesystem::temp_directory_path() / ("graphcaps_ckpt_" + std::to_string(::getpid()) + ".bin");
  nn::save_checkpoint(path, {&a, &b}, "preset=small");
  nn::Parameter a2("conv1.weight", {3, 3, 2, 4}), b2("conv1.bias", {4});
  EXPECT_EQ(nn::load_checkpoint(path, {&a2, &b2}), "preset=small");
  EXPECT_EQ(a2.value, a.value);
  EXPECT_EQ(b2.value, b.value);
  nn::Parameter wrong("conv1.bias", {5});
  EXPECT_THROW(nn::load_checkpoint(path, {&wrong}), gc::ShapeError);
  nn::Parameter missing("decoder.bias", {4});
  EXPECT_THROW(nn::load_checkpoint(path, {&missing}), gc::FormatError);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  EXPECT_THROW(nn::read_checkpoint(path), gc::FormatError);
  std::filesystem::remove(path);
}
