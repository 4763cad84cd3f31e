#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "graphcaps/models/capsnet.hpp"
#include "graphcaps/models/cnn.hpp"
#include "graphcaps/models/train.hpp"
#include "graphcaps/nn/grad_check.hpp"

namespace gc = graphcaps;
namespace gm = graphcaps::models;
namespace nn = graphcaps::nn;

namespace {

/// Batch of random one-hot fibers shaped (batch, w, k, channels).
gc::Tensor one_hot_batch(std::size_t batch, std::size_t w, std::size_t k, std::size_t ch, gc::Rng& rng) {
  gc::Tensor x({batch, w, k, ch});
  for (std::size_t f = 0; f < batch * w * k; ++f) x[f * ch + gc::uniform_below(rng, ch)] = 1.0;
  return x;
}

gm::CapsNetConfig tiny_capsnet(gm::LossMode mode) {
  gm::CapsNetConfig c;
  c.conv_filters = 4;
  c.conv_kernel = 2;
  c.primary_channels = 2;
  c.primary_dim = 4;
  c.primary_kernel = 2;
  c.primary_stride = 1;
  c.class_dim = 4;
  c.decoder_hidden = {8};
  c.loss_mode = mode;
  return c;
}

/// Sample set whose class is visible in a single channel of the first anchor.
gc::TensorSet separable_set(std::size_t n, gc::Rng& rng) {
  gc::TensorSet set;
  set.width = 8;
  set.field_size = 5;
  set.label_alphabet_size = 3;
  set.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    int const y = static_cast<int>(i % 2);
    auto x = one_hot_batch(1, 8, 5, 4, rng);
    for (std::size_t j = 0; j < 5; ++j) {
      for (std::size_t c = 0; c < 4; ++c) x.at(0, 0, j, c) = c == static_cast<std::size_t>(y) ? 1.0 : 0.0;
      for (std::size_t c = 0; c < 4; ++c) x.at(0, 1, j, c) = c == static_cast<std::size_t>(y) ? 1.0 : 0.0;
    }
    set.data.insert(set.data.end(), x.values().begin(), x.values().end());
    set.labels.push_back(y);
  }
  return set;
}

}  // namespace

TEST(CapsNet, BuildsForMutagGeometry) {
  auto net = gm::build_capsnet(18, 10, 8, 2, gm::CapsNetConfig::paper(), 1);
  EXPECT_EQ(net.geometry().n_primary, 672u);
  gc::Rng rng(1);
  auto out = net.forward(one_hot_batch(3, 18, 10, 8, rng));
  EXPECT_EQ(out.norms.shape(), (gc::Shape{3, 2}));
  EXPECT_EQ(out.capsules.shape(), (gc::Shape{3, 2, 16}));
  EXPECT_EQ(out.reconstruction.shape(), (gc::Shape{3, 18, 10, 8}));
}

TEST(CapsNet, ParameterCountMatchesShapeArithmetic) {
  // Totals worked out layer by layer outside the library.
  EXPECT_EQ(nn::parameter_count(gm::CapsNet(18, 10, 8, 2, gm::CapsNetConfig::paper()).parameters()), 2799008u);
  EXPECT_EQ(nn::parameter_count(gm::CapsNet(18, 10, 8, 2, gm::CapsNetConfig::small()).parameters()), 491936u);
  EXPECT_EQ(nn::parameter_count(gm::Cnn(18, 10, 8, 2).parameters()), 12186u);
}

TEST(CapsNet, InconsistentGeometryIsAConfigError) {
  try {
    gm::CapsNet(4, 3, 3, 2, gm::CapsNetConfig::paper());
    FAIL() << "expected ConfigError";
  } catch (gc::ConfigError const& e) {
    EXPECT_NE(std::string(e.what()).find("primary capsule conv"), std::string::npos) << e.what();
  }
  EXPECT_THROW(gm::CapsNet(2, 2, 3, 2, gm::CapsNetConfig::paper()), gc::ConfigError);
  auto ce = gm::CapsNetConfig::small();
  EXPECT_THROW(gm::CapsNet(18, 10, 8, 3, ce), gc::ConfigError);
  ce.loss_mode = gm::LossMode::Margin;
  EXPECT_NO_THROW(gm::CapsNet(18, 10, 8, 3, ce));
}

TEST(CapsNet, ZeroInputGivesFiniteNormsBelowOne) {
  auto net = gm::build_capsnet(18, 10, 8, 2, gm::CapsNetConfig::small(), 3);
  auto out = net.forward(gc::Tensor({2, 18, 10, 8}));
  for (double n : out.norms.values()) {
    EXPECT_TRUE(std::isfinite(n));
    EXPECT_LT(n, 1.0);
  }
}

TEST(CapsNet, NormsBelowOneAndReconstructionBounded) {
  auto net = gm::build_capsnet(18, 10, 8, 2, gm::CapsNetConfig::small(), 4);
  gc::Rng rng(4);
  auto x = one_hot_batch(6, 18, 10, 8, rng);
  std::vector<int> y{0, 1, 0, 1, 1, 0};
  auto out = net.forward(x, y);
  for (double n : out.norms.values()) EXPECT_LT(n, 1.0);
  for (double r : out.reconstruction.values()) {
    EXPECT_GT(r, 0.0);
    EXPECT_LT(r, 1.0);
  }
  auto parts = net.loss(x, y);
  EXPECT_TRUE(std::isfinite(parts.reconstruction));
  EXPECT_LE(parts.reconstruction, 1.0);
  EXPECT_DOUBLE_EQ(parts.total, parts.classification + parts.reconstruction);
}

TEST(CapsNet, BatchOfOneMatchesBatchOfEight) {
  auto net = gm::build_capsnet(18, 10, 8, 2, gm::CapsNetConfig::small(), 5);
  gc::Rng rng(5);
  auto x = one_hot_batch(8, 18, 10, 8, rng);
  auto all = net.forward(x);
  std::size_t const n = 18 * 10 * 8;
  for (std::size_t b : {0u, 5u}) {
    gc::Tensor one({1, 18, 10, 8}, std::vector<double>(x.data() + b * n, x.data() + (b + 1) * n));
    auto single = net.forward(one);
    for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(single.capsules[i], all.capsules[b * 32 + i], 1e-12);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(single.reconstruction[i], all.reconstruction[b * n + i], 1e-12);
  }
}

TEST(CapsNet, IdenticalInputsGiveIdenticalOutputs) {
  auto net = gm::build_capsnet(18, 10, 8, 2, gm::CapsNetConfig::small(), 6);
  gc::Rng rng(6);
  auto x = one_hot_batch(1, 18, 10, 8, rng);
  auto a = net.forward(x);
  auto b = net.forward(x);
  EXPECT_EQ(a.capsules, b.capsules);
  EXPECT_EQ(a.reconstruction, b.reconstruction);
}

TEST(CapsNet, EqualSeedsBuildIdenticalWeights) {
  auto a = gm::build_capsnet(18, 10, 8, 2, gm::CapsNetConfig::small(), 42);
  auto b = gm::build_capsnet(18, 10, 8, 2, gm::CapsNetConfig::small(), 42);
  auto c = gm::build_capsnet(18, 10, 8, 2, gm::CapsNetConfig::small(), 43);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
    differs |= !(pa[i]->value == pc[i]->value);
  }
  EXPECT_TRUE(differs);
}

TEST(CapsNet, PrimaryCapsuleWidth) {
  auto net = gm::build_capsnet(18, 10, 8, 2, gm::CapsNetConfig::small(), 7);
  gc::Rng rng(7);
  auto p = net.primary_capsules(one_hot_batch(3, 18, 10, 8, rng));
  auto const& g = net.geometry();
  EXPECT_EQ(p.shape(), (gc::Shape{3, g.primary_h * g.primary_w * 8 * 8}));
}

class CapsNetGradient : public ::testing::TestWithParam<gm::LossMode> {};

TEST_P(CapsNetGradient, EndToEndMatchesFiniteDifferences) {
  gm::CapsNet net(4, 3, 3, 2, tiny_capsnet(GetParam()));
  net.init(11);
  gc::Rng rng(11);
  auto x = one_hot_batch(4, 4, 3, 3, rng);
  std::vector<int> y{0, 1, 1, 0};
  auto params = net.parameters();
  auto r = nn::grad_check(params, [&] {
    gc::Rng unused(0);
    return net.loss_and_grad(x, y, unused).total;
  });
  EXPECT_LT(r.max_relative_error, 1e-4) << nn::parameter_name_at(params, r.worst_index) << " analytic " << r.analytic
                                        << " numeric " << r.numeric;
  EXPECT_EQ(r.checked, nn::parameter_count(params));
}

INSTANTIATE_TEST_SUITE_P(LossModes, CapsNetGradient,
                         ::testing::Values(gm::LossMode::BinaryCrossEntropy, gm::LossMode::Margin),
                         [](auto const& info) { return std::string(gm::to_string(info.param)); });

TEST(CapsNet, PredictTakesLargestNorm) {
  auto net = gm::build_capsnet(18, 10, 8, 2, gm::CapsNetConfig::small(), 8);
  gc::Rng rng(8);
  auto x = one_hot_batch(5, 18, 10, 8, rng);
  auto out = net.forward(x);
  auto y = net.predict(x);
  for (std::size_t b = 0; b < 5; ++b) EXPECT_EQ(y[b], out.norms[2 * b + 1] > out.norms[2 * b] ? 1 : 0);
}

TEST(Cnn, GradientMatchesFiniteDifferences) {
  gm::CnnConfig cfg;
  cfg.convs = {{3, 1, 0, 1}, {2, 2, 1, 1}};
  cfg.dense = {5};
  gm::Cnn net(4, 3, 3, 3, cfg);
  net.init(12);
  gc::Rng rng(12);
  auto x = one_hot_batch(4, 4, 3, 3, rng);
  std::vector<int> y{0, 2, 1, 2};
  auto params = net.parameters();
  auto r = nn::grad_check(params, [&] {
    gc::Rng masks(99);  // same dropout mask on every evaluation
    return net.loss_and_grad(x, y, masks).total;
  });
  EXPECT_LT(r.max_relative_error, 1e-4) << nn::parameter_name_at(params, r.worst_index);
}

TEST(Cnn, ShapesAndInnerLayer) {
  auto net = gm::build_cnn(18, 10, 8, 2, {}, 1);
  gc::Rng rng(13);
  auto x = one_hot_batch(3, 18, 10, 8, rng);
  EXPECT_EQ(net.forward(x).shape(), (gc::Shape{3, 2}));
  EXPECT_EQ(net.inner_activations(x).shape(), (gc::Shape{3, 128}));
  EXPECT_EQ(net.predict(x).size(), 3u);
  EXPECT_THROW(net.forward(gc::Tensor({1, 18, 9, 8})), gc::ShapeError);
}

TEST(Cnn, ShortGraphsClampTheAnchorKernel) {
  auto net = gm::build_cnn(6, 4, 3, 2, {}, 1);
  gc::Rng rng(14);
  EXPECT_EQ(net.forward(one_hot_batch(2, 6, 4, 3, rng)).shape(), (gc::Shape{2, 2}));
}

TEST(Train, SeparableToyReachesFullTrainingAccuracy) {
  gc::Rng rng(15);
  auto set = separable_set(20, rng);
  std::vector<std::size_t> idx(20);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  gm::CapsNetConfig cfg = gm::CapsNetConfig::small();
  cfg.conv_filters = 16;
  cfg.primary_channels = 4;
  cfg.primary_stride = 1;
  cfg.decoder_hidden = {32};
  gm::CapsNet net(8, 5, 4, 2, cfg);
  gm::TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 10;
  tc.seed = 3;
  auto res = gm::train(net, set, idx, tc);
  EXPECT_EQ(gm::accuracy(net, set, idx), 1.0);
  EXPECT_LT(res.trace.back().loss.total, res.trace.front().loss.total);
}

TEST(Train, SameSeedGivesIdenticalParameters) {
  gc::Rng rng(16);
  auto set = separable_set(12, rng);
  std::vector<std::size_t> idx(12);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  gm::TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 5;
  tc.seed = 9;
  gm::Cnn a(8, 5, 4, 2), b(8, 5, 4, 2);
  auto ra = gm::train(a, set, idx, tc);
  auto rb = gm::train(b, set, idx, tc);
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  for (std::size_t e = 0; e < 3; ++e) EXPECT_EQ(ra.trace[e].loss.total, rb.trace[e].loss.total);
}

TEST(Train, LossTraceCsv) {
  std::vector<gm::EpochRecord> trace{{0, {1.5, 1.0, 0.5}, 0.001, 0.25}};
  std::ostringstream os;
  gm::write_loss_trace(os, trace);
  EXPECT_EQ(os.str(), "epoch,total,margin,mse,seconds\n0,1.5,1,0.5,0.25\n");
}

TEST(Train, RejectsEmptyInputs) {
  gc::Rng rng(17);
  auto set = separable_set(4, rng);
  gm::Cnn net(8, 5, 4, 2);
  std::vector<std::size_t> none;
  EXPECT_THROW(gm::train(net, set, none, {}), gc::DomainError);
  std::vector<std::size_t> idx{0, 1};
  gm::TrainConfig tc;
  tc.epochs = 0;
  EXPECT_THROW(gm::train(net, set, idx, tc), gc::ConfigError);
}
