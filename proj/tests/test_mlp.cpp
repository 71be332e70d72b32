#include <gtest/gtest.h>

#include <cmath>

#include "restora/gmm.hpp"
#include "restora/mlp.hpp"
#include "test_util.hpp"

using namespace restora;
using restora::testing::TempDir;

namespace {

PriorSampler constant_sampler(std::size_t d, float value) {
  return [d, value](SeededRng&) { return ImageTensor(Shape{1, 1, d}, value); };
}

PriorSampler gmm_sampler(const GmmPrior& p) {
  return [p](SeededRng& rng) { return gmm_sample(p, rng); };
}

// Largest |backprop - central difference| / max(|backprop|, |fd|) over all
// parameters, for a fixed batch.
double max_gradient_rel_error(basic_mlp<double> net, const CfmBatch& batch, double eps) {
  const auto analytic = cfm_loss(net, batch).grad;
  auto params = net.parameters();
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + eps;
    const double up = cfm_loss(net, batch).loss;
    params[i] = keep - eps;
    const double down = cfm_loss(net, batch).loss;
    params[i] = keep;
    const double fd = (up - down) / (2 * eps);
    const double scale = std::max(std::abs(fd), std::abs(analytic[i]));
    if (scale > 0) worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST(Mlp, ZeroParametersGiveZeroVelocity) {
  const MlpVelocityNet net({3, 8, 2});
  const std::vector<double> x{0.3, -1.2};
  for (double v : net.forward(std::span<const double>(x), 0.7)) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, SingleLinearLayerIsAffineMap) {
  basic_mlp<double> net({3, 2});
  const double w[] = {1, 2, 3, 4, 5, 6};
  std::copy(std::begin(w), std::end(w), net.weights(0).begin());
  net.bias(0)[0] = 0.5;
  net.bias(0)[1] = -1.0;
  const std::vector<double> x{1.0, -1.0};
  const auto y = net.forward(std::span<const double>(x), 0.5);
  EXPECT_DOUBLE_EQ(y[0], 1 * 1.0 + 2 * -1.0 + 3 * 0.5 + 0.5);
  EXPECT_DOUBLE_EQ(y[1], 4 * 1.0 + 5 * -1.0 + 6 * 0.5 - 1.0);
}

TEST(Mlp, SeededInitIsDeterministic) {
  SeededRng a(42), b(42);
  const auto na = MlpVelocityNet::xavier({3, 16, 16, 2}, a);
  const auto nb = MlpVelocityNet::xavier({3, 16, 16, 2}, b);
  EXPECT_EQ(na, nb);
  const std::vector<float> x{0.1f, 0.2f};
  EXPECT_EQ(na.forward(std::span<const float>(x), 0.3), nb.forward(std::span<const float>(x), 0.3));
}

TEST(Mlp, XavierBoundsRespected) {
  SeededRng rng(1);
  const auto net = MlpVelocityNet::xavier({5, 32, 4}, rng);
  const double a0 = std::sqrt(6.0 / (5 + 32));
  for (float v : net.weights(0)) EXPECT_LE(std::abs(v), a0);
  for (float v : net.bias(0)) EXPECT_EQ(v, 0.0f);
}

TEST(Mlp, RejectsBadArchitecturesAndInputs) {
  EXPECT_THROW(MlpVelocityNet({2}), ConfigError);
  EXPECT_THROW(MlpVelocityNet({3, 4, 3}), ConfigError);
  EXPECT_THROW(MlpVelocityNet({3, 0, 2}), ConfigError);
  const MlpVelocityNet net({3, 4, 2});
  const std::vector<double> x{1.0, 2.0, 3.0};
  EXPECT_THROW(net.forward(std::span<const double>(x), 0.1), ShapeError);
}

TEST(CfmLoss, ZeroNetPointMassAtOrigin) {
  // E[0.5 (0 - x0)^2] = 0.5; sd of 0.5 x0^2 is sqrt(0.5).
  const MlpVelocityNet net({2, 4, 1});
  SeededRng rng(3);
  const auto lg = cfm_loss_batch(net, constant_sampler(1, 0.0f), 100000, rng);
  EXPECT_NEAR(lg.loss, 0.5, 3 * std::sqrt(0.5) / std::sqrt(1e5));
  for (double g : lg.grad) EXPECT_TRUE(std::isfinite(g));
}

TEST(CfmLoss, ZeroNetStandardNormalTarget) {
  // 0.5 (x1 - x0)^2 with x1 - x0 ~ N(0, 2): mean 1, variance 2.
  const MlpVelocityNet net({2, 4, 1});
  SeededRng rng(4);
  const auto lg = cfm_loss_batch(net, gmm_sampler(GmmPrior({1.0}, {{0.0}}, {1.0})), 100000, rng);
  EXPECT_NEAR(lg.loss, 1.0, 3 * std::sqrt(2.0) / std::sqrt(1e5));
}

TEST(CfmLoss, BatchMustBePositive) {
  const MlpVelocityNet net({2, 4, 1});
  SeededRng rng(1);
  EXPECT_THROW(cfm_loss_batch(net, constant_sampler(1, 0.0f), 0, rng), ConfigError);
}

TEST(CfmGradient, MatchesCentralDifferencesOnSmallNet) {
  SeededRng rng(5);
  const auto net = basic_mlp<double>::xavier({3, 16, 2}, rng);
  const auto batch = draw_cfm_batch(8, gmm_sampler(GmmPrior({0.5, 0.5}, {{1.0, 1.0}, {-1.0, 0.0}}, {0.2, 0.3})), rng);
  EXPECT_LT(max_gradient_rel_error(net, batch, 1e-4), 1e-4);
}

TEST(CfmGradient, MatchesCentralDifferencesOnRandomDeepNets) {
  SeededRng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 1 + static_cast<std::size_t>(rng.uniform() * 3);
    const std::size_t h1 = 2 + static_cast<std::size_t>(rng.uniform() * 6);
    const std::size_t h2 = 2 + static_cast<std::size_t>(rng.uniform() * 6);
    auto net = basic_mlp<double>::xavier({d + 1, h1, h2, d}, rng);
    for (auto& b : net.parameters()) b += 0.1 * rng.normal();
    const auto batch = draw_cfm_batch(4, [d](SeededRng& r) { return randn(r, Shape{1, 1, d}); }, rng);
    EXPECT_LT(max_gradient_rel_error(net, batch, 1e-4), 1e-4) << "trial " << trial;
  }
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  SeededRng rng(7);
  auto net = MlpVelocityNet::xavier({2, 8, 1}, rng);
  const auto before = net;
  const auto res = train(net, constant_sampler(1, 0.5f), TrainConfig{32, 50, 0.0, 0.9, 1});
  EXPECT_EQ(net, before);
  EXPECT_EQ(res.loss_trace.size(), 50u);
}

TEST(Train, BitwiseReproducibleForFixedSeed) {
  SeededRng ra(8), rb(8);
  auto a = MlpVelocityNet::xavier({2, 8, 8, 1}, ra);
  auto b = MlpVelocityNet::xavier({2, 8, 8, 1}, rb);
  const TrainConfig cfg{16, 100, 0.01, 0.9, 99};
  const auto la = train(a, constant_sampler(1, 0.5f), cfg);
  const auto lb = train(b, constant_sampler(1, 0.5f), cfg);
  EXPECT_EQ(a, b);
  EXPECT_EQ(la.loss_trace, lb.loss_trace);
}

TEST(Train, DivergenceAborts) {
  SeededRng rng(9);
  auto net = MlpVelocityNet::xavier({2, 8, 1}, rng);
  EXPECT_THROW(train(net, constant_sampler(1, 50.0f), TrainConfig{16, 200, 10.0, 0.9, 1}), NumericalError);
}

TEST(Train, RejectsInvalidConfig) {
  MlpVelocityNet net({2, 4, 1});
  EXPECT_THROW(train(net, constant_sampler(1, 0.0f), TrainConfig{0, 10, 0.01, 0.9, 1}), ConfigError);
  EXPECT_THROW(train(net, constant_sampler(1, 0.0f), TrainConfig{8, 10, -1.0, 0.9, 1}), ConfigError);
}

TEST(Train, PointMassTargetIsLearned) {
  SeededRng rng(10);
  auto net = MlpVelocityNet::xavier({2, 32, 32, 1}, rng);
  const auto res = train(net, constant_sampler(1, 0.5f), TrainConfig{256, 5000, 0.01, 0.9, 3, true});
  EXPECT_LT(res.smoothed_final(), 0.05);
}

TEST(Train, BimodalFieldMatchesAnalyticVelocity) {
  const GmmPrior target({0.5, 0.5}, {{-2.0}, {2.0}}, {0.25, 0.25});
  SeededRng rng(1);
  auto net = MlpVelocityNet::xavier({2, 64, 64, 1}, rng);
  train(net, gmm_sampler(target), TrainConfig{512, 8000, 0.02, 0.9, 3, true});
  double num = 0.0, den = 0.0;
  for (int a = 0; a <= 60; ++a) {
    for (int k = 0; k < 10; ++k) {
      const double x = -3.0 + 0.1 * a, t = 0.05 + 0.1 * k;
      const double v = gmm_velocity(target, ImageTensor(Shape{1, 1, 1}, static_cast<float>(x)), t)[0];
      const double o = net.forward(std::span<const double>(&x, 1), t)[0];
      num += (o - v) * (o - v);
      den += v * v;
    }
  }
  EXPECT_LT(num / den, 0.05);
}

TEST(Checkpoint, RoundTripPreservesForwardBitwise) {
  TempDir dir;
  SeededRng rng(11);
  const auto net = MlpVelocityNet::xavier({4, 16, 16, 3}, rng);
  checkpoint_save(net, dir / "m.rfnn");
  const auto back = checkpoint_load(dir / "m.rfnn");
  EXPECT_EQ(back, net);
  const std::vector<float> x{0.5f, -0.25f, 2.0f};
  EXPECT_EQ(back.forward(std::span<const float>(x), 0.4), net.forward(std::span<const float>(x), 0.4));
}

TEST(Checkpoint, RejectsCorruptionAndMismatch) {
  TempDir dir;
  SeededRng rng(12);
  const auto net = MlpVelocityNet::xavier({3, 5, 2}, rng);
  checkpoint_save(net, dir / "m.rfnn");
  auto bytes = restora::testing::read_bytes(dir / "m.rfnn");

  auto truncated = bytes;
  truncated.pop_back();
  restora::testing::write_bytes(dir / "short.rfnn", truncated);
  EXPECT_THROW(checkpoint_load(dir / "short.rfnn"), FormatError);

  auto magic = bytes;
  magic[3] = 'X';
  restora::testing::write_bytes(dir / "magic.rfnn", magic);
  EXPECT_THROW(checkpoint_load(dir / "magic.rfnn"), FormatError);

  EXPECT_THROW(checkpoint_load(dir / "m.rfnn", {3, 6, 2}), FormatError);
  EXPECT_NO_THROW(checkpoint_load(dir / "m.rfnn", {3, 5, 2}));
}

TEST(MlpVelocityField, WrapsNetWithShape) {
  SeededRng rng(13);
  const auto net = MlpVelocityNet::xavier({5, 8, 4}, rng);
  const MlpVelocityField f(net, Shape{1, 2, 2});
  const auto x = randn(rng, {1, 2, 2});
  const auto v = f.evaluate(x, 0.2);
  const auto ref = net.forward(x.data(), 0.2);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(v[i], static_cast<float>(ref[i]));
  EXPECT_THROW(MlpVelocityField(net, Shape{1, 1, 3}), ShapeError);
}
