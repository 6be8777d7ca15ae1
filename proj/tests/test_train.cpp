#include <gtest/gtest.h>

#include <cmath>

#include "hsiseg/train.hpp"
#include "test_util.hpp"

using namespace hsiseg;
using namespace hsiseg::train;
using nn::LayerSpec;
using nn::ModelSpec;

namespace {

// flatten + dense(classes, softmax) on a (n, 1) input.
ModelSpec linear_softmax(std::size_t n, std::size_t classes) {
  ModelSpec s;
  s.name = "linear";
  s.input_channels = n;
  s.classes = classes;
  s.layers = {LayerSpec::flatten(), LayerSpec::dense(classes, nn::Activation::Softmax)};
  nn::validate(s);
  return s;
}

}  // namespace

TEST(Xent, Examples) {
  const std::vector<double> uniform{1.0 / 3, 1.0 / 3, 1.0 / 3};
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(xent_loss<double>(uniform, t), std::log(3.0), 1e-12);
  EXPECT_EQ(xent_loss<double>(std::vector<double>{1, 0, 0}, 0), 0.0);
  EXPECT_NEAR(xent_loss<double>(std::vector<double>{1, 0, 0}, 1), -std::log(1e-12), 1e-9);
  EXPECT_NEAR(xent_loss<double>(std::vector<double>{0.5, 0.25, 0.25}, 1), std::log(4.0), 1e-12);
  EXPECT_THROW(xent_loss<double>(uniform, 3), ArgumentError);
  const std::vector<double> two{0.5, 0.5, 0.25, 0.75};
  const std::vector<std::size_t> targets{0, 1};
  EXPECT_NEAR(xent_loss<double>(two, targets, 2), (std::log(2.0) - std::log(0.75)) / 2, 1e-12);
}

TEST(Adam, FirstStepAndFixedPoint) {
  WeightBundle<double> w{{{"dense_0/kernel", Tensor<double>({1}, {0.0})}}};
  WeightBundle<double> g{{{"dense_0/kernel", Tensor<double>({1}, {1.0})}}};
  TrainConfig cfg;
  auto state = AdamState::zeros_like(w);
  adam_step(w, g, state, cfg);
  EXPECT_NEAR(w.tensors[0].tensor[0], -0.001 / (1 + 1e-7), 1e-15);
  EXPECT_EQ(state.t, 1u);

  const auto before = w;
  g.tensors[0].tensor[0] = 0.0;
  const double m = state.m[0][0];
  // One zero step still moves w through the decaying first moment; a fresh
  // state with g = 0 never moves.
  auto fresh = AdamState::zeros_like(w);
  for (int i = 0; i < 5; ++i) adam_step(w, g, fresh, cfg);
  EXPECT_EQ(w, before);
  adam_step(w, g, state, cfg);
  EXPECT_LT(std::abs(state.m[0][0]), std::abs(m));
}

TEST(Adam, MovingStatisticsAreNotTrained) {
  WeightBundle<float> w{{{"batchnorm_0/moving_mean", Tensor<float>({1}, {0.5f})}}};
  WeightBundle<double> g{{{"batchnorm_0/moving_mean", Tensor<double>({1}, {1.0})}}};
  auto state = AdamState::zeros_like(w);
  adam_step(w, g, state, TrainConfig{});
  EXPECT_EQ(w.tensors[0].tensor[0], 0.5f);
}

TEST(Backward, ZeroWeightDenseLogitGradient) {
  const auto spec = linear_softmax(4, 3);
  auto w = models::init_weights<double>(spec, 0);
  for (auto& t : w.tensors) std::fill(t.tensor.data.begin(), t.tensor.data.end(), 0.0);
  const std::vector<Tensor<double>> xs{Tensor<double>({4, 1}, {1, 2, -1, 0.5})};
  const std::vector<std::vector<std::uint8_t>> ys{{0}};
  const auto r = backward<double>(spec, w, xs, ys);
  const double d[3] = {1.0 / 3 - 1, 1.0 / 3, 1.0 / 3};
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(r.grads.tensors[1].tensor[k], d[k], 1e-12);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(r.grads.tensors[0].tensor[k * 4 + i], d[k] * xs[0][i], 1e-12);
  }
  EXPECT_NEAR(r.loss, std::log(3.0), 1e-12);
}

TEST(Backward, ReluSubgradient) {
  ModelSpec s;
  s.name = "relu";
  s.input_channels = 2;
  s.classes = 3;
  s.layers = {LayerSpec::flatten(), LayerSpec::dense(2, nn::Activation::ReLU), LayerSpec::dense(3, nn::Activation::Softmax)};
  auto w = models::init_weights<double>(s, 1);
  // Unit 0 has pre-activation exactly 0, unit 1 is strictly negative.
  w.tensors[0].tensor.data = {0, 0, -1, -1};
  w.tensors[1].tensor.data = {0, -0.5};
  const std::vector<Tensor<double>> xs{Tensor<double>({2, 1}, {0.3, 0.7})};
  const std::vector<std::vector<std::uint8_t>> ys{{2}};
  const auto r = backward<double>(s, w, xs, ys);
  for (double g : r.grads.tensors[0].tensor.data) EXPECT_EQ(g, 0.0);
  for (double g : r.grads.tensors[1].tensor.data) EXPECT_EQ(g, 0.0);
}

TEST(Backward, ShapeMismatch) {
  const auto spec = linear_softmax(4, 3);
  const auto w = models::init_weights<double>(spec, 0);
  const std::vector<Tensor<double>> xs{Tensor<double>({5, 1})};
  const std::vector<std::vector<std::uint8_t>> ys{{0}};
  EXPECT_THROW(backward<double>(spec, w, xs, ys), ShapeError);
}

TEST(Loss, InvariantUnderLogitShift) {
  const auto spec = linear_softmax(6, 3);
  Rng rng(1);
  auto w = models::init_weights<double>(spec, 3);
  std::vector<Tensor<double>> xs;
  std::vector<std::vector<std::uint8_t>> ys;
  for (int b = 0; b < 4; ++b) {
    Tensor<double> x({6, 1});
    for (auto& v : x.data) v = rng.uniform();
    xs.push_back(x);
    ys.push_back({static_cast<std::uint8_t>(b % 3)});
  }
  const double base = batch_loss<double>(spec, w, xs, ys);
  for (double c : {-7.0, 0.5, 30.0}) {
    auto shifted = w;
    for (auto& v : shifted.tensors[1].tensor.data) v += c;
    EXPECT_NEAR(batch_loss<double>(spec, shifted, xs, ys), base, 1e-12);
  }
}

TEST(GradCheck, LinearNetIsExactToRoundOff) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = grad_check(linear_softmax(5, 3), seed);
    EXPECT_LT(r.max_rel_error, 1e-6) << seed;
    EXPECT_EQ(r.skipped, 0u);
  }
}

TEST(GradCheck, SmallNetsPerLayerKind) {
  for (const auto& spec : testutil::gradient_cases()) {
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
      const auto r = grad_check(spec, seed);
      EXPECT_TRUE(r.passes(1e-3)) << spec.name << " seed " << seed << " err " << r.max_rel_error;
    }
  }
}

TEST(GradCheck, BatchNormInInferenceMode) {
  GradCheckOptions opt;
  opt.mode = BatchNormMode::Inference;
  const auto spec = models::shrink(models::build(models::ArchitectureId::JustoUNetSimple, 2, 3, 4), 2);
  EXPECT_TRUE(grad_check(spec, 4, opt).passes(1e-3));
}

TEST(GradCheck, DetectsCorruptedGradients) {
  GradCheckOptions opt;
  opt.tamper = [](WeightBundle<double>& g) {
    for (auto& t : g.tensors)
      for (auto& v : t.tensor.data) v *= 1.1;
  };
  const auto r = grad_check(linear_softmax(5, 3), 0, opt);
  EXPECT_GT(r.max_rel_error, 1e-3);
  EXPECT_NEAR(r.max_rel_error, 0.1 / 1.1, 1e-6);
}

TEST(Fit, DeterministicAndLearns) {
  Rng rng(7);
  const auto data = testutil::separable_spectra(300, 16, rng);
  const auto spec = models::build(models::ArchitectureId::JustoHuNet, 16, 3);
  TrainConfig cfg;
  cfg.seed = 11;
  cfg.epochs = 1;
  const auto a = fit(spec, data, cfg), b = fit(spec, data, cfg);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.history.loss, b.history.loss);
  const double initial = evaluate(spec, models::init_weights<float>(spec, cfg.seed), data).loss;
  EXPECT_LT(evaluate(spec, a.weights, data).loss, initial);
  ASSERT_EQ(a.history.loss.size(), 1u);
  EXPECT_TRUE(std::isnan(a.history.val_accuracy[0]));

  cfg.epochs = 2;
  const auto c = fit(spec, data, cfg, &data);
  EXPECT_EQ(c.history.loss.size(), 2u);
  EXPECT_EQ(c.history.train_accuracy.size(), 2u);
  EXPECT_EQ(c.history.val_accuracy.size(), 2u);
  EXPECT_FALSE(std::isnan(c.history.val_accuracy[1]));
}

TEST(Fit, PartialBatchAndRejections) {
  Rng rng(8);
  const auto data = testutil::separable_spectra(33, 16, rng);
  const auto spec = models::build(models::ArchitectureId::JustoHuNet, 16, 3);
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_NO_THROW(fit(spec, data, cfg));
  cfg.epochs = 0;
  EXPECT_THROW(fit(spec, data, cfg), ArgumentError);
  cfg.epochs = 1;
  cfg.batch = 0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg.batch = 32;
  cfg.beta1 = 1.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  EXPECT_THROW(fit(spec, Dataset<float>{}, TrainConfig{}), ArgumentError);
}

TEST(Fit, MovingStatisticsFollowBatchStatistics) {
  const auto spec = models::build(models::ArchitectureId::JustoUNetSimple, 2, 3, 4);
  Dataset<float> d;
  Rng rng(9);
  for (int i = 0; i < 4; ++i) {
    Tensor<float> x({4, 4, 2});
    for (auto& v : x.data) v = static_cast<float>(rng.uniform(2, 3));
    d.inputs.push_back(x);
    d.targets.emplace_back(16, static_cast<std::uint8_t>(i % 3));
  }
  TrainConfig cfg = TrainConfig::for_2d();
  const auto r = fit(spec, d, cfg);
  // Inputs sit near 2.5, so the first BN's moving mean drifts away from 0.
  bool moved = false;
  for (const auto& t : r.weights.tensors)
    if (t.name == "batchnorm_1/moving_mean")
      for (float v : t.tensor.data) moved = moved || v != 0.0f;
  EXPECT_TRUE(moved);
}
