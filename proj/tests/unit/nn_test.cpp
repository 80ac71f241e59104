#include <gtest/gtest.h>

#include <cmath>

#include "finite_difference.hpp"
#include "midpc/nn/adam.hpp"
#include "midpc/nn/layers.hpp"
#include "midpc/util/errors.hpp"

namespace midpc::nn {
namespace {

struct Fixture {
  ParameterStore store;
  DenseLayer layer;
};

Fixture identity_layer(Activation act, std::vector<double> bias) {
  Fixture f;
  Rng rng(1);
  f.layer = DenseLayer::create(f.store, "l", 2, 2, act, Norm::None, rng, Init::Zero);
  f.store.mutable_value(f.layer.weight) = ad::Tensor::matrix({{1, 0}, {0, 1}});
  f.store.mutable_value(f.layer.bias) = ad::Tensor::vector(std::move(bias));
  return f;
}

TEST(Dense, ZeroWeightsGiveZero) {
  ParameterStore store;
  Rng rng(3);
  const auto layer = DenseLayer::create(store, "z", 3, 4, Activation::Tanh, Norm::None, rng, Init::Zero);
  ad::Tape tape;
  Binding params(tape, store);
  const auto y = dense_forward(tape, params, layer, tape.constant(ad::Tensor::vector({5, -2, 7})));
  EXPECT_EQ(tape.value(y), ad::Tensor::matrix(1, 4));
}

TEST(Dense, IdentityAffine) {
  auto f = identity_layer(Activation::Linear, {1, 1});
  ad::Tape tape;
  Binding params(tape, f.store);
  const auto y = dense_forward(tape, params, f.layer, tape.constant(ad::Tensor::matrix({{1, 2}})));
  EXPECT_DOUBLE_EQ(tape.value(y)[0], 2.0);
  EXPECT_DOUBLE_EQ(tape.value(y)[1], 3.0);
}

TEST(Dense, SeluValues) {
  auto f = identity_layer(Activation::Selu, {0, 0});
  ad::Tape tape;
  Binding params(tape, f.store);
  const auto y = dense_forward(tape, params, f.layer, tape.constant(ad::Tensor::matrix({{-1, 1}})));
  const double lambda = 1.0507009873554805;
  const double alpha = 1.6732632423543772;
  EXPECT_NEAR(tape.value(y)[0], lambda * alpha * (std::exp(-1.0) - 1.0), 1e-15);
  EXPECT_NEAR(tape.value(y)[0], -1.1113, 1e-4);
  EXPECT_NEAR(tape.value(y)[1], 1.0507, 1e-4);
}

TEST(Dense, WidthMismatchThrows) {
  auto f = identity_layer(Activation::Linear, {0, 0});
  ad::Tape tape;
  Binding params(tape, f.store);
  EXPECT_THROW(dense_forward(tape, params, f.layer, tape.constant(ad::Tensor::matrix(1, 3))),
               ShapeError);
}

TEST(Dense, InitializationScales) {
  ParameterStore store;
  Rng rng(11);
  const auto t = DenseLayer::create(store, "t", 200, 100, Activation::Tanh, Norm::None, rng);
  const auto s = DenseLayer::create(store, "s", 400, 100, Activation::Selu, Norm::None, rng);
  const double limit = std::sqrt(6.0 / 300.0);
  double sq = 0.0;
  for (double w : store.value(t.weight).data()) {
    EXPECT_LE(std::abs(w), limit);
    sq += w * w;
  }
  // Uniform(-a, a) has variance a^2 / 3.
  EXPECT_NEAR(sq / 20000.0, limit * limit / 3.0, 0.05 * limit * limit / 3.0);
  sq = 0.0;
  for (double w : store.value(s.weight).data()) sq += w * w;
  EXPECT_NEAR(sq / 40000.0, 1.0 / 400.0, 0.05 / 400.0);
}

TEST(Dense, GradientMatchesFiniteDifference) {
  ParameterStore store;
  Rng rng(5);
  const auto layer = DenseLayer::create(store, "l", 3, 4, Activation::Tanh, Norm::Affine, rng);
  std::vector<ad::Tensor> leaves;
  for (std::size_t i = 0; i < store.size(); ++i) leaves.push_back(store.value(i));
  // Perturb norm parameters away from their identity defaults.
  for (double& v : leaves[2].data()) v += rng.uniform(-0.3, 0.3);
  for (double& v : leaves[3].data()) v += rng.uniform(-0.3, 0.3);
  ad::Tensor x({2, 3});
  for (double& v : x.data()) v = rng.uniform(-1, 1);
  auto build = [&](ad::Tape& tape, const std::vector<ad::Var>& vars) {
    ad::Var z = ad::affine(tape, tape.constant(x), vars[0], vars[1]);
    z = ad::layer_norm(tape, z, vars[2], vars[3]);
    return ad::squared_norm(tape, ad::tanh(tape, z));
  };
  const auto a = testing::analytic_gradient(build, leaves);
  const auto n = testing::numeric_gradient(build, leaves);
  EXPECT_LT(testing::max_relative_error(a, n), 1e-5);

  // dense_forward must compute the same thing.
  for (std::size_t i = 0; i < store.size(); ++i) store.mutable_value(i) = leaves[i];
  ad::Tape tape;
  Binding params(tape, store);
  const auto y = ad::squared_norm(tape, dense_forward(tape, params, layer, tape.constant(x)));
  ad::Tape ref;
  std::vector<ad::Var> vars;
  for (const auto& t : leaves) vars.push_back(ref.parameter(t));
  EXPECT_EQ(tape.value(y).item(), ref.value(build(ref, vars)).item());
}

LayerNormParams unit_norm(ParameterStore& store, std::size_t width) {
  LayerNormParams p;
  p.gain = store.add("g", ad::Tensor::vector(std::vector<double>(width, 1.0)));
  p.offset = store.add("o", ad::Tensor::vector(std::vector<double>(width, 0.0)));
  return p;
}

TEST(LayerNorm, PlainStyleHasNoParameters) {
  ParameterStore store;
  Rng rng(2);
  const auto layer = DenseLayer::create(store, "p", 3, 4, Activation::Linear, Norm::Plain, rng);
  EXPECT_EQ(store.scalar_count(), 16u);
  ad::Tape tape;
  Binding params(tape, store);
  const auto y =
      tape.value(dense_forward(tape, params, layer, tape.constant(ad::Tensor::vector({1, 2, 3}))));
  double mean = 0.0;
  for (double v : y.data()) mean += v / 4.0;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_EQ(parse_norm(to_string(Norm::Plain)), Norm::Plain);
  EXPECT_THROW(parse_norm("batch"), ConfigError);
}

TEST(LayerNorm, ConstantInputGivesZero) {
  ParameterStore store;
  const auto norm = unit_norm(store, 4);
  ad::Tape tape;
  Binding params(tape, store);
  const auto y = layer_norm(tape, params, norm, tape.constant(ad::Tensor::vector({3, 3, 3, 3})));
  for (double v : tape.value(y).data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, CenteredPair) {
  ParameterStore store;
  const auto norm = unit_norm(store, 2);
  ad::Tape tape;
  Binding params(tape, store);
  const auto y = layer_norm(tape, params, norm, tape.constant(ad::Tensor::vector({1, -1})));
  EXPECT_NEAR(tape.value(y)[0], 1.0 / std::sqrt(1.0 + 1e-5), 1e-15);
  EXPECT_NEAR(tape.value(y)[1], -1.0 / std::sqrt(1.0 + 1e-5), 1e-15);
}

TEST(LayerNorm, ZeroGainYieldsOffset) {
  ParameterStore store;
  const auto norm = unit_norm(store, 3);
  store.mutable_value(norm.gain).fill(0.0);
  store.mutable_value(norm.offset) = ad::Tensor::vector({0.5, -2.0, 7.0});
  ad::Tape tape;
  Binding params(tape, store);
  const auto y = layer_norm(tape, params, norm, tape.constant(ad::Tensor::vector({9, -4, 1})));
  EXPECT_EQ(tape.value(y), ad::Tensor::vector({0.5, -2.0, 7.0}));
}

TEST(LayerNorm, UnitVarianceOutput) {
  ParameterStore store;
  const auto norm = unit_norm(store, 64);
  Rng rng(2);
  ad::Tensor x({1, 64});
  for (double& v : x.data()) v = rng.uniform(-10, 30);
  ad::Tape tape;
  Binding params(tape, store);
  const auto y = tape.value(layer_norm(tape, params, norm, tape.constant(x)));
  double mean = 0.0, var = 0.0;
  for (double v : y.data()) mean += v / 64.0;
  for (double v : y.data()) var += (v - mean) * (v - mean) / 64.0;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var, 1.0, 1e-5);
}

TEST(Dropout, ZeroProbabilityIsIdentity) {
  Rng rng(4);
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    ad::Tape tape;
    const auto x = tape.constant(ad::Tensor::vector({1, 2, 3}));
    EXPECT_EQ(tape.value(dropout(tape, x, 0.0, mode, rng)), tape.value(x));
  }
}

TEST(Dropout, EvalModeIsIdentity) {
  Rng rng(4);
  ad::Tape tape;
  const auto x = tape.constant(ad::Tensor::vector({1, 2, 3}));
  EXPECT_EQ(tape.value(dropout(tape, x, 0.1, Mode::Eval, rng)), tape.value(x));
}

TEST(Dropout, SeededMaskIsReproducible) {
  auto run = [] {
    Rng rng(99);
    ad::Tape tape;
    const auto x = tape.constant(ad::Tensor(std::vector<std::size_t>{8, 16}, 1.0));
    return tape.value(dropout(tape, x, 0.5, Mode::Train, rng));
  };
  const auto a = run();
  EXPECT_EQ(a, run());
  for (double v : a.data()) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

TEST(Dropout, PreservesExpectation) {
  Rng rng(123);
  ad::Tape tape(false);
  const auto x = tape.constant(ad::Tensor(std::vector<std::size_t>{100000}, 3.0));
  const auto y = tape.value(dropout(tape, x, 0.1, Mode::Train, rng));
  double mean = 0.0;
  for (double v : y.data()) mean += v / 1e5;
  EXPECT_NEAR(mean, 3.0, 0.03);
}

TEST(Dropout, InvalidProbabilityThrows) {
  Rng rng(1);
  ad::Tape tape;
  const auto x = tape.constant(ad::Tensor::vector({1}));
  EXPECT_THROW(dropout(tape, x, 1.0, Mode::Train, rng), ConfigError);
  EXPECT_THROW(dropout(tape, x, -0.1, Mode::Eval, rng), ConfigError);
}

TEST(Dropout, GradientUsesMask) {
  Rng rng(8);
  ad::Tape tape;
  const auto x = tape.parameter(ad::Tensor(std::vector<std::size_t>{1, 50}, 1.0));
  const auto y = dropout(tape, x, 0.3, Mode::Train, rng);
  const auto g = ad::backward(tape, ad::sum(tape, y))[x];
  EXPECT_EQ(g, tape.value(y));
}

ParameterStore scalar_store(double w) {
  ParameterStore store;
  store.add("w", ad::Tensor::vector({w}));
  return store;
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParameterStore store;
  store.add("a", ad::Tensor::vector({1, -2}));
  store.add("b", ad::Tensor::matrix({{3, 4}, {5, 6}}));
  const auto before = store;
  auto state = AdamState::for_store(store);
  const std::vector<ad::Tensor> grads{ad::Tensor::vector({0, 0}), ad::Tensor::matrix(2, 2)};
  adam_step(store, grads, state, {});
  EXPECT_EQ(store, before);
  EXPECT_EQ(state.t, 1);
  adam_step(store, grads, state, {});
  EXPECT_EQ(state.t, 2);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto store = scalar_store(0.7);
  auto state = AdamState::for_store(store);
  AdamConfig config;
  adam_step(store, std::vector<ad::Tensor>{ad::Tensor::vector({1.0})}, state, config);
  // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
  EXPECT_NEAR(store.value(0)[0] - 0.7, -config.learning_rate, 1e-10);
}

TEST(Adam, SignFlipFlipsFirstUpdate) {
  auto a = scalar_store(0.0);
  auto b = scalar_store(0.0);
  auto sa = AdamState::for_store(a);
  auto sb = AdamState::for_store(b);
  adam_step(a, std::vector<ad::Tensor>{ad::Tensor::vector({0.37})}, sa, {});
  adam_step(b, std::vector<ad::Tensor>{ad::Tensor::vector({-0.37})}, sb, {});
  EXPECT_EQ(a.value(0)[0], -b.value(0)[0]);
  EXPECT_NE(a.value(0)[0], 0.0);
}

TEST(Adam, SecondMomentStaysNonNegative) {
  auto store = scalar_store(1.0);
  auto state = AdamState::for_store(store);
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    adam_step(store, std::vector<ad::Tensor>{ad::Tensor::vector({rng.normal()})}, state, {});
    EXPECT_GE(state.v[0][0], 0.0);
  }
  EXPECT_EQ(state.t, 50);
}

TEST(Adam, IdenticalRunsMatch) {
  auto run = [] {
    ParameterStore store;
    Rng init(42);
    const auto layer = DenseLayer::create(store, "l", 3, 2, Activation::Tanh, Norm::Affine, init);
    auto state = AdamState::for_store(store);
    Rng data(7);
    for (int step = 0; step < 20; ++step) {
      ad::Tensor x({4, 3});
      for (double& v : x.data()) v = data.uniform(-1, 1);
      ad::Tape tape;
      Binding params(tape, store);
      const auto loss = ad::squared_norm(tape, dense_forward(tape, params, layer, tape.constant(x)));
      adam_step(store, params.collect(ad::backward(tape, loss)), state, {});
    }
    return store;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, NonFiniteGradientReportsLocation) {
  ParameterStore store;
  store.add("head.weight", ad::Tensor::vector({1.0, 2.0}));
  const auto before = store;
  auto state = AdamState::for_store(store);
  const std::vector<ad::Tensor> grads{ad::Tensor::vector({0.1, std::nan("")})};
  try {
    adam_step(store, grads, state, {}, {12, 3});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("head.weight"), std::string::npos);
    EXPECT_NE(msg.find("epoch 12"), std::string::npos);
    EXPECT_NE(msg.find("batch 3"), std::string::npos);
  }
  EXPECT_EQ(store, before);
  EXPECT_EQ(state.t, 0);
}

TEST(Parameters, JsonRoundTrip) {
  ParameterStore store;
  Rng rng(10);
  DenseLayer::create(store, "a", 3, 5, Activation::Selu, Norm::Affine, rng);
  const auto j = store.to_json();
  ParameterStore other;
  Rng rng2(77);
  DenseLayer::create(other, "a", 3, 5, Activation::Selu, Norm::Affine, rng2);
  EXPECT_FALSE(other == store);
  other.load_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(other, store);
  EXPECT_EQ(store.scalar_count(), 15u + 5u + 5u + 5u);
}

TEST(Parameters, LoadRejectsMismatch) {
  ParameterStore store;
  Rng rng(10);
  DenseLayer::create(store, "a", 3, 5, Activation::Tanh, Norm::None, rng);
  ParameterStore wider;
  DenseLayer::create(wider, "a", 4, 5, Activation::Tanh, Norm::None, rng);
  EXPECT_THROW(wider.load_json(store.to_json()), ShapeError);
  ParameterStore renamed;
  DenseLayer::create(renamed, "b", 3, 5, Activation::Tanh, Norm::None, rng);
  EXPECT_THROW(renamed.load_json(store.to_json()), ConfigError);
  EXPECT_THROW(store.add("a.weight", ad::Tensor::vector({1})), ConfigError);
}

}  // namespace
}  // namespace midpc::nn
