#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support/gradcheck.hpp"
#include "taper/numerics/checkpoint.hpp"
#include "taper/numerics/graph.hpp"
#include "taper/numerics/optim.hpp"

using namespace taper;
using taper::testing::check_gradients;
using taper::testing::random_param;

namespace {

constexpr double kGradTol = 1e-4;

}  // namespace

TEST(Kernels, SoftmaxOfEqualLogitsIsUniform) {
  Graph g;
  const Var y = softmax_rows(g.constant(Tensor::matrix(1, 2, {0.0, 0.0})));
  EXPECT_DOUBLE_EQ(y.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(y.value()[1], 0.5);
}

TEST(Kernels, FullyMaskedRowIsRejected) {
  Graph g;
  const Var x = g.constant(Tensor::matrix(2, 2, {1.0, 2.0, 3.0, 4.0}));
  Mask m{{2, 2}, {0, 1, 1, 1}};
  EXPECT_THROW(softmax_rows(masked_fill(x, m)), std::invalid_argument);
}

TEST(Kernels, MaskedEntriesGetZeroProbability) {
  Graph g;
  Rng rng(3);
  Tensor logits({5, 5});
  for (double& v : logits.data()) v = rng.uniform(-3, 3);
  const Var p = softmax_rows(masked_fill(g.constant(logits), Mask::causal(5)));
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      if (c > r) EXPECT_EQ(p.value()(r, c), 0.0);
      total += p.value()(r, c);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Kernels, IdentityMatmulReturnsOperand) {
  Graph g;
  const Var eye = g.constant(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  const Tensor x = Tensor::matrix(3, 4, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  EXPECT_EQ(matmul(eye, g.constant(x)).value(), x);
}

TEST(Kernels, ShapeMismatchNamesBothShapes) {
  Graph g;
  const Var a = g.constant(Tensor({2, 3}));
  const Var b = g.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected a shape error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] vs [2x3]"), std::string::npos) << msg;
  }
}

TEST(Kernels, NanInputIsRejected) {
  Graph g;
  const Var a = g.constant(Tensor::matrix(1, 2, {1.0, std::nan("")}));
  EXPECT_THROW(tanh(a), std::invalid_argument);
  EXPECT_THROW(add(a, a), std::invalid_argument);
}

TEST(Kernels, LayerNormRowsHaveZeroMeanUnitVariance) {
  Graph g;
  Rng rng(11);
  Tensor x({3, 6});
  for (double& v : x.data()) v = rng.uniform(-2, 2);
  const Var y = layer_norm(g.constant(x), g.constant(Tensor({1, 6}, 1.0)), g.constant(Tensor({1, 6})), 0.0);
  for (std::size_t r = 0; r < 3; ++r) {
    double mu = 0.0, var = 0.0;
    for (double v : y.value().row(r)) mu += v / 6;
    for (double v : y.value().row(r)) var += (v - mu) * (v - mu) / 6;
    EXPECT_NEAR(mu, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-12);
  }
}

TEST(Backward, LinearMapGradientIsBroadcastInput) {
  Parameter w("w", Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  const Tensor x = Tensor::matrix(3, 1, {0.5, -1.0, 2.0});
  Graph g;
  g.backward(sum(matmul(g.parameter(w), g.constant(x))));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(w.grad(r, c), x[c]);
}

TEST(Backward, ConstantLossGivesExactlyZeroGradient) {
  Parameter w("w", Tensor::matrix(1, 2, {0.3, -0.7}));
  Parameter u("u", Tensor::matrix(1, 2, {1.0, 2.0}));
  Graph g;
  const Var wv = g.parameter(w);
  const Var loss = add(sum(g.parameter(u)), scale(sum(wv), 0.0));
  g.backward(loss);
  EXPECT_EQ(w.grad, Tensor({1, 2}));
  EXPECT_DOUBLE_EQ(u.grad[0], 1.0);
}

TEST(Backward, UnreachedParameterGetsZeroGradient) {
  Parameter w("w", Tensor::matrix(1, 2, {0.3, -0.7}));
  Parameter u("u", Tensor::matrix(1, 2, {1.0, 2.0}));
  w.grad.fill(42.0);
  Graph g;
  g.parameter(w);
  g.backward(sum(g.parameter(u)));
  EXPECT_EQ(w.grad, Tensor({1, 2}));
}

TEST(Backward, BeforeForwardIsAnError) {
  Graph g;
  EXPECT_THROW(g.backward(Var{}), std::logic_error);
}

TEST(Backward, NonScalarLossIsAnError) {
  Graph g;
  const Var x = g.constant(Tensor({2, 2}));
  EXPECT_THROW(g.backward(x), std::invalid_argument);
}

// Composite graphs exercising every kernel, checked against central
// differences with h = 1e-5.
class GradientCheck : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GradientCheck, AttentionStyleComposite) {
  Rng rng(GetParam());
  const std::size_t t = 2 + rng.index(4), d = 2 + rng.index(5);
  Parameter x = random_param("x", t, d, rng);
  Parameter wq = random_param("wq", d, d, rng);
  Parameter wk = random_param("wk", d, d, rng);
  Parameter gain = random_param("gain", 1, d, rng);
  Parameter bias = random_param("bias", 1, d, rng);
  const Tensor target = [&] {
    Tensor tt({t, d});
    for (double& v : tt.data()) v = rng.uniform(-1, 1);
    return tt;
  }();
  const auto build = [&](Graph& g) {
    const Var xv = g.parameter(x);
    const Var q = matmul(xv, g.parameter(wq));
    const Var k = matmul(xv, g.parameter(wk));
    const Var att = softmax_rows(masked_fill(scale(matmul(q, transpose(k)), 0.7), Mask::causal(t)));
    const Var h = layer_norm(add(xv, matmul(att, xv)), g.parameter(gain), g.parameter(bias));
    const Var diff = sub(h, g.constant(target));
    return sum(mul(diff, diff));
  };
  const auto r = check_gradients({&x, &wq, &wk, &gain, &bias}, build);
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST_P(GradientCheck, GatingComposite) {
  Rng rng(GetParam() + 100);
  const std::size_t n = 1 + rng.index(4), d = 2 + rng.index(4);
  Parameter a = random_param("a", n, d, rng);
  Parameter b = random_param("b", n, d, rng);
  Parameter w = random_param("w", 2 * d, d, rng);
  Parameter bias = random_param("bias", 1, d, rng);
  const auto build = [&](Graph& g) {
    const Var av = g.parameter(a), bv = g.parameter(b);
    const std::vector<Var> parts{av, bv};
    const Var z = sigmoid(add(matmul(concat(parts, 1), g.parameter(w)), g.parameter(bias)));
    const Var cand = tanh(av);
    const Var h = add(cand, mul(z, sub(bv, cand)));
    const Var stacked = concat(std::vector<Var>{h, relu(av)}, 0);
    const Var part = slice(stacked, 0, stacked.rows(), 1, d);
    return add(sum(mean(part, 0)), sum(mean(stacked, 1)));
  };
  const auto r = check_gradients({&a, &b, &w, &bias}, build);
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST_P(GradientCheck, LossKernels) {
  Rng rng(GetParam() + 200);
  const std::size_t n = 1 + rng.index(5), c = 2 + rng.index(6);
  Parameter logits = random_param("logits", n, c, rng);
  Tensor targets({n, c});
  for (double& v : targets.data()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
  std::vector<std::size_t> labels(n);
  for (auto& l : labels) l = rng.index(c);
  const auto build = [&](Graph& g) {
    const Var lv = g.parameter(logits);
    return add(binary_cross_entropy(sigmoid(lv), targets), softmax_cross_entropy(lv, labels));
  };
  const auto r = check_gradients({&logits}, build);
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST_P(GradientCheck, WeightedFractionalBceAndRowSelect) {
  Rng rng(GetParam() + 300);
  const std::size_t n = 2 + rng.index(4), c = 2 + rng.index(4);
  Parameter a = random_param("a", n, c, rng);
  Parameter b = random_param("b", n, c, rng);
  Tensor targets({n, c});
  for (double& v : targets.data()) v = static_cast<double>(rng.index(5)) / 4.0;
  std::vector<double> weights(n);
  for (double& w : weights) w = rng.bernoulli(0.2) ? 0.0 : rng.uniform(0.1, 2.0);
  std::vector<std::uint8_t> take(n);
  for (auto& t : take) t = rng.bernoulli(0.5);
  const auto build = [&](Graph& g) {
    const Var picked = where_rows(take, g.parameter(a), tanh(g.parameter(b)));
    return binary_cross_entropy(sigmoid(picked), targets, 1e-7, weights);
  };
  const auto r = check_gradients({&a, &b}, build);
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

INSTANTIATE_TEST_SUITE_P(RandomInstances, GradientCheck, ::testing::Range<std::uint64_t>(1, 11));

TEST(Determinism, SameInputsGiveBitwiseIdenticalGradients) {
  const auto run = [] {
    Rng rng(9);
    Parameter w = random_param("w", 4, 4, rng);
    Graph g;
    const Var wv = g.parameter(w);
    g.backward(sum(softmax_rows(matmul(wv, transpose(wv)))));
    return std::make_pair(w.grad, w.value);
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter p("p", Tensor::matrix(1, 3, {1, -2, 3}));
  const Tensor before = p.value;
  AdamState s = AdamState::for_params({&p});
  adam_step({&p}, s, 1e-2);
  EXPECT_EQ(p.value, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m = 0.1, v = 0.001 -> bias-corrected m_hat = v_hat = 1.
  Parameter p("p", Tensor::scalar(0.0));
  p.grad[0] = 1.0;
  AdamState s = AdamState::for_params({&p});
  adam_step({&p}, s, 0.01);
  EXPECT_DOUBLE_EQ(p.value[0], -0.01 / (1.0 + 1e-8));
}

TEST(Adam, MomentsFollowClosedFormEma) {
  Parameter p("p", Tensor::scalar(0.0));
  AdamState s = AdamState::for_params({&p});
  const double g = 0.5;
  for (int i = 0; i < 2; ++i) {
    p.grad[0] = g;
    adam_step({&p}, s, 1e-3);
  }
  EXPECT_EQ(s.step, 2u);
  EXPECT_NEAR(s.first_moment[0][0], (1 - 0.9) * g * (1 + 0.9), 1e-15);
  EXPECT_NEAR(s.second_moment[0][0], (1 - 0.999) * g * g * (1 + 0.999), 1e-15);
}

TEST(Adam, NonPositiveLearningRateIsAnError) {
  Parameter p("p", Tensor::scalar(0.0));
  AdamState s = AdamState::for_params({&p});
  EXPECT_THROW(adam_step({&p}, s, 0.0), std::invalid_argument);
}

TEST(Schedule, CosineStartsAtInitialRate) {
  EXPECT_DOUBLE_EQ(lr_at(CosineAnnealing{50, 0.00025, 0.0}, 0), 0.00025);
}

TEST(Schedule, CosineHalfPeriodIsHalfRate) {
  EXPECT_NEAR(lr_at(CosineAnnealing{50, 0.00025, 0.0}, 25), 0.000125, 1e-18);
}

TEST(Schedule, CosineStaysPositive) {
  const LrSchedule s = CosineAnnealing{50, 0.00025, 0.0};
  for (int e = 0; e < 200; ++e) EXPECT_GT(lr_at(s, e), 0.0);
}

TEST(Schedule, StepDecayDropsByFactor) {
  const LrSchedule s = StepDecay{1e-3, 0.1, 50};
  EXPECT_DOUBLE_EQ(lr_at(s, 49), 1e-3);
  EXPECT_NEAR(lr_at(s, 50), 1e-4, 1e-18);
}

TEST(Checkpoint, RoundTripsFloatPrecisionValues) {
  Rng rng(5);
  Parameter a = random_param("a", 3, 4, rng);
  Parameter b = random_param("b", 1, 2, rng);
  round_to_float({&a, &b});
  const std::string bytes = encode_checkpoint("code", "abc", {{"d", 4}}, {&a, &b});
  EXPECT_EQ(bytes.substr(0, 8), "TAPERCKP");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[9], 0);

  Parameter a2("a", Tensor({3, 4})), b2("b", Tensor({1, 2}));
  const Checkpoint ck = decode_checkpoint(bytes);
  ck.load_into({&a2, &b2});
  EXPECT_EQ(a2.value, a.value);
  EXPECT_EQ(b2.value, b.value);
  EXPECT_EQ(ck.config.at("d"), 4);
  EXPECT_EQ(ck.vocab_hash, "abc");
}

TEST(Checkpoint, ShapeMismatchOnLoadIsAnError) {
  Parameter a("a", Tensor({2, 2}));
  const Checkpoint ck = decode_checkpoint(encode_checkpoint("code", "", {}, {&a}));
  Parameter wrong("a", Tensor({2, 3}));
  EXPECT_THROW(ck.load_into({&wrong}), std::invalid_argument);
}

TEST(Kernels, WhereRowsSelectsExactlyAndRoutesGradient) {
  Parameter a("a", Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  Parameter b("b", Tensor::matrix(3, 2, {-1, -2, -3, -4, -5, -6}));
  const std::vector<std::uint8_t> take{1, 0, 1};
  Graph g;
  const Var out = where_rows(take, g.parameter(a), g.parameter(b));
  EXPECT_EQ(out.value(), Tensor::matrix(3, 2, {1, 2, -3, -4, 5, 6}));
  zero_grads({&a, &b});
  g.backward(sum(out));
  EXPECT_EQ(a.grad, Tensor::matrix(3, 2, {1, 1, 0, 0, 1, 1}));
  EXPECT_EQ(b.grad, Tensor::matrix(3, 2, {0, 0, 1, 1, 0, 0}));
  Graph g2;
  EXPECT_THROW(where_rows(std::vector<std::uint8_t>{1}, g2.parameter(a), g2.parameter(b)), std::invalid_argument);
}

TEST(Kernels, WeightedBceMatchesDirectSum) {
  const Tensor p = Tensor::matrix(2, 2, {0.2, 0.7, 0.9, 0.4});
  const Tensor y = Tensor::matrix(2, 2, {0.5, 1.0, 0.0, 0.25});
  const std::vector<double> w{2.0, 0.5};
  Graph g;
  const double got = binary_cross_entropy(g.constant(p), y, 1e-7, w).value()[0];
  double expect = 0.0;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c)
      expect -= w[r] * (y(r, c) * std::log(p(r, c)) + (1 - y(r, c)) * std::log(1 - p(r, c)));
  EXPECT_NEAR(got, expect, 1e-12);
}
