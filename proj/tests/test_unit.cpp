#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "hica/unit.hpp"
#include "support/oracles.hpp"

using namespace hica;

namespace {

SignalVector one_hot(std::size_t dim, std::size_t i) {
  SignalVector v(dim);
  v[i] = 1.0;
  return v;
}

SignalVector gaussian(std::size_t dim, SeededRng& rng) {
  SignalVector v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

bool bit_identical(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Pooler, EncodesK4OneHotWindowToFiniteSummary) {
  SeededRng rng(1);
  Pooler p(PoolerShape::standard(6, 4, 5), rng);
  std::vector<SignalVector> window{one_hot(6, 0), one_hot(6, 3), one_hot(6, 5), one_hot(6, 1)};
  const SignalVector s = p.encode(window);
  ASSERT_EQ(s.dim(), 5u);
  for (double x : s) EXPECT_TRUE(std::isfinite(x));
  EXPECT_EQ(p.encode(window), s);
  EXPECT_EQ(p.decode(s).size(), 4u);
}

// Input 3 (d_in 1, k 3), hidden 2, summary 2; weights set by hand.
TEST(Pooler, ForwardMatchesHandComputation) {
  SeededRng rng(2);
  Pooler p(PoolerShape{1, 3, 2, 2}, rng);
  std::vector<double> params(p.parameter_count(), 0.0);
  // Encoder: W1[2][3], b1[2], W2[2][2], b2[2].
  const double w1[6] = {0.5, -0.25, 0.1, 0.3, 0.2, -0.4};
  const double b1[2] = {0.05, -0.15};
  const double w2[4] = {0.7, -0.6, 0.2, 0.9};
  const double b2[2] = {-0.1, 0.3};
  std::copy(w1, w1 + 6, params.begin());
  std::copy(b1, b1 + 2, params.begin() + 6);
  std::copy(w2, w2 + 4, params.begin() + 8);
  std::copy(b2, b2 + 2, params.begin() + 12);
  p.set_parameters(params);

  // Zero window: summary is the image of the encoder biases.
  const std::vector<SignalVector> zero(3, SignalVector(1));
  const double h0 = std::tanh(0.05), h1 = std::tanh(-0.15);
  const SignalVector s0 = p.encode(zero);
  EXPECT_NEAR(s0[0], std::tanh(0.7 * h0 - 0.6 * h1 - 0.1), 1e-15);
  EXPECT_NEAR(s0[1], std::tanh(0.2 * h0 + 0.9 * h1 + 0.3), 1e-15);

  const std::vector<SignalVector> win{SignalVector{1.0}, SignalVector{-2.0}, SignalVector{0.5}};
  const double a0 = std::tanh(0.5 * 1 - 0.25 * -2 + 0.1 * 0.5 + 0.05);
  const double a1 = std::tanh(0.3 * 1 + 0.2 * -2 - 0.4 * 0.5 - 0.15);
  const SignalVector s = p.encode(win);
  EXPECT_NEAR(s[0], std::tanh(0.7 * a0 - 0.6 * a1 - 0.1), 1e-15);
  EXPECT_NEAR(s[1], std::tanh(0.2 * a0 + 0.9 * a1 + 0.3), 1e-15);
}

TEST(Pooler, ZeroLearningRateLeavesParametersBitIdentical) {
  SeededRng rng(3);
  Pooler p(PoolerShape::standard(4, 4, 3), rng);
  std::vector<SignalVector> window;
  for (int i = 0; i < 4; ++i) window.push_back(gaussian(4, rng));
  const std::vector<double> before(p.parameters().begin(), p.parameters().end());
  const PoolStep step = p.train(window, 0.0);
  EXPECT_TRUE(bit_identical(before, p.parameters()));
  EXPECT_DOUBLE_EQ(step.loss, p.loss(window));
}

TEST(Pooler, OverfitsOneWindowWithSteadyDecrease) {
  SeededRng rng(4);
  Pooler p(PoolerShape::standard(8, 4, 6), rng);
  std::vector<SignalVector> window{one_hot(8, 1), one_hot(8, 6), one_hot(8, 2), one_hot(8, 1)};
  std::vector<double> loss;
  for (int i = 0; i < 500; ++i) loss.push_back(p.train(window, 0.05).loss);
  for (std::size_t i = 0; i + 100 < loss.size(); ++i) ASSERT_LT(loss[i + 100], loss[i]) << "span at " << i;
  EXPECT_LT(p.loss(window), loss.front());
}

TEST(Pooler, ReturnsPreStepLoss) {
  SeededRng rng(5);
  Pooler p(PoolerShape::standard(3, 2, 2), rng);
  std::vector<SignalVector> window{gaussian(3, rng), gaussian(3, rng)};
  const double expected = p.loss(window);
  EXPECT_DOUBLE_EQ(p.train(window, 0.1).loss, expected);
}

TEST(Pooler, RejectsBadShapesAndDims) {
  SeededRng rng(6);
  EXPECT_THROW(Pooler(PoolerShape{4, 1, 4, 8}, rng), Error);
  EXPECT_THROW(Pooler(PoolerShape{0, 4, 2, 4}, rng), Error);
  Pooler p(PoolerShape::standard(3, 2, 2), rng);
  std::vector<SignalVector> bad{SignalVector(3)};
  EXPECT_THROW(p.encode(bad), DimensionError);
  std::vector<SignalVector> wrong{SignalVector(3), SignalVector(4)};
  EXPECT_THROW(p.encode(wrong), DimensionError);
  EXPECT_THROW(p.train(std::vector<SignalVector>{SignalVector(3), SignalVector(3)}, -0.1), Error);
}

TEST(Autoregressor, FreshUnitIsFiniteAndDeterministic) {
  SeededRng rng(7);
  Autoregressor ar(ArShape::standard(5, 3, 4), OutputKind::token, rng);
  const std::vector<SignalVector> hist(4, SignalVector(5));
  const SignalVector ctx(3);
  const SignalVector y = ar.predict(hist, ctx);
  ASSERT_EQ(y.dim(), 5u);
  for (double x : y) EXPECT_TRUE(std::isfinite(x));
  EXPECT_EQ(ar.predict(hist, ctx), y);
}

TEST(Autoregressor, ZeroLearningRateLeavesParametersUnchanged) {
  SeededRng rng(8);
  Autoregressor ar(ArShape::standard(4, 2, 3), OutputKind::continuous, rng);
  std::vector<SignalVector> hist{gaussian(4, rng), gaussian(4, rng), gaussian(4, rng)};
  const std::vector<double> before(ar.parameters().begin(), ar.parameters().end());
  ar.train(hist, gaussian(2, rng), gaussian(4, rng), 0.0);
  EXPECT_TRUE(bit_identical(before, ar.parameters()));
}

TEST(Autoregressor, OverfitsOneSampleWithin300Steps) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SeededRng rng(derive_seed(seed, 9));
    Autoregressor ar(ArShape::standard(6, 4, 4), OutputKind::token, rng);
    std::vector<SignalVector> hist;
    for (int i = 0; i < 4; ++i) hist.push_back(one_hot(6, rng.below(6)));
    const SignalVector ctx = gaussian(4, rng);
    const std::size_t t = rng.below(6);
    for (int i = 0; i < 300; ++i) ar.train(hist, ctx, one_hot(6, t), 0.05);
    EXPECT_EQ(argmax(ar.predict(hist, ctx).values()), t) << "seed " << seed;
  }
}

TEST(Autoregressor, LossIsNonNegative) {
  SeededRng rng(10);
  Autoregressor tok(ArShape::standard(5, 0, 2), OutputKind::token, rng);
  Autoregressor cont(ArShape::standard(5, 0, 2), OutputKind::continuous, rng);
  for (int i = 0; i < 50; ++i) {
    const SignalVector x = concat(std::vector<SignalVector>{gaussian(5, rng), gaussian(5, rng)});
    EXPECT_GE(tok.loss(x, one_hot(5, rng.below(5))), 0.0);
    EXPECT_GE(cont.loss(x, gaussian(5, rng)), 0.0);
  }
}

// The successor of 'a' in "abab..." is always 'b' by brute-force count.
TEST(Autoregressor, LearnsAlternationFromBigramCounts) {
  const std::string text = "abababababababababab";
  std::map<char, std::map<char, int>> succ;
  for (std::size_t i = 1; i < text.size(); ++i) ++succ[text[i - 1]][text[i]];
  ASSERT_EQ(succ['a'].size(), 1u);
  const char expected = succ['a'].begin()->first;

  SeededRng rng(11);
  Autoregressor ar(ArShape::standard(2, 0, 1), OutputKind::token, rng);
  const SignalVector none;
  for (int epoch = 0; epoch < 100; ++epoch)
    for (std::size_t i = 1; i < text.size(); ++i) {
      const std::vector<SignalVector> h{one_hot(2, text[i - 1] - 'a')};
      ar.train(h, none, one_hot(2, text[i] - 'a'), 0.1);
    }
  const std::vector<SignalVector> h{one_hot(2, 0)};
  EXPECT_EQ(static_cast<char>('a' + argmax(ar.predict(h, none).values())), expected);
}

TEST(Autoregressor, RejectsWrongHistoryAndContext) {
  SeededRng rng(12);
  Autoregressor ar(ArShape::standard(3, 2, 2), OutputKind::continuous, rng);
  EXPECT_THROW(ar.predict(std::vector<SignalVector>(1, SignalVector(3)), SignalVector(2)), DimensionError);
  EXPECT_THROW(ar.predict(std::vector<SignalVector>(2, SignalVector(3)), SignalVector(1)), DimensionError);
  EXPECT_THROW(ar.predict(std::vector<SignalVector>(2, SignalVector(4)), SignalVector(2)), DimensionError);
}

TEST(GradCheck, SmallPoolerPasses) {
  SeededRng rng(13);
  Pooler p(PoolerShape{2, 1, 1, 0}, rng);
  EXPECT_EQ(p.parameter_count(), 7u);
  const std::vector<SignalVector> window{gaussian(2, rng)};
  EXPECT_LT(grad_check(p, window).max_error, 1e-4);
  Pooler deep(PoolerShape::standard(3, 3, 4), rng);
  const std::vector<SignalVector> w3{gaussian(3, rng), gaussian(3, rng), gaussian(3, rng)};
  EXPECT_LT(grad_check(deep, w3).max_error, 1e-4);
}

// The loss of a linear predictor is quadratic in each parameter, so central
// differences are exact up to rounding.
TEST(GradCheck, LinearUnitIsNearExact) {
  SeededRng rng(14);
  Autoregressor ar(ArShape{4, 2, 3, 0}, OutputKind::continuous, rng);
  std::vector<SignalVector> hist{gaussian(4, rng), gaussian(4, rng), gaussian(4, rng)};
  GradCheckOptions opt;
  opt.epsilon = 1e-4;
  EXPECT_LT(grad_check(ar, hist, gaussian(2, rng), gaussian(4, rng), opt).max_error, 1e-7);
}

TEST(GradCheck, PerfectFitUsesAbsoluteFallback) {
  SeededRng rng(15);
  Autoregressor ar(ArShape::standard(3, 0, 2), OutputKind::continuous, rng);
  std::vector<SignalVector> hist{gaussian(3, rng), gaussian(3, rng)};
  const SignalVector none;
  const SignalVector target = ar.predict(hist, none);
  const auto grad = ar.gradient(ar.assemble(hist, none), target);
  for (double g : grad) EXPECT_EQ(g, 0.0);
  EXPECT_LT(grad_check(ar, hist, none, target).max_error, 1e-6);
}

TEST(GradCheck, TokenAutoregressorAgreesWithCentralDifference) {
  SeededRng rng(16);
  Autoregressor ar(ArShape::standard(5, 3, 2), OutputKind::token, rng);
  std::vector<SignalVector> hist{one_hot(5, 1), one_hot(5, 4)};
  const SignalVector ctx = gaussian(3, rng), target = one_hot(5, 2);
  const SignalVector input = ar.assemble(hist, ctx);
  const auto grad = ar.gradient(input, target);
  // Independent check of one coordinate through the oracle's own difference.
  const std::size_t i = 7;
  auto loss_at = [&](double v) {
    Autoregressor copy = ar;
    copy.parameters()[i] = v;
    return copy.loss(input, target);
  };
  EXPECT_NEAR(grad[i], oracle::central_difference(loss_at, ar.parameters()[i]), 1e-6);
  EXPECT_LT(grad_check(ar, hist, ctx, target).max_error, 1e-4);
}

TEST(GradCheck, EpsilonOutsideBoundsIsRejected) {
  SeededRng rng(17);
  Pooler p(PoolerShape::standard(2, 2, 1), rng);
  const std::vector<SignalVector> w{SignalVector{1, 0}, SignalVector{0, 1}};
  GradCheckOptions opt;
  opt.epsilon = 1e-2;
  EXPECT_THROW(grad_check(p, w, opt), Error);
  opt.epsilon = 1e-9;
  EXPECT_THROW(grad_check(p, w, opt), Error);
}

TEST(GradCheck, CorruptedGradientIsCaught) {
  SeededRng rng(18);
  Pooler p(PoolerShape::standard(3, 2, 2), rng);
  const std::vector<SignalVector> w{gaussian(3, rng), gaussian(3, rng)};
  GradCheckOptions opt;
  opt.corrupt_analytic = true;
  EXPECT_GT(grad_check(p, w, opt).max_error, 1e-4);
}

TEST(GradCheck, RestoresParameters) {
  SeededRng rng(19);
  Pooler p(PoolerShape::standard(3, 2, 2), rng);
  const std::vector<SignalVector> w{gaussian(3, rng), gaussian(3, rng)};
  const std::vector<double> before(p.parameters().begin(), p.parameters().end());
  grad_check(p, w);
  EXPECT_TRUE(bit_identical(before, p.parameters()));
}

TEST(Divergence, ParameterGuardReportsUnitAndRate) {
  SeededRng rng(20);
  Autoregressor ar(ArShape{2, 0, 1, 0}, OutputKind::continuous, rng, "probe.ar");
  const std::vector<SignalVector> h{SignalVector{1e3, 1e3}};
  try {
    for (int i = 0; i < 100; ++i) ar.train(h, SignalVector(), SignalVector{1e3, -1e3}, 10.0);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.unit(), "probe.ar");
    EXPECT_DOUBLE_EQ(e.lr(), 10.0);
  }
}

TEST(Divergence, NonFiniteLossIsReported) {
  SeededRng rng(21);
  Pooler p(PoolerShape::standard(2, 2, 1), rng, "probe.pool");
  const std::vector<SignalVector> w{SignalVector{std::nan(""), 0}, SignalVector{0, 0}};
  EXPECT_THROW(p.train(w, 0.1), DivergenceError);
}

// Training one unit never touches another unit's parameters.
TEST(Locality, UnitsOwnTheirParameters) {
  SeededRng rng(22);
  Pooler a(PoolerShape::standard(3, 2, 2), rng);
  Autoregressor b(ArShape::standard(3, 0, 2), OutputKind::continuous, rng);
  const std::vector<double> b0(b.parameters().begin(), b.parameters().end());
  const std::vector<SignalVector> w{gaussian(3, rng), gaussian(3, rng)};
  for (int i = 0; i < 10; ++i) a.train(w, 0.1);
  EXPECT_TRUE(bit_identical(b0, b.parameters()));
}
