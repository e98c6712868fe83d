#include <gtest/gtest.h>

#include <set>

#include "hica/signal.hpp"

using namespace hica;

TEST(Signal, ConcatSplitRoundTrip) {
  SeededRng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t parts = 1 + rng.below(5), d = 1 + rng.below(6);
    std::vector<SignalVector> vs;
    for (std::size_t i = 0; i < parts; ++i) {
      SignalVector v(d);
      for (auto& x : v) x = rng.normal();
      vs.push_back(v);
    }
    const SignalVector flat = concat(vs);
    ASSERT_EQ(flat.dim(), parts * d);
    EXPECT_EQ(split(flat, parts), vs);
  }
}

TEST(Signal, ArgmaxTiesGoToLowestIndex) {
  EXPECT_EQ(argmax(SignalVector{1, 3, 3, 2}.values()), 1u);
  EXPECT_EQ(argmax(SignalVector{0, 0, 0}.values()), 0u);
}

TEST(Signal, SoftmaxIsADistributionAndStable) {
  const SignalVector p = softmax(SignalVector{1000, 1000, 999});
  double s = 0;
  for (double x : p) {
    EXPECT_TRUE(std::isfinite(x));
    s += x;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_NEAR(p[0], p[1], 1e-15);
  EXPECT_NEAR(p[0] / p[2], std::exp(1.0), 1e-9);
}

TEST(Signal, CosineBasics) {
  EXPECT_NEAR(cosine(SignalVector{1, 0}, SignalVector{2, 0}), 1.0, 1e-15);
  EXPECT_NEAR(cosine(SignalVector{1, 0}, SignalVector{0, 3}), 0.0, 1e-15);
  EXPECT_NEAR(cosine(SignalVector{1, 1}, SignalVector{-1, -1}), -1.0, 1e-15);
  EXPECT_EQ(cosine(SignalVector{0, 0}, SignalVector{1, 1}), 0.0);
}

TEST(Signal, RequireDimThrowsDimensionError) {
  EXPECT_NO_THROW(require_dim(SignalVector(3), 3, "x"));
  try {
    require_dim(SignalVector(2), 3, "probe");
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.expected(), 3u);
    EXPECT_EQ(e.got(), 2u);
  }
}

TEST(TokenCodec, SortedAlphabetAndRoundTrip) {
  const TokenCodec c = TokenCodec::from_corpus("banana bread");
  EXPECT_EQ(c.alphabet(), " abdenr");
  for (char ch : std::string("banana bread")) {
    const SignalVector v = c.one_hot(ch);
    double s = 0;
    for (double x : v) s += x;
    EXPECT_EQ(s, 1.0);
    EXPECT_EQ(c.argmax_decode(v), ch);
  }
}

TEST(TokenCodec, UnknownCharacterThrows) {
  const TokenCodec c("abc");
  EXPECT_THROW(c.one_hot('z'), UnknownTokenError);
  EXPECT_FALSE(c.contains('z'));
  EXPECT_THROW(c.argmax_decode(SignalVector(4)), DimensionError);
}

TEST(SeededRng, SameSeedSameStream) {
  SeededRng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(SeededRng, StateRoundTripResumesStream) {
  SeededRng a(7);
  for (int i = 0; i < 13; ++i) a.normal();
  SeededRng b(0);
  b.set_state(a.state());
  EXPECT_EQ(a, b);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(a.uniform(), b.uniform());
  EXPECT_THROW(b.set_state("garbage"), Error);
}

TEST(SeededRng, DistributionRanges) {
  SeededRng r(1);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(SeededRng, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t p = 0; p < 20; ++p)
    for (std::uint64_t i = 0; i < 20; ++i) seen.insert(derive_seed(p, i));
  EXPECT_EQ(seen.size(), 400u);
  EXPECT_NE(SeededRng(5).split(0).next_u64(), SeededRng(5).split(1).next_u64());
}
