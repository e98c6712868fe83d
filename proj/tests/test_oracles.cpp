// Self-checks for the reference computations in support/oracles.hpp.

#include <gtest/gtest.h>

#include "support/oracles.hpp"

TEST(Oracles, MannKendallDetectsMonotoneIncrease) {
  std::vector<double> up, down, flat(20, 0.3);
  for (int i = 0; i < 20; ++i) {
    up.push_back(i * 0.01);
    down.push_back(-i * 0.01);
  }
  EXPECT_LT(oracle::mann_kendall(up).p_increasing, 1e-6);
  EXPECT_GT(oracle::mann_kendall(down).p_increasing, 0.999);
  EXPECT_DOUBLE_EQ(oracle::mann_kendall(flat).p_increasing, 1.0);
}

TEST(Oracles, MannKendallSmallSampleStatistic) {
  // S for 1,3,2,4: pairs (1,3)+ (1,2)+ (1,4)+ (3,2)- (3,4)+ (2,4)+ = 4.
  const auto r = oracle::mann_kendall({1, 3, 2, 4});
  EXPECT_DOUBLE_EQ(r.s, 4.0);
  EXPECT_DOUBLE_EQ(r.variance, 4.0 * 3 * 13 / 18.0);
}

TEST(Oracles, SignTestTenOfTen) {
  std::vector<double> a(10, 1.0), b(10, 2.0);
  EXPECT_NEAR(oracle::sign_test(a, b), 1.0 / 1024.0, 1e-12);
  b[0] = 0.5;  // 9 of 10
  EXPECT_NEAR(oracle::sign_test(a, b), 11.0 / 1024.0, 1e-12);
}

TEST(Oracles, CriterionDpMatchesEnumeration) {
  for (unsigned n : {10u, 12u, 14u}) {
    std::size_t never = 0;
    for (std::uint32_t bits = 0; bits < (1u << n); ++bits) {
      std::vector<bool> c(n);
      for (unsigned i = 0; i < n; ++i) c[i] = (bits >> i) & 1u;
      if (!oracle::first_criterion(c)) ++never;
    }
    EXPECT_NEAR(oracle::prob_criterion_not_reached(n, 0.5), static_cast<double>(never) / (1u << n), 1e-12) << n;
  }
}

TEST(Oracles, CriterionDpFirstWindow) {
  // Only one window exists after 10 trials: P(hit) = P(Bin(10, p) >= 9).
  for (double p : {0.3, 0.5, 0.8})
    EXPECT_NEAR(1.0 - oracle::prob_criterion_not_reached(10, p), oracle::binomial_upper(10, 9, p), 1e-12);
}

TEST(Oracles, NgramCounts) {
  EXPECT_DOUBLE_EQ(oracle::unigram_accuracy("aab"), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(oracle::bigram_accuracy("ababab"), 1.0);
}
