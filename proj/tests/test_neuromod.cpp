#include <gtest/gtest.h>

#include <cmath>

#include "hica/experiments.hpp"
#include "hica/graph.hpp"
#include "hica/neuromod.hpp"

using namespace hica;

namespace {

ModulatorParams params(double g_min = 0.1, double eta = 0.8, double tau = 10.0) {
  ModulatorParams p;
  p.g_min = g_min;
  p.eta = eta;
  p.tau_ticks = tau;
  return p;
}

}  // namespace

TEST(Modulator, RewardRaisesLevelByEtaTimesMagnitude) {
  Modulator m(params());
  m.reward_event(1.0);
  EXPECT_DOUBLE_EQ(m.level(), 0.0 + 0.8 * 1.0);
}

TEST(Modulator, RewardIsSignInvariant) {
  Modulator pos(params()), neg(params());
  pos.reward_event(1.0);
  neg.reward_event(-1.0);
  EXPECT_DOUBLE_EQ(neg.level(), 0.8);
  EXPECT_DOUBLE_EQ(neg.level(), pos.level());
}

TEST(Modulator, LevelClampsAtOne) {
  Modulator m(params());
  m.set_level(0.9);
  m.reward_event(1.0);
  EXPECT_DOUBLE_EQ(m.level(), 1.0);
  m.set_level(7.0);
  EXPECT_DOUBLE_EQ(m.level(), 1.0);
  EXPECT_THROW(m.reward_event(std::nan("")), Error);
}

TEST(Modulator, DecaysExponentially) {
  Modulator m(params());
  m.set_level(1.0);
  for (int i = 0; i < 10; ++i) m.decay_step();
  EXPECT_NEAR(m.level(), std::exp(-1.0), 1e-12);
  EXPECT_NEAR(m.level(), 0.3679, 5e-5);
}

// 1 * exp(-t/10) < 0.1 first holds at t = ceil(10 ln 10) = 24.
TEST(Modulator, FallsBelowTenthWithin24Ticks) {
  const int expected = static_cast<int>(std::ceil(10.0 * std::log(10.0)));
  ASSERT_EQ(expected, 24);
  Modulator m(params());
  m.set_level(1.0);
  int t = 0;
  while (m.level() >= 0.1) {
    m.decay_step();
    ++t;
  }
  EXPECT_EQ(t, expected);
  EXPECT_NEAR(t / m.params().ticks_per_second, 2.4, 1e-12);
}

TEST(Modulator, EffectiveRateFollowsGain) {
  Modulator m(params(0.1));
  EXPECT_DOUBLE_EQ(m.effective_lr(0.2), 0.2 * 0.1);
  m.set_level(1.0);
  EXPECT_DOUBLE_EQ(m.effective_lr(0.2), 0.2);
  m.set_level(0.5);
  EXPECT_NEAR(m.effective_lr(0.2), 0.55 * 0.2, 1e-15);
  EXPECT_THROW(m.effective_lr(-1.0), Error);
}

TEST(Modulator, RejectsBadParameters) {
  EXPECT_THROW(Modulator(params(0.0)), Error);
  EXPECT_THROW(Modulator(params(1.5)), Error);
  EXPECT_THROW(Modulator(params(0.1, 0.0)), Error);
  EXPECT_THROW(Modulator(params(0.1, 0.8, 0.0)), Error);
}

TEST(Modulator, GainStaysWithinBounds) {
  Modulator m(params(0.25));
  SeededRng rng(1);
  for (int i = 0; i < 1000; ++i) {
    if (rng.uniform() < 0.1) m.reward_event(rng.normal());
    m.decay_step();
    ASSERT_GE(m.gain(), 0.25);
    ASSERT_LE(m.gain(), 1.0);
  }
}

// One reward changes the effective rate of every node at once.
TEST(Modulator, ReachesEveryNodeOfTheGraph) {
  SeededRng rng(2);
  HetGraph g(2);
  const double rates[3] = {0.05, 0.1, 0.2};
  for (int i = 0; i < 3; ++i) {
    LayerConfig c;
    c.d_in = i == 0 ? 3 : 2;
    c.d_sum = 2;
    c.d_ctx = i < 2 ? 2 : 0;
    c.k = 2;
    c.w = 2;
    c.base_lr = rates[i];
    g.add_node(Layer(c, rng), "n" + std::to_string(i));
  }
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  g.validate();
  Modulator m(params());
  const auto quiet = g.tick(SignalVector{1, 0, 0}, m.gain());
  m.reward_event(1.0);
  const auto excited = g.tick(SignalVector{0, 1, 0}, m.gain());
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(quiet.nodes[i].effective_lr, rates[i] * 0.1);
    EXPECT_DOUBLE_EQ(excited.nodes[i].effective_lr, rates[i] * (0.1 + 0.9 * 0.8));
  }
}

// With no reward at all, learning still proceeds at the g_min rate.
TEST(Modulator, BaselineLearningStillConverges) {
  SequenceTaskOptions opt;
  const SequenceRun run = sequence_memorization(3, false, opt);
  ASSERT_TRUE(run.presentations.has_value());
  EXPECT_LE(*run.presentations, opt.max_presentations);
}

TEST(Modulator, RewardedPresentationsConvergeSooner) {
  for (std::uint64_t seed : {1u, 2u}) {
    const SequenceRun plain = sequence_memorization(seed, false);
    const SequenceRun rewarded = sequence_memorization(seed, true);
    ASSERT_TRUE(plain.presentations && rewarded.presentations);
    EXPECT_EQ(plain.sequence, rewarded.sequence);
    EXPECT_LT(*rewarded.presentations, *plain.presentations) << "seed " << seed;
  }
}

TEST(SequenceTask, GreedyReproducibilityOracle) {
  EXPECT_TRUE(greedy_reproducible({0, 1, 2, 3}, 2));
  // History (1, 2) is followed by 3 once and by 0 once.
  EXPECT_FALSE(greedy_reproducible({1, 2, 3, 1, 2, 0}, 2));
  EXPECT_TRUE(greedy_reproducible({1, 2, 3, 1, 2, 0}, 4));
  SeededRng rng(4);
  for (int i = 0; i < 10; ++i) EXPECT_TRUE(greedy_reproducible(random_sequence(8, 20, 4, rng), 4));
}
