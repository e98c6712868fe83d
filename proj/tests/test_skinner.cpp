#include <gtest/gtest.h>

#include "hica/archive.hpp"
#include "hica/skinner.hpp"
#include "support/oracles.hpp"

using namespace hica;

namespace {

WorldConfig quiet_world() {
  WorldConfig w;
  w.predators = 0;
  w.food = 0;
  return w;
}

// Pulls on every trial but keeps its motor gate shut.
class GatedAgent : public LeverAgentBase {
 public:
  GatedAgent() { gate_.disable(); }
  std::string name() const override { return "gated"; }

 protected:
  bool decide(const Percept&, const NeedState&) override { return true; }
};

Phase2Config quick_phase2(std::size_t trials) {
  Phase2Config c;
  c.max_trials = trials;
  return c;
}

}  // namespace

TEST(World, EatingFoodUnderfoot) {
  SkinnerWorld w(quiet_world(), 1);
  w.place_agent({2, 2});
  w.place_food({{2, 2}});
  EXPECT_TRUE(w.percept().on_food);
  const Events e = w.step(Action::eat);
  EXPECT_TRUE(e.food_consumed);
  ASSERT_EQ(w.food().size(), 1u);
  w.place_food({{4, 4}});
  EXPECT_FALSE(w.step(Action::eat).food_consumed);
}

TEST(World, LeverUnderLights) {
  SkinnerWorld w(quiet_world(), 2);
  w.place_agent({5, 6});
  ASSERT_TRUE(w.percept().lever_adjacent);
  w.set_light(Light::red);
  Events e = w.step(Action::pull);
  EXPECT_TRUE(e.shock);
  EXPECT_TRUE(e.lever_pulled);
  EXPECT_FALSE(e.food_consumed);
  w.set_light(Light::green);
  e = w.step(Action::pull);
  EXPECT_TRUE(e.food_consumed);
  EXPECT_FALSE(e.shock);
  w.set_light(Light::off);
  e = w.step(Action::pull);
  EXPECT_TRUE(e.lever_pulled);
  EXPECT_FALSE(e.food_consumed || e.shock);
  w.place_agent({0, 0});
  EXPECT_FALSE(w.step(Action::pull).any());
}

TEST(World, NoopHasNoEvents) {
  SkinnerWorld w(quiet_world(), 3);
  for (int i = 0; i < 20; ++i) EXPECT_FALSE(w.step(Action::noop).any());
  EXPECT_EQ(w.log().size(), 20u);
}

TEST(World, MovesClampAtEdgesAndLever) {
  SkinnerWorld w(quiet_world(), 4);
  w.place_agent({0, 0});
  EXPECT_TRUE(w.percept().blocked[3]);  // west
  EXPECT_FALSE(w.step(Action::west).any());
  EXPECT_EQ(w.agent(), (Cell{0, 0}));
  EXPECT_FALSE(w.step(Action::south).any());
  EXPECT_EQ(w.agent(), (Cell{0, 0}));
  w.place_agent({5, 6});
  EXPECT_TRUE(w.percept().blocked[2]);  // east is the lever
  w.step(Action::east);
  EXPECT_EQ(w.agent(), (Cell{5, 6}));
  EXPECT_THROW(w.place_agent({6, 6}), Error);
}

TEST(World, PredatorContactIsReportedAndRespawnsAway) {
  WorldConfig c;
  c.food = 0;
  SkinnerWorld w(c, 5);
  w.place_agent({3, 3});
  w.place_predators({{3, 3}});
  EXPECT_TRUE(w.step(Action::noop).predator_contact);
  const Cell p = w.predators().front();
  EXPECT_GE(std::abs(p.x - 3) + std::abs(p.y - 3), c.predator_respawn_distance);
}

TEST(World, SameSeedSameActionsSameLog) {
  WorldConfig c;
  SkinnerWorld a(c, 77), b(c, 77);
  SeededRng acts(1);
  for (int i = 0; i < 300; ++i) {
    const auto act = static_cast<Action>(acts.below(kActionCount));
    a.step(act);
    b.step(act);
  }
  EXPECT_EQ(a.log(), b.log());
  EXPECT_EQ(a.predators(), b.predators());
  EXPECT_EQ(a.food(), b.food());
}

TEST(World, ObservationHasFixedDimension) {
  WorldConfig c;
  SkinnerWorld w(c, 6);
  NeedState n;
  SeededRng acts(2);
  for (int i = 0; i < 100; ++i) {
    const SignalVector o = w.observation(n);
    ASSERT_EQ(o.dim(), SkinnerWorld::kObservationDim);
    ASSERT_TRUE(o.all_finite());
    w.step(static_cast<Action>(acts.below(kActionCount)));
  }
  EXPECT_THROW(SkinnerWorld(WorldConfig{12, 12, 0, 0, false, 6, 6, 5}, 1).set_light(Light::red), Error);
}

TEST(Phase1, ReflexesAloneFindFood) {
  Phase1Config c;
  c.world.predators = 0;
  c.learn = false;
  c.episodes = 10;
  const auto [bundle, rep] = skinner_phase1(c, 1);
  std::size_t meals = 0;
  for (auto m : rep.episode_food) meals += m;
  EXPECT_GE(static_cast<double>(meals) / (c.episodes * c.episode_ticks), 1.0 / 50.0);
  EXPECT_EQ(bundle.q.size(), 0u);
}

TEST(Phase1, EmptyGridGivesZeroReward) {
  Phase1Config c;
  c.world.predators = 0;
  c.world.food = 0;
  c.episodes = 5;
  const auto [bundle, rep] = skinner_phase1(c, 2);
  for (double r : rep.episode_reward) EXPECT_EQ(r, 0.0);
  EXPECT_FALSE(rep.competent);
}

TEST(Phase1, LearnedInstinctsAreCompetent) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto [bundle, rep] = skinner_phase1(Phase1Config{}, seed);
    EXPECT_TRUE(rep.competent) << "seed " << seed << " reward " << rep.mean_reward_last50 << " contact "
                               << rep.contact_rate_last50;
    EXPECT_GT(bundle.q.size(), 0u);
  }
}

TEST(Phase2, CorrectnessPredicate) {
  EXPECT_TRUE(trial_correct(Light::green, TrialAction::pulled));
  EXPECT_TRUE(trial_correct(Light::red, TrialAction::withheld));
  EXPECT_FALSE(trial_correct(Light::green, TrialAction::withheld));
  EXPECT_FALSE(trial_correct(Light::red, TrialAction::pulled));
}

TEST(Phase2, CriterionMatchesBruteForce) {
  SeededRng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<bool> c(rng.below(40));
    const double p = rng.uniform();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = rng.bernoulli(p);
    ASSERT_EQ(trials_to_criterion(c), oracle::first_criterion(c));
  }
  EXPECT_EQ(trials_to_criterion(std::vector<bool>(10, true)), 10u);
  EXPECT_EQ(trials_to_criterion(std::vector<bool>(9, true)), std::nullopt);
}

TEST(Phase2, OracleReachesCriterionAtTen) {
  const InstinctBundle instinct{ReflexParams{}, QTable(QParams{})};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    OracleAgent agent;
    const Phase2Result r = skinner_phase2(quick_phase2(100), instinct, agent, seed);
    ASSERT_EQ(r.trials_to_criterion, 10u) << "seed " << seed;
    for (const auto& t : r.trials) EXPECT_TRUE(t.correct);
  }
}

// The exact dynamic program agrees with simulated coin flips, and the random
// lever agent's not-reached rate agrees with both.
TEST(Phase2, RandomAgentMatchesExactCriterionOdds) {
  const double exact = oracle::prob_criterion_not_reached(100, 0.5);
  SeededRng rng(4);
  int never = 0;
  const int sims = 20000;
  for (int s = 0; s < sims; ++s) {
    std::vector<bool> c(100);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = rng.bernoulli(0.5);
    never += !trials_to_criterion(c).has_value();
  }
  EXPECT_NEAR(static_cast<double>(never) / sims, exact, 0.015);

  const InstinctBundle instinct{ReflexParams{}, QTable(QParams{})};
  int agent_never = 0;
  const int seeds = 200;
  for (int seed = 0; seed < seeds; ++seed) {
    RandomAgent agent(derive_seed(seed, 5));
    const Phase2Result r = skinner_phase2(quick_phase2(100), instinct, agent, seed);
    agent_never += !r.trials_to_criterion.has_value();
  }
  const double rate = static_cast<double>(agent_never) / seeds;
  // Binomial standard error at n=200 is about 0.033.
  EXPECT_NEAR(rate, exact, 0.1);
}

TEST(Phase2, ClosedMotorGateSuppressesActions) {
  const InstinctBundle instinct{ReflexParams{}, QTable(QParams{})};
  GatedAgent agent;
  Phase2Config c = quick_phase2(3);
  const Phase2Result r = skinner_phase2(c, instinct, agent, 1);
  EXPECT_EQ(r.gated_actions, 3 * c.trial_timeout);
  for (const auto& t : r.trials) EXPECT_EQ(t.action, TrialAction::withheld);
}

TEST(Phase2, InstinctBundleIsLeftUntouched) {
  Phase1Config p1;
  p1.episodes = 20;
  auto [bundle, rep] = skinner_phase1(p1, 8);
  const std::string before = to_bytes(bundle);
  HicaAgent agent(HicaAgentConfig{}, 8);
  skinner_phase2(quick_phase2(30), bundle, agent, 8);
  EXPECT_EQ(to_bytes(bundle), before);
}

TEST(Phase2, HicaRunIsDeterministic) {
  const InstinctBundle instinct{ReflexParams{}, QTable(QParams{})};
  HicaAgent a(HicaAgentConfig{}, 9), b(HicaAgentConfig{}, 9);
  const Phase2Result ra = skinner_phase2(quick_phase2(40), instinct, a, 9, false);
  const Phase2Result rb = skinner_phase2(quick_phase2(40), instinct, b, 9, false);
  ASSERT_EQ(ra.trials.size(), rb.trials.size());
  for (std::size_t i = 0; i < ra.trials.size(); ++i) {
    EXPECT_EQ(ra.trials[i].light, rb.trials[i].light);
    EXPECT_EQ(ra.trials[i].action, rb.trials[i].action);
    EXPECT_EQ(ra.trials[i].plan_value, rb.trials[i].plan_value);
  }
}

TEST(Phase2, HicaPlansAreGroundedInTheMotorLayer) {
  const InstinctBundle instinct{ReflexParams{}, QTable(QParams{})};
  HicaAgent agent(HicaAgentConfig{}, 3);
  const Phase2Result r = skinner_phase2(quick_phase2(40), instinct, agent, 3, false);
  EXPECT_EQ(r.gated_actions, 0u);
  EXPECT_GT(agent.preplay_count(), 0u);
  ASSERT_FALSE(agent.context_log().empty());
  ASSERT_EQ(agent.context_log().size(), agent.render_log().size());
  EXPECT_EQ(agent.motor().context(), agent.context_log().back());
  for (const auto& d : agent.render_log()) {
    ASSERT_EQ(d.dim(), kActionCount);
    double s = 0.0;
    for (double x : d) s += x;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  bool any_preplay = false;
  for (const auto& t : r.trials) any_preplay |= t.preplay_ran;
  EXPECT_TRUE(any_preplay);
}

TEST(Phase2, HicaLearnsTheLightRule) {
  const InstinctBundle instinct{ReflexParams{}, QTable(QParams{})};
  HicaAgent agent(HicaAgentConfig{}, 1);
  const Phase2Result r = skinner_phase2(quick_phase2(100), instinct, agent, 1);
  ASSERT_TRUE(r.trials_to_criterion.has_value());
  EXPECT_LE(*r.trials_to_criterion, 15u);
}
