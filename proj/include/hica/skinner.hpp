#pragma once

// Gridworld operant-conditioning box. Phase 1 shapes foraging and predator
// avoidance; phase 2 switches on a lever and a light: pulling under green
// yields a pellet, pulling under red a shock, and withholding yields nothing.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hica/errors.hpp"
#include "hica/hippocampus.hpp"
#include "hica/innate.hpp"
#include "hica/layer.hpp"
#include "hica/neuromod.hpp"
#include "hica/signal.hpp"

namespace hica {

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct WorldConfig {
  int width = 12;
  int height = 12;
  int predators = 1;
  int food = 3;
  bool lever = true;
  int lever_x = 6;
  int lever_y = 6;
  int predator_respawn_distance = 5;
};

struct StepRecord {
  std::uint64_t tick = 0;
  Action action = Action::noop;
  Events events;
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

class SkinnerWorld {
 public:
  static constexpr std::size_t kObservationDim = 14;

  SkinnerWorld(const WorldConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    if (cfg.width < 3 || cfg.height < 3) throw Error("world: grid must be at least 3x3");
    if (cfg.predators < 0 || cfg.food < 0) throw Error("world: counts must be non-negative");
    if (cfg.lever && !inside({cfg.lever_x, cfg.lever_y})) throw Error("world: lever outside the grid");
    agent_ = random_free_cell();
    for (int i = 0; i < cfg.food; ++i) food_.push_back(random_free_cell());
    for (int i = 0; i < cfg.predators; ++i) predators_.push_back(far_cell(cfg.predator_respawn_distance));
  }

  const WorldConfig& config() const { return cfg_; }
  Cell agent() const { return agent_; }
  const std::vector<Cell>& food() const { return food_; }
  const std::vector<Cell>& predators() const { return predators_; }
  Light light() const { return light_; }
  std::uint64_t tick() const { return tick_; }
  const std::vector<StepRecord>& log() const { return log_; }

  void set_light(Light l) {
    if (!cfg_.lever && l != Light::off) throw Error("world: no lever, the light stays off");
    light_ = l;
  }

  // Test hooks for building exact situations.
  void place_agent(Cell c) {
    if (!inside(c) || is_lever(c)) throw Error("world: invalid agent cell");
    agent_ = c;
  }
  void place_food(std::vector<Cell> f) { food_ = std::move(f); }
  void place_predators(std::vector<Cell> p) { predators_ = std::move(p); }

  Percept percept() const {
    Percept p;
    p.light = light_;
    auto nearest = [&](const std::vector<Cell>& cells) -> std::optional<Offset> {
      std::optional<Offset> best;
      for (const auto& c : cells) {
        const Offset o{c.x - agent_.x, c.y - agent_.y};
        if (!best || o.manhattan() < best->manhattan()) best = o;
      }
      return best;
    };
    p.food = nearest(food_);
    p.predator = nearest(predators_);
    p.on_food = p.food && p.food->manhattan() == 0;
    if (cfg_.lever) {
      p.lever = Offset{cfg_.lever_x - agent_.x, cfg_.lever_y - agent_.y};
      p.lever_adjacent = p.lever->manhattan() == 1;
    }
    for (std::size_t i = 0; i < kMoves.size(); ++i) {
      const Offset d = step_offset(kMoves[i]);
      const Cell next{agent_.x + d.dx, agent_.y + d.dy};
      p.blocked[i] = !inside(next) || is_lever(next);
    }
    return p;
  }

  // Fixed-size encoding: food, predator and lever offsets (presence flag and
  // grid-normalized dx, dy each), light one-hot, hunger, integrity.
  SignalVector observation(const NeedState& need) const {
    const Percept p = percept();
    SignalVector v(kObservationDim);
    auto put = [&](std::size_t at, const std::optional<Offset>& o) {
      if (!o) return;
      v[at] = 1.0;
      v[at + 1] = static_cast<double>(o->dx) / cfg_.width;
      v[at + 2] = static_cast<double>(o->dy) / cfg_.height;
    };
    put(0, p.food);
    put(3, p.predator);
    put(6, p.lever);
    v[9 + static_cast<std::size_t>(p.light)] = 1.0;
    v[12] = need.hunger;
    v[13] = need.integrity;
    return v;
  }

  Events step(Action a) {
    Events e;
    switch (a) {
      case Action::north:
      case Action::south:
      case Action::east:
      case Action::west: {
        const Offset d = step_offset(a);
        const Cell next{std::clamp(agent_.x + d.dx, 0, cfg_.width - 1), std::clamp(agent_.y + d.dy, 0, cfg_.height - 1)};
        if (!is_lever(next)) agent_ = next;
        break;
      }
      case Action::eat: {
        auto it = std::find(food_.begin(), food_.end(), agent_);
        if (it != food_.end()) {
          e.food_consumed = true;
          *it = random_free_cell();
        }
        break;
      }
      case Action::pull:
        if (cfg_.lever && percept().lever_adjacent) {
          e.lever_pulled = true;
          if (light_ == Light::green) e.food_consumed = true;
          if (light_ == Light::red) e.shock = true;
        }
        break;
      case Action::noop:
        break;
    }
    if (touching()) e.predator_contact = true;
    for (auto& p : predators_) {
      const int r = static_cast<int>(rng_.below(5));
      Cell next = p;
      if (r < 4) {
        const Offset d = step_offset(kMoves[r]);
        next = {std::clamp(p.x + d.dx, 0, cfg_.width - 1), std::clamp(p.y + d.dy, 0, cfg_.height - 1)};
      }
      if (!is_lever(next)) p = next;
    }
    if (touching()) e.predator_contact = true;
    if (e.predator_contact)
      for (auto& p : predators_)
        if (p == agent_ || manhattan(p, agent_) <= 1) p = far_cell(cfg_.predator_respawn_distance);
    ++tick_;
    log_.push_back({tick_, a, e});
    return e;
  }

 private:
  static int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

  bool inside(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < cfg_.width && c.y < cfg_.height; }
  bool is_lever(Cell c) const { return cfg_.lever && c.x == cfg_.lever_x && c.y == cfg_.lever_y; }

  bool touching() const {
    return std::any_of(predators_.begin(), predators_.end(), [&](const Cell& p) { return p == agent_; });
  }

  Cell random_free_cell() {
    for (;;) {
      const Cell c{static_cast<int>(rng_.below(cfg_.width)), static_cast<int>(rng_.below(cfg_.height))};
      if (!is_lever(c)) return c;
    }
  }

  Cell far_cell(int min_distance) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const Cell c = random_free_cell();
      if (manhattan(c, agent_) >= min_distance) return c;
    }
    return random_free_cell();
  }

  WorldConfig cfg_;
  SeededRng rng_;
  Cell agent_;
  std::vector<Cell> food_;
  std::vector<Cell> predators_;
  Light light_ = Light::off;
  std::uint64_t tick_ = 0;
  std::vector<StepRecord> log_;
};

// ---------------------------------------------------------------- phase 1

struct InstinctBundle {
  ReflexParams reflex;
  QTable q;

  template <typename Archive>
  void persist(Archive& ar) {
    std::int64_t radius = reflex.danger_radius;
    ar.field(radius);
    reflex.danger_radius = static_cast<int>(radius);
    ar.field(reflex.flee_confidence);
    ar.field(reflex.eat_confidence);
    ar.field(reflex.forage_confidence);
    ar.field(reflex.wander_confidence);
    q.persist(ar);
  }
};

struct Phase1Config {
  WorldConfig world{12, 12, 1, 3, false, 6, 6, 5};
  NeedParams need;
  ReflexParams reflex;
  QParams q;
  std::size_t episodes = 200;
  std::size_t episode_ticks = 100;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  bool learn = true;  // false runs the bare reflexes
};

struct Phase1Report {
  std::vector<double> episode_reward;
  std::vector<std::size_t> episode_contacts;
  std::vector<std::size_t> episode_food;
  double mean_reward_last50 = 0.0;
  double contact_rate_last50 = 0.0;  // share of episodes with any predator contact
  bool competent = false;
};

// Actions the learned forager chooses among.
inline constexpr std::array<Action, 5> kForageActions = {Action::north, Action::south, Action::east, Action::west,
                                                         Action::eat};

// The instinct policy: flee always preempts; otherwise the greedy tabular
// action, falling back to the reflex where the table has no preference.
inline Action instinct_action(const InstinctBundle& b, const Percept& p, SeededRng& rng) {
  const ActionProposal reflex = reflex_policy(p, rng, b.reflex);
  if (p.predator && p.predator->manhattan() <= b.reflex.danger_radius) return reflex.action;
  const std::uint64_t s = forage_state_key(p, b.reflex.danger_radius);
  const Action greedy = b.q.greedy(s, kForageActions);
  return b.q.value(s, greedy) > b.q.value(s, reflex.action) ? greedy : reflex.action;
}

inline std::pair<InstinctBundle, Phase1Report> skinner_phase1(const Phase1Config& cfg, std::uint64_t seed) {
  InstinctBundle bundle{cfg.reflex, QTable(cfg.q)};
  Phase1Report rep;
  SeededRng rng(derive_seed(seed, 11));
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    SkinnerWorld world(cfg.world, derive_seed(seed, 1000 + ep));
    NeedState need;
    const double frac = cfg.episodes > 1 ? static_cast<double>(ep) / static_cast<double>(cfg.episodes - 1) : 1.0;
    const double eps = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
    double total = 0.0;
    std::size_t contacts = 0, meals = 0;
    for (std::size_t t = 0; t < cfg.episode_ticks; ++t) {
      const Percept p = world.percept();
      const std::uint64_t s = forage_state_key(p, cfg.reflex.danger_radius);
      Action a;
      if (!cfg.learn || rng.bernoulli(eps))
        a = reflex_policy(p, rng, bundle.reflex).action;
      else
        a = instinct_action(bundle, p, rng);
      const NeedState before = need;
      const Events e = world.step(a);
      need.step(cfg.need);
      need.apply(e, cfg.need);
      const double r = reward_evaluate(before, need, e);
      total += r;
      if (e.predator_contact) ++contacts;
      if (e.food_consumed) ++meals;
      if (cfg.learn && std::find(kForageActions.begin(), kForageActions.end(), a) != kForageActions.end())
        bundle.q.update(s, a, r, forage_state_key(world.percept(), cfg.reflex.danger_radius));
    }
    rep.episode_reward.push_back(total);
    rep.episode_contacts.push_back(contacts);
    rep.episode_food.push_back(meals);
  }
  const std::size_t n = std::min<std::size_t>(50, rep.episode_reward.size());
  if (n > 0) {
    double sum = 0.0;
    std::size_t touched = 0;
    for (std::size_t i = rep.episode_reward.size() - n; i < rep.episode_reward.size(); ++i) {
      sum += rep.episode_reward[i];
      if (rep.episode_contacts[i] > 0) ++touched;
    }
    rep.mean_reward_last50 = sum / static_cast<double>(n);
    rep.contact_rate_last50 = static_cast<double>(touched) / static_cast<double>(n);
  }
  rep.competent = rep.mean_reward_last50 > 0.0 && rep.contact_rate_last50 < 0.05;
  return {std::move(bundle), rep};
}

// ---------------------------------------------------------------- phase 2

enum class TrialAction { pulled, withheld };

struct TrialRecord {
  std::size_t index = 0;  // 1-based
  Light light = Light::off;
  TrialAction action = TrialAction::withheld;
  double outcome = 0.0;
  bool correct = false;
  // Agent-side annotations for the log.
  std::string mode;
  bool preplay_ran = false;
  bool plan_accepted = false;
  double plan_value = 0.0;
};

inline bool trial_correct(Light light, TrialAction a) {
  return (a == TrialAction::pulled && light == Light::green) || (a == TrialAction::withheld && light == Light::red);
}

// First 1-based trial index at which `need` of the last `window` trials were
// correct; nullopt when never reached.
inline std::optional<std::size_t> trials_to_criterion(const std::vector<bool>& correct, std::size_t window = 10,
                                                      std::size_t need = 9) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < correct.size(); ++i) {
    if (correct[i]) ++hits;
    if (i >= window && correct[i - window]) --hits;
    if (i + 1 >= window && hits >= need) return i + 1;
  }
  return std::nullopt;
}

struct Phase2Config {
  WorldConfig world{12, 12, 0, 0, true, 6, 6, 5};
  NeedParams need{0.001, 0.05, 0.01, 0.2, 0.5};
  double initial_hunger = 0.9;
  std::size_t max_trials = 100;
  std::size_t trial_timeout = 30;
  std::size_t inter_trial = 10;
  double green_probability = 0.5;
};

class Phase2Agent {
 public:
  virtual ~Phase2Agent() = default;
  virtual std::string name() const = 0;
  virtual void begin_trial(std::size_t /*index*/, Light /*light*/, const NeedState& /*need*/) {}
  // Action for this tick; only called while the agent's motor gate is open.
  virtual Action act(const Percept& p, const NeedState& need) = 0;
  virtual void observe(Action /*a*/, const Events& /*e*/, double /*reward*/) {}
  virtual void end_trial(TrialRecord& /*record*/) {}
  virtual void inter_trial_tick() {}
  virtual const MotorGate& gate() const { return gate_; }

 protected:
  MotorGate gate_;
};

// Walks to the lever and applies a per-trial pull decision once adjacent.
class LeverAgentBase : public Phase2Agent {
 public:
  void begin_trial(std::size_t, Light light, const NeedState&) override {
    decided_.reset();
    light_ = light;
  }

  Action act(const Percept& p, const NeedState& need) override {
    if (!p.lever) return Action::noop;
    if (!p.lever_adjacent) return step_toward(*p.lever);
    if (!decided_) decided_ = decide(p, need);
    return *decided_ ? Action::pull : Action::noop;
  }

 protected:
  virtual bool decide(const Percept& p, const NeedState& need) = 0;
  std::optional<bool> decided_;
  Light light_ = Light::off;
};

class OracleAgent : public LeverAgentBase {
 public:
  std::string name() const override { return "oracle"; }

 protected:
  bool decide(const Percept& p, const NeedState&) override { return p.light == Light::green; }
};

class RandomAgent : public LeverAgentBase {
 public:
  RandomAgent(std::uint64_t seed, double pull_probability = 0.5) : rng_(seed), p_(pull_probability) {}
  std::string name() const override { return "random"; }

 protected:
  bool decide(const Percept&, const NeedState&) override { return rng_.bernoulli(p_); }

 private:
  SeededRng rng_;
  double p_;
};

// Top-level event codes used by the agent's world model.
struct EventCode {
  static constexpr std::size_t kDim = 10;
  static SignalVector need(double hunger) {
    SignalVector v(kDim);
    v[0] = hunger;
    v[1] = 1.0;
    return v;
  }
  static SignalVector onset(Light l) {
    SignalVector v(kDim);
    v[2 + static_cast<std::size_t>(l)] = 1.0;
    return v;
  }
  static SignalVector action(TrialAction a) {
    SignalVector v(kDim);
    v[a == TrialAction::pulled ? 5 : 6] = 1.0;
    return v;
  }
  static SignalVector outcome(double r) {
    SignalVector v(kDim);
    v[r > 0 ? 7 : (r < 0 ? 8 : 9)] = 1.0;
    return v;
  }
};

struct HicaAgentConfig {
  bool preplay = true;
  bool modulation = true;
  ModulatorParams modulator;
  AmygdalaParams amygdala;
  // Event-level world model.
  std::size_t top_w = 4;
  std::size_t top_hidden = 24;
  double top_lr = 0.1;
  // Motor layer rendered under the plan.
  std::size_t motor_d_sum = 8;
  double motor_lr = 0.05;
  // Prefrontal evaluator.
  std::size_t pf_hidden = 16;
  double pf_lr = 0.1;
  std::size_t pf_passes = 30;
  // Hippocampus.
  std::size_t loop_capacity = 8;
  std::size_t replay_passes = 20;
  std::size_t replay_episodes = 8;
  // Two imagined steps cover action and outcome; rolling further extrapolates
  // past anything the world model has seen.
  PreplayOptions preplay_options{2, 0.5, 2, 0.05};
  double withhold_value = -0.5;  // simulated value at or below which the plan is vetoed
  double innate_pull_confidence = 0.6;
  double habit_step = 0.25;
  double gate_lr = 0.1;
};

// The full architecture on the lever task: an event-level layer as world
// model, a token motor layer below it, a prefrontal evaluator, loop memory
// with replay and preplay, the modulator, amygdala and basal ganglia.
class HicaAgent : public Phase2Agent {
 public:
  HicaAgent(const HicaAgentConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(derive_seed(seed, 21)), mod_(cfg.modulator), bg_(4),
        loop_(cfg.loop_capacity, EventCode::kDim) {
    SeededRng init(derive_seed(seed, 22));
    LayerConfig top;
    top.d_in = EventCode::kDim;
    top.d_sum = 4;
    top.d_ctx = 4;
    top.k = 4;
    top.w = cfg.top_w;
    top.base_lr = cfg.top_lr;
    top.ar_hidden = cfg.top_hidden;
    top.pool_hidden = 8;
    top_ = Layer(top, init, "events");
    LayerConfig motor;
    motor.d_in = kActionCount;
    motor.d_sum = cfg.motor_d_sum;
    motor.d_ctx = EventCode::kDim;
    motor.k = 4;
    motor.w = 4;
    motor.base_lr = cfg.motor_lr;
    motor.kind = OutputKind::token;
    motor_ = Layer(motor, init, "motor");
    pf_ = PrefrontalUnit(EventCode::kDim, cfg.pf_hidden, init, "prefrontal", true);
  }

  std::string name() const override { return cfg_.preplay ? "hica" : "hica-no-preplay"; }

  const Layer& top() const { return top_; }
  const Layer& motor() const { return motor_; }
  const PrefrontalUnit& prefrontal() const { return pf_; }
  const Modulator& modulator() const { return mod_; }
  const std::vector<SignalVector>& context_log() const { return context_log_; }
  const std::vector<SignalVector>& render_log() const { return render_log_; }
  const std::optional<PlanResult>& last_plan() const { return last_plan_; }
  std::size_t preplay_count() const { return preplays_; }

  void begin_trial(std::size_t, Light light, const NeedState& need) override {
    light_ = light;
    decided_.reset();
    episode_ = {EventCode::need(need.hunger), EventCode::onset(light)};
    trial_plan_.reset();
    trial_mode_ = AmygdalaMode::idle;
    used_learned_ = false;
    learned_action_.reset();
  }

  Action act(const Percept& p, const NeedState& need) override {
    Action a = Action::noop;
    if (!p.lever) {
      a = Action::noop;
    } else if (!p.lever_adjacent) {
      a = step_toward(*p.lever);
    } else {
      if (!decided_) decided_ = decide(p, need);
      a = *decided_ == TrialAction::pulled ? Action::pull : Action::noop;
    }
    return a;
  }

  void observe(Action a, const Events&, double reward) override {
    if (cfg_.modulation && reward != 0.0) mod_.reward_event(reward);
    const double gain = cfg_.modulation ? mod_.gain() : mod_.params().g_min;
    motor_.feed(SignalVector(std::span<const double>(one_hot_action(a))), gain);
    mod_.decay_step();
  }

  void end_trial(TrialRecord& rec) override {
    episode_.push_back(EventCode::action(rec.action));
    episode_.push_back(EventCode::outcome(rec.outcome));
    rec.mode = mode_name(trial_mode_);
    rec.preplay_ran = trial_plan_.has_value();
    rec.plan_accepted = trial_plan_ && trial_plan_->accepted;
    rec.plan_value = trial_plan_ ? (trial_plan_->accepted ? trial_plan_->value : trial_plan_->worst) : 0.0;

    // Prefrontal evaluator: outcome states carry the reward, earlier states none.
    experience_.push_back(episode_);
    outcomes_.push_back(rec.outcome);
    while (experience_.size() > 16) {
      experience_.pop_front();
      outcomes_.pop_front();
    }
    for (std::size_t pass = 0; pass < cfg_.pf_passes; ++pass)
      for (std::size_t i = 0; i < experience_.size(); ++i) {
        const auto& ep = experience_[i];
        for (std::size_t j = 0; j < ep.size(); ++j) pf_.train(ep[j], j + 1 == ep.size() ? outcomes_[i] : 0.0, cfg_.pf_lr);
      }

    // Hippocampal consolidation of salient episodes.
    if (std::abs(rec.outcome) >= 1.0) {
      salient_.push_back(episode_);
      while (salient_.size() > cfg_.replay_episodes) salient_.erase(salient_.begin());
      loop_.clear();
      for (const auto& v : episode_) loop_.record(v);
      // Replay raises the modulator to full; without modulation the gain is
      // pinned at g_min, which is the same as replaying at a scaled-down rate.
      Modulator replay_mod(cfg_.modulator);
      if (!cfg_.modulation) top_.set_base_lr(cfg_.top_lr * cfg_.modulator.g_min);
      replay(salient_, top_, replay_mod, cfg_.replay_passes);
      top_.set_base_lr(cfg_.top_lr);
      known_onsets_.push_back(EventCode::onset(rec.light));
    }

    // Habits strengthen when a learned choice avoided punishment.
    auto& h = habit_[static_cast<std::size_t>(rec.light)];
    if (used_learned_) {
      if (rec.outcome < 0.0) {
        h = {};
      } else {
        h.action = rec.action;
        h.confidence = std::min(1.0, h.confidence + cfg_.habit_step);
      }
    } else if (rec.outcome < 0.0) {
      h = {};
    }

    // Gate learning: was the learned proposal the right call?
    if (learned_action_) {
      const bool learned_right = trial_correct(rec.light, *learned_action_);
      bg_.train(gate_context(rec.light), learned_right, cfg_.gate_lr);
    }
  }

 private:
  struct Habit {
    TrialAction action = TrialAction::pulled;
    double confidence = 0.0;
  };

  static std::vector<double> one_hot_action(Action a) {
    std::vector<double> v(kActionCount, 0.0);
    v[static_cast<std::size_t>(a)] = 1.0;
    return v;
  }

  static SignalVector gate_context(Light l) {
    SignalVector c(4);
    c[0] = 1.0;
    c[1 + static_cast<std::size_t>(l)] = 1.0;
    return c;
  }

  bool familiar(const SignalVector& onset) const {
    return std::any_of(known_onsets_.begin(), known_onsets_.end(), [&](const SignalVector& v) { return v == onset; });
  }

  TrialAction decide(const Percept& p, const NeedState& need) {
    const ActionProposal innate{Action::pull, ProposalSource::innate, cfg_.innate_pull_confidence};
    ActionProposal learned{Action::noop, ProposalSource::learned, 0.0};
    const Habit& h = habit_[static_cast<std::size_t>(p.light)];
    const bool has_habit = cfg_.preplay && h.confidence > cfg_.amygdala.habit_threshold;
    trial_mode_ = amygdala_classify(p, need, has_habit, cfg_.amygdala);

    if (trial_mode_ == AmygdalaMode::automatic) {
      learned = {h.action == TrialAction::pulled ? Action::pull : Action::noop, ProposalSource::learned, h.confidence};
    } else if (trial_mode_ == AmygdalaMode::deliberate && cfg_.preplay) {
      const SignalVector onset = EventCode::onset(p.light);
      const std::vector<SignalVector> situation{onset};
      PlanResult plan = preplay(EventCode::need(need.hunger), top_, pf_, trial_mode_, loop_, gate_, rng_,
                                cfg_.preplay_options, situation);
      ++preplays_;
      // Novel situations defer to innate behavior: the simulation has nothing to stand on.
      const double familiarity = familiar(onset) ? 1.0 : 0.0;
      if (plan.accepted) {
        learned = {Action::pull, ProposalSource::learned, std::min(1.0, plan.value) * familiarity};
        ground(plan.plan);
      } else if (plan.worst <= cfg_.withhold_value) {
        learned = {Action::noop, ProposalSource::learned, std::min(1.0, -plan.worst) * familiarity};
      }
      trial_plan_ = plan;
      last_plan_ = std::move(plan);
      gate_.enable();
    }

    const Arbitration arb = bg_.arbitrate(innate, learned, gate_context(p.light));
    if (learned.confidence > 0.0)
      learned_action_ = learned.action == Action::pull ? TrialAction::pulled : TrialAction::withheld;
    used_learned_ = arb.chosen.source == ProposalSource::learned;
    return arb.chosen.action == Action::pull ? TrialAction::pulled : TrialAction::withheld;
  }

  // Top-down rendering: each plan entry becomes the motor layer's context in turn.
  void ground(const std::vector<SignalVector>& plan) {
    for (const auto& entry : plan) {
      motor_.set_context(entry);
      context_log_.push_back(entry);
      render_log_.push_back(motor_.peek_distribution());
    }
  }

  HicaAgentConfig cfg_;
  SeededRng rng_;
  Modulator mod_;
  BasalGanglia bg_;
  LoopMemory loop_;
  Layer top_;
  Layer motor_;
  PrefrontalUnit pf_;
  Light light_ = Light::off;
  std::optional<TrialAction> decided_;
  std::vector<SignalVector> episode_;
  std::deque<std::vector<SignalVector>> experience_;
  std::deque<double> outcomes_;
  std::vector<std::vector<SignalVector>> salient_;
  std::vector<SignalVector> known_onsets_;
  std::array<Habit, 3> habit_{};
  std::optional<PlanResult> trial_plan_;
  std::optional<PlanResult> last_plan_;
  AmygdalaMode trial_mode_ = AmygdalaMode::idle;
  bool used_learned_ = false;
  std::optional<TrialAction> learned_action_;
  std::size_t preplays_ = 0;
  std::vector<SignalVector> context_log_;
  std::vector<SignalVector> render_log_;
};

struct Phase2Result {
  std::vector<TrialRecord> trials;
  std::optional<std::size_t> trials_to_criterion;
  std::size_t gated_actions = 0;  // actions attempted while the motor gate was closed
};

// Runs lever trials until the criterion holds or max_trials pass. The light
// schedule depends only on `seed`, so agents compared on one seed face the
// same sequence.
inline Phase2Result skinner_phase2(const Phase2Config& cfg, const InstinctBundle& instinct, Phase2Agent& agent,
                                   std::uint64_t seed, bool stop_at_criterion = true) {
  (void)instinct;  // read-only: phase 2 leaves the instinct bundle untouched
  SkinnerWorld world(cfg.world, derive_seed(seed, 31));
  SeededRng schedule(derive_seed(seed, 32));
  NeedState need;
  need.hunger = cfg.initial_hunger;
  Phase2Result out;
  std::vector<bool> correct;
  for (std::size_t trial = 1; trial <= cfg.max_trials; ++trial) {
    const Light light = schedule.bernoulli(cfg.green_probability) ? Light::green : Light::red;
    world.set_light(light);
    agent.begin_trial(trial, light, need);
    TrialRecord rec;
    rec.index = trial;
    rec.light = light;
    for (std::size_t t = 0; t < cfg.trial_timeout; ++t) {
      const Action a = agent.act(world.percept(), need);
      if (!agent.gate().enabled()) {
        ++out.gated_actions;
        continue;
      }
      const NeedState before = need;
      const Events e = world.step(a);
      need.step(cfg.need);
      need.apply(e, cfg.need);
      const double r = reward_evaluate(before, need, e);
      agent.observe(a, e, r);
      if (e.lever_pulled) {
        rec.action = TrialAction::pulled;
        rec.outcome = r;
        break;
      }
    }
    world.set_light(Light::off);
    rec.correct = trial_correct(light, rec.action);
    agent.end_trial(rec);
    correct.push_back(rec.correct);
    out.trials.push_back(rec);
    for (std::size_t t = 0; t < cfg.inter_trial; ++t) {
      world.step(Action::noop);
      need.step(cfg.need);
      agent.inter_trial_tick();
    }
    if (!out.trials_to_criterion) out.trials_to_criterion = trials_to_criterion(correct);
    if (out.trials_to_criterion && stop_at_criterion) break;
  }
  return out;
}

}  // namespace hica
