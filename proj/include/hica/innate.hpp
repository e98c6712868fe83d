#pragma once

// Hand-written subcortical modules: needs and the reward system, the amygdala
// mode switch, basal-ganglia arbitration, reflexes and a tabular learner used
// to shape instincts before the lever task.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hica/errors.hpp"
#include "hica/signal.hpp"

namespace hica {

enum class Action : int { north = 0, south, east, west, pull, eat, noop };
inline constexpr std::size_t kActionCount = 7;
inline constexpr std::array<Action, 4> kMoves = {Action::north, Action::south, Action::east, Action::west};

inline const char* action_name(Action a) {
  switch (a) {
    case Action::north: return "north";
    case Action::south: return "south";
    case Action::east: return "east";
    case Action::west: return "west";
    case Action::pull: return "pull";
    case Action::eat: return "eat";
    case Action::noop: return "noop";
  }
  return "?";
}

enum class Light : int { off = 0, green, red };

inline const char* light_name(Light l) {
  switch (l) {
    case Light::off: return "off";
    case Light::green: return "green";
    case Light::red: return "red";
  }
  return "?";
}

struct Events {
  bool food_consumed = false;
  bool shock = false;
  bool predator_contact = false;
  bool lever_pulled = false;

  bool any() const { return food_consumed || shock || predator_contact || lever_pulled; }
  friend bool operator==(const Events&, const Events&) = default;
};

struct Offset {
  int dx = 0;  // east positive
  int dy = 0;  // north positive
  int manhattan() const { return std::abs(dx) + std::abs(dy); }
  friend bool operator==(const Offset&, const Offset&) = default;
};

// What the agent senses: agent-relative offsets and the light.
struct Percept {
  std::optional<Offset> food;      // nearest food item
  std::optional<Offset> predator;  // nearest predator
  std::optional<Offset> lever;
  Light light = Light::off;
  bool on_food = false;
  bool lever_adjacent = false;
  // Moves that would leave the agent in place (grid edge or lever), indexed
  // like kMoves.
  std::array<bool, 4> blocked{};
};

struct NeedParams {
  double hunger_rate = 0.002;     // per tick
  double meal_satiation = 0.3;    // hunger removed per food item
  double integrity_recovery = 0.01;
  double shock_damage = 0.2;
  double contact_damage = 0.5;
};

struct NeedState {
  double hunger = 0.5;
  double integrity = 1.0;

  void step(const NeedParams& p) {
    hunger = std::clamp(hunger + p.hunger_rate, 0.0, 1.0);
    integrity = std::clamp(integrity + p.integrity_recovery, 0.0, 1.0);
  }

  void apply(const Events& e, const NeedParams& p) {
    if (e.food_consumed) hunger = std::clamp(hunger - p.meal_satiation, 0.0, 1.0);
    if (e.shock) integrity = std::clamp(integrity - p.shock_damage, 0.0, 1.0);
    if (e.predator_contact) integrity = std::clamp(integrity - p.contact_damage, 0.0, 1.0);
  }

  friend bool operator==(const NeedState&, const NeedState&) = default;
};

// +1 for eating, -1 for a shock or predator contact; simultaneous events add.
// The need levels are accepted for interface symmetry but do not change the sign.
inline double reward_evaluate(const NeedState& /*before*/, const NeedState& /*after*/, const Events& e) {
  double r = 0.0;
  if (e.food_consumed) r += 1.0;
  if (e.shock) r -= 1.0;
  if (e.predator_contact) r -= 1.0;
  return r;
}

enum class AmygdalaMode { fight_flight, automatic, deliberate, idle };

inline const char* mode_name(AmygdalaMode m) {
  switch (m) {
    case AmygdalaMode::fight_flight: return "fight_flight";
    case AmygdalaMode::automatic: return "automatic";
    case AmygdalaMode::deliberate: return "deliberate";
    case AmygdalaMode::idle: return "idle";
  }
  return "?";
}

struct AmygdalaParams {
  int danger_radius = 2;
  double need_threshold = 0.5;
  double habit_threshold = 0.6;
};

inline AmygdalaMode amygdala_classify(const Percept& p, const NeedState& need, bool has_habit,
                                      const AmygdalaParams& params = {}) {
  if (p.predator && p.predator->manhattan() <= params.danger_radius) return AmygdalaMode::fight_flight;
  if (need.hunger > params.need_threshold) return has_habit ? AmygdalaMode::automatic : AmygdalaMode::deliberate;
  return AmygdalaMode::idle;
}

enum class ProposalSource { innate, learned };

struct ActionProposal {
  Action action = Action::noop;
  ProposalSource source = ProposalSource::innate;
  double confidence = 0.0;
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Arbitration {
  ActionProposal chosen;
  double gate = 0.5;
};

// Context-gated choice between an innate and a learned proposal:
// g = sigmoid(u . context); learned wins iff g*c_learned > (1-g)*c_innate.
class BasalGanglia {
 public:
  BasalGanglia() = default;
  explicit BasalGanglia(std::size_t context_dim) : u_(context_dim, 0.0) {}

  std::size_t context_dim() const { return u_.size(); }
  const std::vector<double>& weights() const { return u_; }
  void set_weights(std::vector<double> u) {
    if (u.size() != u_.size()) throw DimensionError("basal ganglia weights", u_.size(), u.size());
    u_ = std::move(u);
  }

  double gate(const SignalVector& context) const {
    require_dim(context, u_.size(), "basal ganglia context");
    return sigmoid(dot(u_, context.values()));
  }

  Arbitration arbitrate(const ActionProposal& innate, const ActionProposal& learned,
                        const SignalVector& context) const {
    const double g = gate(context);
    const bool learned_wins = g * learned.confidence > (1.0 - g) * innate.confidence;
    return {learned_wins ? learned : innate, g};
  }

  // Logistic step toward "the learned proposal was the right one" (1) or not (0).
  double train(const SignalVector& context, bool learned_correct, double lr) {
    const double g = gate(context);
    const double y = learned_correct ? 1.0 : 0.0;
    const double err = g - y;
    for (std::size_t i = 0; i < u_.size(); ++i) u_[i] -= lr * err * context[i];
    return -(y * std::log(std::max(g, 1e-12)) + (1.0 - y) * std::log(std::max(1.0 - g, 1e-12)));
  }

  template <typename Archive>
  void persist(Archive& ar) {
    ar.field(u_);
  }

 private:
  std::vector<double> u_;
};

inline Offset step_offset(Action a) {
  switch (a) {
    case Action::north: return {0, 1};
    case Action::south: return {0, -1};
    case Action::east: return {1, 0};
    case Action::west: return {-1, 0};
    default: return {0, 0};
  }
}

// Move that reduces the distance to `target` most; the longer axis first,
// east/west on a tie.
inline Action step_toward(const Offset& target) {
  if (target.dx == 0 && target.dy == 0) return Action::noop;
  if (std::abs(target.dx) >= std::abs(target.dy) && target.dx != 0)
    return target.dx > 0 ? Action::east : Action::west;
  return target.dy > 0 ? Action::north : Action::south;
}

// Open move that leaves the agent farthest from `threat`. Among equally far
// moves the one opposite the threat's dominant axis wins, then kMoves order.
// Staying put is chosen only when every move is blocked.
inline Action step_away(const Offset& threat, const std::array<bool, 4>& blocked = {}) {
  Action preferred;
  if (std::abs(threat.dy) >= std::abs(threat.dx) && (threat.dx != 0 || threat.dy != 0))
    preferred = threat.dy > 0 ? Action::south : Action::north;
  else
    preferred = threat.dx > 0 ? Action::west : Action::east;
  Action best = Action::noop;
  int best_dist = -1;
  for (std::size_t i = 0; i < kMoves.size(); ++i) {
    if (blocked[i]) continue;
    const Offset d = step_offset(kMoves[i]);
    const int dist = std::abs(threat.dx - d.dx) + std::abs(threat.dy - d.dy);
    if (dist > best_dist || (dist == best_dist && kMoves[i] == preferred)) {
      best = kMoves[i];
      best_dist = dist;
    }
  }
  return best;
}

struct ReflexParams {
  int danger_radius = 2;
  double flee_confidence = 1.0;
  double eat_confidence = 0.9;
  double forage_confidence = 0.6;
  double wander_confidence = 0.2;
};

// Flee a close predator, eat food underfoot, approach the nearest food, or wander.
inline ActionProposal reflex_policy(const Percept& p, SeededRng& rng, const ReflexParams& params = {}) {
  if (p.predator && p.predator->manhattan() <= params.danger_radius)
    return {step_away(*p.predator, p.blocked), ProposalSource::innate, params.flee_confidence};
  if (p.on_food) return {Action::eat, ProposalSource::innate, params.eat_confidence};
  if (p.food) return {step_toward(*p.food), ProposalSource::innate, params.forage_confidence};
  return {kMoves[rng.below(kMoves.size())], ProposalSource::innate, params.wander_confidence};
}

struct QParams {
  double alpha = 0.2;
  double gamma = 0.9;
  double epsilon = 0.1;
};

// Tabular action values; unseen entries read as zero.
class QTable {
 public:
  QTable() = default;
  explicit QTable(const QParams& p) : p_(p) {
    if (!(p.alpha > 0.0 && p.alpha <= 1.0)) throw Error("q-learning: alpha must lie in (0, 1]");
    if (!(p.gamma >= 0.0 && p.gamma < 1.0)) throw Error("q-learning: gamma must lie in [0, 1)");
    if (!(p.epsilon >= 0.0 && p.epsilon <= 1.0)) throw Error("q-learning: epsilon must lie in [0, 1]");
  }

  const QParams& params() const { return p_; }
  void set_epsilon(double e) { p_.epsilon = e; }
  std::size_t size() const { return q_.size(); }

  double value(std::uint64_t s, Action a) const {
    auto it = q_.find(key(s, a));
    return it == q_.end() ? 0.0 : it->second;
  }

  double max_value(std::uint64_t s) const {
    double best = value(s, static_cast<Action>(0));
    for (std::size_t a = 1; a < kActionCount; ++a) best = std::max(best, value(s, static_cast<Action>(a)));
    return best;
  }

  // Greedy action among `allowed`; ties go to the earliest listed.
  Action greedy(std::uint64_t s, std::span<const Action> allowed) const {
    Action best = allowed[0];
    for (Action a : allowed)
      if (value(s, a) > value(s, best)) best = a;
    return best;
  }

  // Q(s,a) += alpha (r + gamma max Q(s',.) - Q(s,a)); no successor means terminal.
  void update(std::uint64_t s, Action a, double r, std::optional<std::uint64_t> next) {
    const double target = r + (next ? p_.gamma * max_value(*next) : 0.0);
    double& q = q_[key(s, a)];
    q += p_.alpha * (target - q);
    if (!std::isfinite(q)) throw DivergenceError("q-table", p_.alpha, "non-finite value");
  }

  template <typename Archive>
  void persist(Archive& ar) {
    ar.field(p_.alpha);
    ar.field(p_.gamma);
    ar.field(p_.epsilon);
    std::vector<std::pair<std::uint64_t, double>> items(q_.begin(), q_.end());
    std::sort(items.begin(), items.end());
    std::uint64_t n = items.size();
    ar.field(n);
    items.resize(n);
    for (auto& [k, v] : items) {
      ar.field(k);
      ar.field(v);
    }
    q_.clear();
    for (auto& [k, v] : items) q_[k] = v;
  }

  friend bool operator==(const QTable& a, const QTable& b) { return a.q_ == b.q_; }

 private:
  static std::uint64_t key(std::uint64_t s, Action a) { return s * kActionCount + static_cast<std::uint64_t>(a); }

  QParams p_;
  std::unordered_map<std::uint64_t, double> q_;
};

// Coarse foraging state: direction of the nearest food, direction of a close
// predator, and whether food is underfoot.
inline std::uint64_t forage_state_key(const Percept& p, int danger_radius) {
  auto dir = [](const std::optional<Offset>& o) -> std::uint64_t {
    if (!o) return 0;
    if (o->dx == 0 && o->dy == 0) return 5;
    return static_cast<std::uint64_t>(step_toward(*o)) + 1;
  };
  const std::uint64_t food = dir(p.food);
  const std::uint64_t pred = (p.predator && p.predator->manhattan() <= danger_radius) ? dir(p.predator) : 0;
  return (food * 6 + pred) * 2 + (p.on_food ? 1 : 0);
}

}  // namespace hica
