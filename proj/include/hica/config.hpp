#pragma once

// Run configuration loaded from a single JSON document. Every field that has
// no documented default is required, unknown keys are rejected, and every
// error names the offending field by its JSON path (e.g. graph.nodes[1].k).
// configs/default.json is the annotated template.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hica/errors.hpp"
#include "hica/experiments.hpp"
#include "hica/graph.hpp"
#include "hica/layer.hpp"
#include "hica/neuromod.hpp"
#include "hica/skinner.hpp"

namespace hica {

using Json = nlohmann::json;

struct NodeSpec {
  std::string label;
  std::optional<std::size_t> d_in;  // unset means "alphabet": sized from the corpus
  LayerConfig layer;
};

struct GraphSpec {
  std::vector<NodeSpec> nodes;
  std::vector<std::pair<std::string, std::string>> edges;  // lower, higher
};

struct CharLmConfig {
  std::string corpus;
  std::uint64_t ticks = 0;
  std::uint64_t log_interval = 1000;
  double cosine_threshold = 0.9;
  bool wrap = true;
  std::size_t workers = 1;
  std::size_t mailbox = 64;
};

struct SkinnerConfig {
  std::size_t seeds = 10;
  Phase1Config phase1;
  Phase2Config phase2;
  HicaAgentConfig agent;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  ModulatorParams modulator;
  std::optional<GraphSpec> graph;
  std::optional<CharLmConfig> charlm;
  std::optional<SkinnerConfig> skinner;
  std::optional<ReplayDemoOptions> replay_demo;
};

namespace detail {

class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where(), "expected an object");
  }

  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(sub(it.key()), "unknown field");
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(sub(key), "missing required field");
    return j_.at(key);
  }

  double real(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number()) throw ConfigError(sub(key), "expected a number");
    return v.get<double>();
  }

  double positive(const std::string& key) {
    const double v = real(key);
    if (!(v > 0.0)) throw ConfigError(sub(key), "must be positive");
    return v;
  }

  double non_negative(const std::string& key) {
    const double v = real(key);
    if (!(v >= 0.0)) throw ConfigError(sub(key), "must be non-negative");
    return v;
  }

  double unit(const std::string& key) {
    const double v = real(key);
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(sub(key), "must lie in [0, 1]");
    return v;
  }

  std::uint64_t count(const std::string& key, std::uint64_t min = 0) {
    const Json& v = raw(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(sub(key), "expected a non-negative integer");
    const auto n = v.get<std::uint64_t>();
    if (n < min) throw ConfigError(sub(key), "must be at least " + std::to_string(min));
    return n;
  }

  int integer(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(sub(key), "expected an integer");
    return v.get<int>();
  }

  bool flag(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(sub(key), "expected true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_string()) throw ConfigError(sub(key), "expected a string");
    return v.get<std::string>();
  }

  std::optional<std::uint64_t> optional_count(const std::string& key, std::uint64_t min = 0) {
    if (!has(key)) {
      seen_.insert(key);
      return std::nullopt;
    }
    return count(key, min);
  }

  std::optional<double> optional_positive(const std::string& key) {
    if (!has(key)) {
      seen_.insert(key);
      return std::nullopt;
    }
    return positive(key);
  }

  const std::string& path() const { return path_; }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline ModulatorParams parse_modulator(const Json& j, const std::string& path) {
  Fields f(j, path);
  ModulatorParams p;
  p.tau_ticks = f.positive("tau_ticks");
  p.g_min = f.positive("g_min");
  if (p.g_min > 1.0) throw ConfigError(f.sub("g_min"), "must lie in (0, 1]");
  p.eta = f.positive("eta");
  p.ticks_per_second = f.positive("ticks_per_second");
  return p;
}

inline NodeSpec parse_node(const Json& j, const std::string& path) {
  Fields f(j, path);
  NodeSpec n;
  n.label = f.text("label");
  if (n.label.empty()) throw ConfigError(f.sub("label"), "must not be empty");
  const Json& d_in = f.raw("d_in");
  if (d_in.is_string()) {
    if (d_in.get<std::string>() != "alphabet")
      throw ConfigError(f.sub("d_in"), "node '" + n.label + "': expected a positive integer or \"alphabet\"");
  } else {
    n.d_in = f.count("d_in", 1);
  }
  LayerConfig& c = n.layer;
  c.d_sum = f.count("d_sum", 1);
  c.d_ctx = f.count("d_ctx", 0);
  c.k = f.count("k", 2);
  c.w = f.count("w", 1);
  c.base_lr = f.non_negative("base_lr");
  c.pool_lr = f.optional_positive("pool_lr");
  const std::string kind = f.text("kind");
  if (kind == "token")
    c.kind = OutputKind::token;
  else if (kind == "continuous")
    c.kind = OutputKind::continuous;
  else
    throw ConfigError(f.sub("kind"), "node '" + n.label + "': expected \"token\" or \"continuous\"");
  if (auto h = f.optional_count("ar_hidden")) c.ar_hidden = *h;
  if (auto h = f.optional_count("pool_hidden")) c.pool_hidden = *h;
  if (n.d_in) c.d_in = *n.d_in;
  return n;
}

inline GraphSpec parse_graph(const Json& j, const std::string& path) {
  Fields f(j, path);
  GraphSpec g;
  const Json& nodes = f.raw("nodes");
  if (!nodes.is_array() || nodes.empty()) throw ConfigError(f.sub("nodes"), "expected a non-empty array");
  std::set<std::string> labels;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string p = f.sub("nodes") + "[" + std::to_string(i) + "]";
    g.nodes.push_back(parse_node(nodes[i], p));
    if (!labels.insert(g.nodes.back().label).second)
      throw ConfigError(p + ".label", "duplicate node label '" + g.nodes.back().label + "'");
  }
  const Json& edges = f.raw("edges");
  if (!edges.is_array()) throw ConfigError(f.sub("edges"), "expected an array of [lower, higher] pairs");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string p = f.sub("edges") + "[" + std::to_string(i) + "]";
    const Json& e = edges[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string())
      throw ConfigError(p, "expected [lower, higher] label pair");
    for (int s = 0; s < 2; ++s)
      if (!labels.count(e[s].get<std::string>()))
        throw ConfigError(p, "unknown node '" + e[s].get<std::string>() + "'");
    g.edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
  }
  return g;
}

inline CharLmConfig parse_charlm(const Json& j, const std::string& path) {
  Fields f(j, path);
  CharLmConfig c;
  c.corpus = f.text("corpus");
  c.ticks = f.count("ticks");
  c.log_interval = f.count("log_interval", 1);
  c.cosine_threshold = f.real("cosine_threshold");
  if (!(c.cosine_threshold >= -1.0 && c.cosine_threshold <= 1.0))
    throw ConfigError(f.sub("cosine_threshold"), "must lie in [-1, 1]");
  c.wrap = f.flag("wrap");
  c.workers = f.count("workers", 1);
  c.mailbox = f.count("mailbox", 1);
  return c;
}

inline WorldConfig parse_world(const Json& j, const std::string& path, bool lever) {
  Fields f(j, path);
  WorldConfig w;
  w.width = f.integer("width");
  w.height = f.integer("height");
  if (w.width < 3) throw ConfigError(f.sub("width"), "must be at least 3");
  if (w.height < 3) throw ConfigError(f.sub("height"), "must be at least 3");
  w.predators = static_cast<int>(f.count("predators"));
  w.food = static_cast<int>(f.count("food"));
  w.lever = lever;
  w.lever_x = f.integer("lever_x");
  w.lever_y = f.integer("lever_y");
  if (w.lever_x < 0 || w.lever_x >= w.width) throw ConfigError(f.sub("lever_x"), "outside the grid");
  if (w.lever_y < 0 || w.lever_y >= w.height) throw ConfigError(f.sub("lever_y"), "outside the grid");
  w.predator_respawn_distance = static_cast<int>(f.count("predator_respawn_distance"));
  return w;
}

inline SkinnerConfig parse_skinner(const Json& j, const std::string& path) {
  Fields f(j, path);
  SkinnerConfig s;
  s.seeds = f.count("seeds", 1);
  {
    Fields p(f.raw("phase1"), f.sub("phase1"));
    s.phase1.world = parse_world(p.raw("world"), p.sub("world"), false);
    s.phase1.episodes = p.count("episodes");
    s.phase1.episode_ticks = p.count("episode_ticks", 1);
    s.phase1.epsilon_start = p.unit("epsilon_start");
    s.phase1.epsilon_end = p.unit("epsilon_end");
    s.phase1.q.alpha = p.positive("alpha");
    s.phase1.q.gamma = p.unit("gamma");
    if (s.phase1.q.alpha > 1.0) throw ConfigError(p.sub("alpha"), "must lie in (0, 1]");
    if (s.phase1.q.gamma >= 1.0) throw ConfigError(p.sub("gamma"), "must lie in [0, 1)");
    s.phase1.reflex.danger_radius = static_cast<int>(p.count("danger_radius"));
    s.phase1.need.hunger_rate = p.unit("hunger_rate");
    s.phase1.need.meal_satiation = p.unit("meal_satiation");
  }
  {
    Fields p(f.raw("phase2"), f.sub("phase2"));
    s.phase2.world = parse_world(p.raw("world"), p.sub("world"), true);
    s.phase2.max_trials = p.count("max_trials", 1);
    s.phase2.trial_timeout = p.count("trial_timeout", 1);
    s.phase2.inter_trial = p.count("inter_trial");
    s.phase2.initial_hunger = p.unit("initial_hunger");
    s.phase2.green_probability = p.unit("green_probability");
    s.phase2.need.hunger_rate = p.unit("hunger_rate");
    s.phase2.need.meal_satiation = p.unit("meal_satiation");
  }
  {
    Fields a(f.raw("agent"), f.sub("agent"));
    HicaAgentConfig& c = s.agent;
    c.top_w = a.count("top_w", 1);
    c.top_hidden = a.count("top_hidden", 1);
    c.top_lr = a.positive("top_lr");
    c.motor_lr = a.positive("motor_lr");
    c.pf_hidden = a.count("pf_hidden", 1);
    c.pf_lr = a.positive("pf_lr");
    c.pf_passes = a.count("pf_passes", 1);
    c.loop_capacity = a.count("loop_capacity", 2);
    c.replay_passes = a.count("replay_passes", 1);
    c.replay_episodes = a.count("replay_episodes", 1);
    c.preplay_options.max_steps = a.count("preplay_max_steps", 1);
    c.preplay_options.threshold = a.real("preplay_threshold");
    c.preplay_options.attempts = a.count("preplay_attempts", 1);
    c.preplay_options.sigma = a.non_negative("preplay_sigma");
    c.withhold_value = a.real("withhold_value");
    c.innate_pull_confidence = a.unit("innate_pull_confidence");
    c.habit_step = a.unit("habit_step");
    c.gate_lr = a.non_negative("gate_lr");
    c.amygdala.need_threshold = a.unit("need_threshold");
    c.amygdala.habit_threshold = a.unit("habit_threshold");
  }
  return s;
}

inline ReplayDemoOptions parse_replay_demo(const Json& j, const std::string& path) {
  Fields f(j, path);
  ReplayDemoOptions o;
  o.dim = f.count("dim", 1);
  o.steps = f.count("steps", 2);
  if (o.steps > o.dim) throw ConfigError(f.sub("steps"), "must not exceed dim");
  o.passes = f.count("passes", 1);
  o.w = f.count("w", 1);
  o.hidden = f.count("hidden", 1);
  o.base_lr = f.positive("base_lr");
  o.noise = f.non_negative("noise");
  return o;
}

}  // namespace detail

inline RunConfig parse_config(const Json& j) {
  detail::Fields f(j, "");
  RunConfig c;
  c.seed = f.count("seed");
  c.out_dir = f.text("out_dir");
  c.modulator = detail::parse_modulator(f.raw("modulator"), "modulator");
  if (f.has("graph")) c.graph = detail::parse_graph(f.raw("graph"), "graph");
  if (f.has("charlm")) c.charlm = detail::parse_charlm(f.raw("charlm"), "charlm");
  if (f.has("skinner")) c.skinner = detail::parse_skinner(f.raw("skinner"), "skinner");
  if (f.has("replay_demo")) c.replay_demo = detail::parse_replay_demo(f.raw("replay_demo"), "replay_demo");
  if (c.charlm && !c.graph) throw ConfigError("graph", "missing required section (needed by charlm)");
  if (c.skinner) c.skinner->agent.modulator = c.modulator;
  if (c.replay_demo) c.replay_demo->modulator = c.modulator;
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

// Builds and validates the graph; "alphabet" nodes take `alphabet` as d_in.
inline HetGraph build_graph(const GraphSpec& spec, std::uint64_t seed, std::optional<std::size_t> alphabet) {
  HetGraph g(derive_seed(seed, 100));
  SeededRng init(derive_seed(seed, 101));
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const NodeSpec& n = spec.nodes[i];
    LayerConfig cfg = n.layer;
    if (!n.d_in) {
      if (!alphabet)
        throw ConfigError("graph.nodes[" + std::to_string(i) + "].d_in",
                          "node '" + n.label + "': \"alphabet\" needs a corpus");
      cfg.d_in = *alphabet;
    }
    g.add_node(Layer(cfg, init, n.label), n.label);
  }
  for (const auto& [lo, hi] : spec.edges) g.add_edge(g.id(lo), g.id(hi));
  g.validate();
  return g;
}

}  // namespace hica
