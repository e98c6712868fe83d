#pragma once

// Small self-contained learning experiments: memorizing a token sequence with
// and without reward events, and consolidating a single episode by replay.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hica/hippocampus.hpp"
#include "hica/layer.hpp"
#include "hica/neuromod.hpp"
#include "hica/signal.hpp"
#include "hica/unit.hpp"

namespace hica {

// ------------------------------------------------------- sequence memorization

struct SequenceTaskOptions {
  std::size_t alphabet = 8;
  std::size_t length = 20;
  std::size_t w = 4;
  std::size_t hidden = 32;
  double base_lr = 0.1;
  std::size_t max_presentations = 3000;
  ModulatorParams modulator;
};

// Whether the zero-padded w-token history before each position determines
// the token at that position.
inline bool greedy_reproducible(const std::vector<std::size_t>& seq, std::size_t w) {
  std::map<std::vector<std::ptrdiff_t>, std::size_t> next;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    std::vector<std::ptrdiff_t> key(w, -1);
    for (std::size_t j = 0; j < w && j < i; ++j) key[w - 1 - j] = static_cast<std::ptrdiff_t>(seq[i - 1 - j]);
    auto [it, fresh] = next.emplace(key, seq[i]);
    if (!fresh && it->second != seq[i]) return false;
  }
  return true;
}

inline std::vector<std::size_t> random_sequence(std::size_t alphabet, std::size_t length, std::size_t w,
                                                SeededRng& rng) {
  for (;;) {
    std::vector<std::size_t> s(length);
    for (auto& t : s) t = rng.below(alphabet);
    if (greedy_reproducible(s, w)) return s;
  }
}

class SequenceLearner {
 public:
  SequenceLearner(const SequenceTaskOptions& opt, SeededRng& rng)
      : opt_(opt), ar_(ArShape{opt.alphabet, 0, opt.w, opt.hidden}, OutputKind::token, rng, "sequence.ar"),
        mod_(opt.modulator) {}

  const Autoregressor& autoregressor() const { return ar_; }
  const Modulator& modulator() const { return mod_; }

  // One pass over the sequence, starting from an empty history. A reward
  // event, when given, fires as the presentation begins.
  void present(const std::vector<std::size_t>& seq, std::optional<double> reward) {
    if (reward) mod_.reward_event(*reward);
    std::vector<SignalVector> hist(opt_.w, SignalVector(opt_.alphabet));
    const SignalVector ctx;
    for (std::size_t t : seq) {
      const SignalVector target = one_hot(t);
      ar_.train(hist, ctx, target, mod_.effective_lr(opt_.base_lr));
      mod_.decay_step();
      hist.erase(hist.begin());
      hist.push_back(target);
    }
  }

  // Free-running greedy generation of `length` tokens from an empty history.
  std::vector<std::size_t> generate(std::size_t length) const {
    std::vector<SignalVector> hist(opt_.w, SignalVector(opt_.alphabet));
    const SignalVector ctx;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < length; ++i) {
      const std::size_t t = argmax(ar_.predict(hist, ctx).values());
      out.push_back(t);
      hist.erase(hist.begin());
      hist.push_back(one_hot(t));
    }
    return out;
  }

 private:
  SignalVector one_hot(std::size_t t) const {
    SignalVector v(opt_.alphabet);
    v[t] = 1.0;
    return v;
  }

  SequenceTaskOptions opt_;
  Autoregressor ar_;
  Modulator mod_;
};

struct SequenceRun {
  std::vector<std::size_t> sequence;
  std::optional<std::size_t> presentations;  // first count after which generation is exact
};

// The sequence and initial weights depend only on `seed`, so the rewarded and
// unrewarded runs for one seed differ in the modulation alone.
inline SequenceRun sequence_memorization(std::uint64_t seed, bool rewarded, const SequenceTaskOptions& opt = {}) {
  SeededRng seq_rng(derive_seed(seed, 1));
  SeededRng init(derive_seed(seed, 2));
  SequenceRun run;
  run.sequence = random_sequence(opt.alphabet, opt.length, opt.w, seq_rng);
  SequenceLearner learner(opt, init);
  for (std::size_t p = 1; p <= opt.max_presentations; ++p) {
    learner.present(run.sequence, rewarded ? std::optional<double>(1.0) : std::nullopt);
    if (learner.generate(opt.length) == run.sequence) {
      run.presentations = p;
      break;
    }
  }
  return run;
}

// ------------------------------------------------------- replay consolidation

struct ReplayDemoOptions {
  std::size_t dim = 16;
  std::size_t steps = 8;
  std::size_t passes = 20;
  std::size_t w = 4;
  std::size_t hidden = 32;
  double base_lr = 0.1;
  double noise = 0.05;
  ModulatorParams modulator;
};

struct ReplayDemoResult {
  std::vector<SignalVector> episode;
  double pre_accuracy = 0.0;
  double post_accuracy = 0.0;
  ReplayTrace trace;
};

// An episode of `steps` top-level states, each a noisy one-hot code on a
// distinct index.
inline std::vector<SignalVector> random_episode(std::size_t dim, std::size_t steps, double noise, SeededRng& rng) {
  if (steps > dim) throw Error("replay demo: more steps than distinct codes");
  std::vector<std::size_t> idx(dim);
  for (std::size_t i = 0; i < dim; ++i) idx[i] = i;
  for (std::size_t i = dim - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
  std::vector<SignalVector> ep;
  for (std::size_t s = 0; s < steps; ++s) {
    SignalVector v(dim);
    for (auto& x : v) x = noise * rng.normal();
    v[idx[s]] = 1.0;
    ep.push_back(std::move(v));
  }
  return ep;
}

inline Layer replay_demo_layer(const ReplayDemoOptions& opt, SeededRng& rng) {
  LayerConfig cfg;
  cfg.d_in = opt.dim;
  cfg.d_sum = 4;
  cfg.d_ctx = 4;
  cfg.k = 2;
  cfg.w = opt.w;
  cfg.base_lr = opt.base_lr;
  cfg.ar_hidden = opt.hidden;
  cfg.pool_hidden = 8;
  return Layer(cfg, rng, "top");
}

inline ReplayDemoResult replay_demo(std::uint64_t seed, const ReplayDemoOptions& opt = {}) {
  SeededRng ep_rng(derive_seed(seed, 1));
  SeededRng init(derive_seed(seed, 2));
  ReplayDemoResult r;
  r.episode = random_episode(opt.dim, opt.steps, opt.noise, ep_rng);
  Layer top = replay_demo_layer(opt, init);
  LoopMemory loop(opt.steps, opt.dim);
  for (const auto& v : r.episode) loop.record(v);
  Modulator mod(opt.modulator);
  r.pre_accuracy = episode_accuracy(top.autoregressor(), r.episode);
  r.trace = replay(loop, top, mod, opt.passes);
  r.post_accuracy = episode_accuracy(top.autoregressor(), r.episode);
  return r;
}

// ------------------------------------------------------- gradient checks

struct GradCheckEntry {
  std::string unit;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  GradCheckResult result;
};

struct GradCheckSuite {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;  // over entries at the reference epsilon
  std::string worst_unit;
};

// Finite-difference checks for every unit type (pooler, token and continuous
// autoregressors, prefrontal unit) over `seeds` seeds and each epsilon in
// `epsilons`; the first epsilon is the reference used for `worst`.
inline GradCheckSuite gradcheck_suite(std::size_t seeds, const std::vector<double>& epsilons,
                                      bool corrupt = false) {
  if (epsilons.empty()) throw Error("gradcheck: at least one epsilon is required");
  GradCheckSuite suite;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    SeededRng rng(derive_seed(seed, 77));
    auto gaussian = [&](std::size_t dim) {
      SignalVector v(dim);
      for (auto& x : v) x = rng.normal();
      return v;
    };
    auto token = [&](std::size_t dim) {
      SignalVector v(dim);
      v[rng.below(dim)] = 1.0;
      return v;
    };
    Pooler pooler(PoolerShape::standard(5, 3, 4), rng, "pooler");
    std::vector<SignalVector> window;
    for (int i = 0; i < 3; ++i) window.push_back(gaussian(5));
    Autoregressor tok(ArShape::standard(6, 3, 3), OutputKind::token, rng, "ar.token");
    Autoregressor cont(ArShape::standard(4, 3, 3), OutputKind::continuous, rng, "ar.continuous");
    std::vector<SignalVector> tok_hist, cont_hist;
    for (int i = 0; i < 3; ++i) {
      tok_hist.push_back(token(6));
      cont_hist.push_back(gaussian(4));
    }
    const SignalVector ctx = gaussian(3);
    const SignalVector tok_target = token(6);
    const SignalVector cont_target = gaussian(4);
    PrefrontalUnit pf(6, 8, rng);
    const SignalVector state = gaussian(6);
    const double reward = rng.uniform() * 2.0 - 1.0;
    for (double eps : epsilons) {
      GradCheckOptions opt;
      opt.epsilon = eps;
      opt.corrupt_analytic = corrupt;
      suite.entries.push_back({"pooler", seed, eps, grad_check(pooler, window, opt)});
      suite.entries.push_back({"ar.token", seed, eps, grad_check(tok, tok_hist, ctx, tok_target, opt)});
      suite.entries.push_back({"ar.continuous", seed, eps, grad_check(cont, cont_hist, ctx, cont_target, opt)});
      suite.entries.push_back({"prefrontal", seed, eps, grad_check(pf, state, reward, opt)});
    }
  }
  for (const auto& e : suite.entries)
    if (e.epsilon == epsilons.front() && e.result.max_error >= suite.worst) {
      suite.worst = e.result.max_error;
      suite.worst_unit = e.unit;
    }
  return suite;
}

}  // namespace hica
