#pragma once

// Loop memory over top-level vectors and the two programs that run on it:
// replay (re-train the top autoregressor on a stored episode) and preplay
// (roll the top autoregressor forward from a need vector and score the
// imagined states with the prefrontal reward predictor).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hica/dense.hpp"
#include "hica/errors.hpp"
#include "hica/innate.hpp"
#include "hica/layer.hpp"
#include "hica/neuromod.hpp"
#include "hica/signal.hpp"
#include "hica/unit.hpp"

namespace hica {

// Ring buffer of top-level vectors. seed() pins slot M1 so later records
// wrap over slots M2..Mn only.
class LoopMemory {
 public:
  LoopMemory() = default;
  LoopMemory(std::size_t capacity, std::size_t dim) : slots_(capacity, SignalVector(dim)), dim_(dim) {
    if (capacity == 0) throw Error("loop memory capacity must be positive");
  }

  std::size_t capacity() const { return slots_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t filled() const { return filled_; }
  bool empty() const { return filled_ == 0; }
  bool pinned() const { return pinned_; }

  void clear() {
    filled_ = 0;
    cursor_ = 0;
    pinned_ = false;
  }

  void record(const SignalVector& v) {
    require_dim(v, dim_, "loop memory record");
    const std::size_t first = pinned_ ? 1 : 0;
    if (pinned_ && slots_.size() == 1) throw Error("loop memory of capacity 1 cannot hold states after M1");
    slots_[cursor_] = v;
    cursor_ = cursor_ + 1 == slots_.size() ? first : cursor_ + 1;
    filled_ = std::min(filled_ + 1, slots_.size());
  }

  // Clears the loop and places `need` in M1.
  void seed(const SignalVector& need) {
    clear();
    record(need);
    pinned_ = true;
  }

  // Contents in chronological order, M1 first when pinned.
  std::vector<SignalVector> contents() const {
    std::vector<SignalVector> out;
    out.reserve(filled_);
    if (filled_ < slots_.size()) {
      out.assign(slots_.begin(), slots_.begin() + static_cast<std::ptrdiff_t>(filled_));
      return out;
    }
    const std::size_t first = pinned_ ? 1 : 0;
    if (pinned_) out.push_back(slots_[0]);
    const std::size_t ring = slots_.size() - first;
    for (std::size_t i = 0; i < ring; ++i) out.push_back(slots_[first + (cursor_ - first + i) % ring]);
    return out;
  }

  // The last `w` entries, zero-padded on the left.
  std::vector<SignalVector> tail(std::size_t w) const {
    const auto all = contents();
    std::vector<SignalVector> out(w, SignalVector(dim_));
    const std::size_t n = std::min(w, all.size());
    for (std::size_t i = 0; i < n; ++i) out[w - n + i] = all[all.size() - n + i];
    return out;
  }

  template <typename Archive>
  void persist(Archive& ar) {
    ar.field(slots_, dim_);
    std::uint64_t filled = filled_, cursor = cursor_;
    ar.field(filled);
    ar.field(cursor);
    ar.field(pinned_);
    filled_ = filled;
    cursor_ = cursor;
  }

 private:
  std::vector<SignalVector> slots_;
  std::size_t dim_ = 0;
  std::size_t filled_ = 0;
  std::size_t cursor_ = 0;
  bool pinned_ = false;
};

struct ReplayTrace {
  std::vector<double> pass_loss;  // mean autoregressor loss per pass
};

// Next-step prediction of episode[i] from the entries before it (zero-padded
// to w, zero context) for i = 1..n-1.
inline std::vector<SignalVector> episode_predictions(const Autoregressor& ar, std::span<const SignalVector> episode) {
  const auto& s = ar.shape();
  std::vector<SignalVector> out;
  const SignalVector ctx(s.d_ctx);
  for (std::size_t i = 1; i < episode.size(); ++i) {
    std::vector<SignalVector> hist(s.w, SignalVector(s.d_in));
    const std::size_t n = std::min(s.w, i);
    for (std::size_t j = 0; j < n; ++j) hist[s.w - n + j] = episode[i - n + j];
    out.push_back(ar.predict(hist, ctx));
  }
  return out;
}

// Fraction of transitions whose predicted argmax matches the realized argmax.
inline double episode_accuracy(const Autoregressor& ar, std::span<const SignalVector> episode) {
  if (episode.size() < 2) return 0.0;
  const auto preds = episode_predictions(ar, episode);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (argmax(preds[i].values()) == argmax(episode[i + 1].values())) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

// Trains the top layer's autoregressor on the stored episodes `passes` times.
// The modulator level is raised to 1 at the start of every pass and decays per
// training step; the rate used is base_lr times the current gain.
inline ReplayTrace replay(std::span<const std::vector<SignalVector>> episodes, Layer& top, Modulator& mod,
                          std::size_t passes) {
  if (passes == 0) throw Error("replay: repetitions must be at least 1");
  std::size_t transitions = 0;
  for (const auto& e : episodes) transitions += e.size() > 1 ? e.size() - 1 : 0;
  if (transitions == 0) throw Error("replay: loop memory holds no transitions");
  auto& ar = top.autoregressor();
  const auto& s = ar.shape();
  const SignalVector ctx(s.d_ctx);
  ReplayTrace trace;
  for (std::size_t pass = 0; pass < passes; ++pass) {
    mod.set_level(1.0);
    double total = 0.0;
    for (const auto& episode : episodes) {
      for (std::size_t i = 1; i < episode.size(); ++i) {
        std::vector<SignalVector> hist(s.w, SignalVector(s.d_in));
        const std::size_t n = std::min(s.w, i);
        for (std::size_t j = 0; j < n; ++j) hist[s.w - n + j] = episode[i - n + j];
        total += ar.train(hist, ctx, episode[i], mod.effective_lr(top.config().base_lr));
        mod.decay_step();
      }
    }
    trace.pass_loss.push_back(total / static_cast<double>(transitions));
  }
  // The cached prediction was computed with the old parameters.
  top.set_context(top.context());
  return trace;
}

inline ReplayTrace replay(const LoopMemory& loop, Layer& top, Modulator& mod, std::size_t passes) {
  if (loop.empty()) throw Error("replay: loop memory is empty");
  const std::vector<std::vector<SignalVector>> one{loop.contents()};
  return replay(one, top, mod, passes);
}

// Reward predictor over top-level states: one hidden tanh layer, scalar output.
class PrefrontalUnit : public ParameterBlock {
 public:
  PrefrontalUnit() = default;
  // With `silent_start` the output weights begin at zero, so an evaluator
  // without experience predicts no reward anywhere.
  PrefrontalUnit(std::size_t state_dim, std::size_t hidden, SeededRng& rng, std::string label = "prefrontal",
                 bool silent_start = false)
      : ParameterBlock(std::move(label), 0), net_{state_dim, hidden, 1, false} {
    if (state_dim == 0) throw Error("prefrontal unit: state dim must be positive");
    params_.assign(net_.param_count(), 0.0);
    dense_init(net_, params_, rng);
    if (silent_start && hidden > 0)
      std::fill(params_.begin() + static_cast<std::ptrdiff_t>(hidden * state_dim + hidden), params_.end(), 0.0);
  }

  std::size_t state_dim() const { return net_.in; }

  double evaluate(const SignalVector& state) const {
    require_dim(state, net_.in, label_ + " state");
    DenseCache c;
    dense_forward(net_, params_, state.values(), c);
    return c.output[0];
  }

  double loss(const SignalVector& state, double reward) const {
    const double e = evaluate(state) - reward;
    return e * e;
  }

  std::vector<double> gradient(const SignalVector& state, double reward) const {
    require_dim(state, net_.in, label_ + " state");
    DenseCache c;
    dense_forward(net_, params_, state.values(), c);
    const double d = 2.0 * (c.output[0] - reward);
    std::vector<double> grad(params_.size(), 0.0);
    dense_backward(net_, params_, c, std::span<const double>(&d, 1), grad);
    return grad;
  }

  // One squared-error step toward `reward`; returns the pre-step loss.
  double train(const SignalVector& state, double reward, double lr) {
    if (lr < 0.0) throw Error(label_ + ": negative learning rate");
    if (!std::isfinite(reward)) throw Error(label_ + ": reward must be finite");
    const double l = loss(state, reward);
    check_loss(l, lr);
    if (lr > 0.0) apply(gradient(state, reward), lr);
    return l;
  }

 private:
  DenseShape net_;
};

inline GradCheckResult grad_check(PrefrontalUnit& pf, const SignalVector& state, double reward,
                                  const GradCheckOptions& opt = {}) {
  return grad_check_block<PrefrontalUnit>(
      pf, [&](const PrefrontalUnit& p) { return p.loss(state, reward); }, pf.gradient(state, reward), opt);
}

// Motor output switch. The environment loop consults it before emitting actions.
class MotorGate {
 public:
  bool enabled() const { return enabled_; }
  void enable() { enabled_ = true; }
  void disable() { enabled_ = false; }

 private:
  bool enabled_ = true;
};

struct PreplayOptions {
  std::size_t max_steps = 16;
  double threshold = 0.5;
  std::size_t attempts = 4;  // total rollouts, including the first
  double sigma = 0.05;       // exploration noise, divided by (attempt + 1)
};

struct PlanResult {
  bool accepted = false;
  std::vector<SignalVector> plan;
  double value = -std::numeric_limits<double>::infinity();  // at acceptance, else best seen
  double worst = std::numeric_limits<double>::infinity();   // lowest value seen
  std::size_t steps_used = 0;
  std::size_t attempts_used = 0;
  std::vector<double> values;  // every evaluated value in order
};

// Forward simulation from `need`. Optional `situation` vectors are written
// after M1 before rolling out, so the simulation starts from the current
// sensory state. Leaves the motor gate disabled; the caller re-enables it
// once it has acted on the result.
inline PlanResult preplay(const SignalVector& need, const Layer& top, const PrefrontalUnit& pf, AmygdalaMode mode,
                          LoopMemory& loop, MotorGate& gate, SeededRng& rng, const PreplayOptions& opt = {},
                          std::span<const SignalVector> situation = {}) {
  if (mode != AmygdalaMode::deliberate)
    throw Error(std::string("preplay requires deliberate mode, current mode is ") + mode_name(mode));
  if (opt.max_steps == 0 || opt.attempts == 0) throw Error("preplay: max_steps and attempts must be positive");
  const auto& ar = top.autoregressor();
  const auto& s = ar.shape();
  require_dim(need, s.d_in, "preplay need vector");
  if (loop.dim() != s.d_in) throw DimensionError("preplay loop memory", s.d_in, loop.dim());
  if (pf.state_dim() != s.d_in) throw DimensionError("preplay prefrontal unit", s.d_in, pf.state_dim());

  gate.disable();
  PlanResult result;
  const SignalVector ctx(s.d_ctx);
  for (std::size_t attempt = 0; attempt < opt.attempts; ++attempt) {
    ++result.attempts_used;
    loop.seed(need);
    for (const auto& v : situation) loop.record(v);
    const double sigma = opt.sigma / static_cast<double>(attempt + 1);
    for (std::size_t step = 0; step < opt.max_steps; ++step) {
      SignalVector next = ar.predict(loop.tail(s.w), ctx);
      if (sigma > 0.0)
        for (auto& x : next) x += sigma * rng.normal();
      if (!next.all_finite()) throw DivergenceError(ar.label(), 0.0, "non-finite state during preplay");
      loop.record(next);
      ++result.steps_used;
      const double v = pf.evaluate(next);
      result.values.push_back(v);
      result.worst = std::min(result.worst, v);
      if (v >= opt.threshold) {
        result.accepted = true;
        result.value = v;
        result.plan = loop.contents();
        return result;
      }
      result.value = std::max(result.value, v);
    }
  }
  return result;
}

}  // namespace hica
