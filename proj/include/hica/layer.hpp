#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "hica/signal.hpp"
#include "hica/unit.hpp"

namespace hica {

struct LayerConfig {
  std::size_t d_in = 0;
  std::size_t d_sum = 64;
  std::size_t d_ctx = 64;
  std::size_t k = 4;
  std::size_t w = 4;
  double base_lr = 0.05;
  // Pooler learning rate; defaults to base_lr.
  std::optional<double> pool_lr;
  OutputKind kind = OutputKind::continuous;
  // Hidden widths; default 2*d_in for the autoregressor and 2*d_sum for the pooler.
  std::optional<std::size_t> ar_hidden;
  std::optional<std::size_t> pool_hidden;

  double pooler_lr() const { return pool_lr.value_or(base_lr); }
};

struct FeedResult {
  SignalVector pre_prediction;  // prediction standing before this input arrived
  double ar_loss = 0.0;
  double effective_lr = 0.0;
  std::optional<SignalVector> summary;
  // Present when the buffer filled: flat window and its pre-update reconstruction.
  std::optional<SignalVector> window;
  std::optional<SignalVector> reconstruction;
  double pool_loss = 0.0;
};

// One cortical-column analog. feed() trains the autoregressor against the
// realized input, shifts it into the history, predicts the next input and,
// every k inputs, trains the pooler on the buffer and emits its summary.
class Layer {
 public:
  Layer() = default;

  Layer(const LayerConfig& cfg, SeededRng& rng, const std::string& label = "layer") : cfg_(cfg), label_(label) {
    if (cfg.d_in == 0) throw Error("layer '" + label + "': d_in must be positive");
    if (cfg.k == 0) throw Error("layer '" + label + "': k must be positive");
    if (cfg.w == 0) throw Error("layer '" + label + "': w must be positive");
    if (cfg.base_lr < 0.0) throw Error("layer '" + label + "': base_lr must be non-negative");
    ArShape as{cfg.d_in, cfg.d_ctx, cfg.w, cfg.ar_hidden.value_or(2 * cfg.d_in)};
    ar_ = Autoregressor(as, cfg.kind, rng, label + ".ar");
    PoolerShape ps{cfg.d_in, cfg.k, cfg.d_sum, cfg.pool_hidden.value_or(2 * cfg.d_sum)};
    pooler_ = Pooler(ps, rng, label + ".pooler");
    history_.assign(cfg.w, SignalVector(cfg.d_in));
    context_ = SignalVector(cfg.d_ctx);
    refresh_prediction();
  }

  const LayerConfig& config() const { return cfg_; }
  const std::string& label() const { return label_; }

  FeedResult feed(const SignalVector& x, double gain = 1.0) {
    require_dim(x, cfg_.d_in, label_ + " feed");
    FeedResult r;
    r.pre_prediction = last_prediction_;
    r.effective_lr = cfg_.base_lr * gain;
    r.ar_loss = ar_.train_input(last_input_, x, r.effective_lr);

    history_.pop_front();
    history_.push_back(x);
    input_buffer_.push_back(x);
    ++ticks_seen_;
    refresh_prediction();

    if (input_buffer_.size() == cfg_.k) {
      const SignalVector flat = concat(input_buffer_);
      PoolStep step = pooler_.train_flat(flat, cfg_.pooler_lr() * gain);
      r.pool_loss = step.loss;
      r.reconstruction = std::move(step.reconstruction);
      r.summary = pooler_.encode_flat(flat);
      r.window = flat;
      input_buffer_.clear();
      ++summaries_emitted_;
    }
    return r;
  }

  void set_context(const SignalVector& c) {
    require_dim(c, cfg_.d_ctx, label_ + " context");
    context_ = c;
    refresh_prediction();
  }

  const SignalVector& peek_prediction() const { return last_prediction_; }

  // Softmax view of the current prediction for token channels.
  SignalVector peek_distribution() const { return ar_.normalized(last_prediction_); }

  // Prediction from the current history under an arbitrary context; no side effects.
  SignalVector predict_with_context(const SignalVector& c) const {
    return ar_.predict(std::vector<SignalVector>(history_.begin(), history_.end()), c);
  }

  const SignalVector& context() const { return context_; }
  std::vector<SignalVector> history() const { return {history_.begin(), history_.end()}; }
  const std::vector<SignalVector>& input_buffer() const { return input_buffer_; }
  std::uint64_t ticks_seen() const { return ticks_seen_; }
  std::uint64_t summaries_emitted() const { return summaries_emitted_; }

  Autoregressor& autoregressor() { return ar_; }
  const Autoregressor& autoregressor() const { return ar_; }
  Pooler& pooler() { return pooler_; }
  const Pooler& pooler() const { return pooler_; }

  void set_base_lr(double lr) { cfg_.base_lr = lr; cfg_.pool_lr = lr; }

  template <typename Archive>
  void persist(Archive& ar) {
    ar.field(ar_.parameters());
    ar.field(pooler_.parameters());
    ar.field(input_buffer_, cfg_.d_in);
    ar.field(history_, cfg_.d_in);
    ar.field(context_);
    ar.field(last_input_);
    ar.field(last_prediction_);
    ar.field(ticks_seen_);
    ar.field(summaries_emitted_);
    ar.field(cfg_.base_lr);
    double plr = cfg_.pooler_lr();
    ar.field(plr);
    cfg_.pool_lr = plr;
  }

 private:
  void refresh_prediction() {
    last_input_ = ar_.assemble(std::vector<SignalVector>(history_.begin(), history_.end()), context_);
    last_prediction_ = ar_.predict_input(last_input_);
  }

  LayerConfig cfg_;
  std::string label_;
  Autoregressor ar_;
  Pooler pooler_;
  std::vector<SignalVector> input_buffer_;
  std::deque<SignalVector> history_;
  SignalVector context_;
  SignalVector last_input_;
  SignalVector last_prediction_;
  std::uint64_t ticks_seen_ = 0;
  std::uint64_t summaries_emitted_ = 0;
};

}  // namespace hica
