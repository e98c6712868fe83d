#pragma once

// The two locally trained function approximators inside every layer:
// the pooler (an autoencoder over k inputs) and the autoregressor.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hica/dense.hpp"
#include "hica/errors.hpp"
#include "hica/signal.hpp"

namespace hica {

inline constexpr double kParameterGuard = 1e6;

// Flat parameter storage with a label used in divergence reports.
class ParameterBlock {
 public:
  ParameterBlock() = default;
  ParameterBlock(std::string label, std::size_t count) : label_(std::move(label)), params_(count, 0.0) {}

  const std::string& label() const { return label_; }
  void set_label(std::string label) { label_ = std::move(label); }

  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  void set_parameters(std::span<const double> p) {
    if (p.size() != params_.size()) throw DimensionError(label_ + " parameters", params_.size(), p.size());
    std::copy(p.begin(), p.end(), params_.begin());
  }

 protected:
  void check_loss(double loss, double lr) const {
    if (!std::isfinite(loss)) throw DivergenceError(label_, lr, "non-finite loss");
  }

  // Plain SGD step with the magnitude guard. lr == 0 leaves parameters untouched.
  void apply(std::span<const double> grad, double lr) {
    if (lr == 0.0) return;
    bool blown = false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      params_[i] -= lr * grad[i];
      if (!(std::abs(params_[i]) <= kParameterGuard)) blown = true;
    }
    if (blown) throw DivergenceError(label_, lr, "parameter magnitude exceeded 1e6");
  }

  std::string label_;
  std::vector<double> params_;
};

struct PoolerShape {
  std::size_t d_in = 0;
  std::size_t k = 0;
  std::size_t d_sum = 0;
  // Hidden width of encoder and decoder; 0 builds a linear autoencoder.
  std::size_t hidden = 0;

  static PoolerShape standard(std::size_t d_in, std::size_t k, std::size_t d_sum) {
    return {d_in, k, d_sum, 2 * d_sum};
  }
};

struct PoolStep {
  double loss = 0.0;  // pre-step
  SignalVector reconstruction;  // pre-step, k*d_in flat
};

// Autoencoder from k stacked d_in inputs to a d_sum summary. The encoder ends
// in tanh so summaries stay in [-1, 1]; the decoder output is linear.
// Loss: squared error summed over each input vector, averaged over the k slots.
class Pooler : public ParameterBlock {
 public:
  Pooler() = default;

  Pooler(const PoolerShape& shape, SeededRng& rng, std::string label = "pooler")
      : ParameterBlock(std::move(label), 0), shape_(shape) {
    if (shape.d_in == 0 || shape.k == 0 || shape.d_sum == 0)
      throw Error("pooler '" + label_ + "': dimensions must be positive");
    if (shape.d_sum >= shape.k * shape.d_in)
      throw Error("pooler '" + label_ + "': summary dim " + std::to_string(shape.d_sum) +
                  " must be smaller than k*d_in = " + std::to_string(shape.k * shape.d_in));
    enc_ = {shape.k * shape.d_in, shape.hidden, shape.d_sum, shape.hidden != 0};
    dec_ = {shape.d_sum, shape.hidden, shape.k * shape.d_in, false};
    params_.assign(enc_.param_count() + dec_.param_count(), 0.0);
    dense_init(enc_, encoder_params(), rng);
    dense_init(dec_, decoder_params(), rng);
  }

  const PoolerShape& shape() const { return shape_; }
  std::size_t window_dim() const { return shape_.k * shape_.d_in; }

  SignalVector flatten(std::span<const SignalVector> window) const {
    if (window.size() != shape_.k) throw DimensionError(label_ + " window length", shape_.k, window.size());
    for (const auto& v : window) require_dim(v, shape_.d_in, label_ + " window entry");
    return concat(window);
  }

  SignalVector encode(std::span<const SignalVector> window) const { return encode_flat(flatten(window)); }

  SignalVector encode_flat(const SignalVector& flat) const {
    require_dim(flat, window_dim(), label_ + " encode");
    DenseCache c;
    dense_forward(enc_, encoder_params(), flat.values(), c);
    return SignalVector(std::move(c.output));
  }

  std::vector<SignalVector> decode(const SignalVector& summary) const {
    return split(decode_flat(summary), shape_.k);
  }

  SignalVector decode_flat(const SignalVector& summary) const {
    require_dim(summary, shape_.d_sum, label_ + " decode");
    DenseCache c;
    dense_forward(dec_, decoder_params(), summary.values(), c);
    return SignalVector(std::move(c.output));
  }

  double loss(std::span<const SignalVector> window) const { return loss_flat(flatten(window)); }

  double loss_flat(const SignalVector& flat) const {
    Pass pass = forward(flat);
    return pass.loss;
  }

  // One gradient step on reconstruction error; returns the pre-step loss and reconstruction.
  PoolStep train(std::span<const SignalVector> window, double lr) { return train_flat(flatten(window), lr); }

  PoolStep train_flat(const SignalVector& flat, double lr) {
    if (lr < 0.0) throw Error(label_ + ": negative learning rate");
    require_dim(flat, window_dim(), label_ + " train");
    Pass pass = forward(flat);
    check_loss(pass.loss, lr);
    if (lr > 0.0) {
      std::vector<double> grad(params_.size(), 0.0);
      backward(pass, grad);
      apply(grad, lr);
    }
    return {pass.loss, SignalVector(std::move(pass.dec.output))};
  }

  std::vector<double> gradient(std::span<const SignalVector> window) const {
    return gradient_flat(flatten(window));
  }

  std::vector<double> gradient_flat(const SignalVector& flat) const {
    Pass pass = forward(flat);
    std::vector<double> grad(params_.size(), 0.0);
    backward(pass, grad);
    return grad;
  }

 private:
  struct Pass {
    DenseCache enc;
    DenseCache dec;
    std::vector<double> target;
    double loss = 0.0;
  };

  std::span<const double> encoder_params() const {
    return std::span<const double>(params_).first(enc_.param_count());
  }
  std::span<double> encoder_params() { return std::span<double>(params_).first(enc_.param_count()); }
  std::span<const double> decoder_params() const {
    return std::span<const double>(params_).subspan(enc_.param_count());
  }
  std::span<double> decoder_params() { return std::span<double>(params_).subspan(enc_.param_count()); }

  Pass forward(const SignalVector& flat) const {
    Pass pass;
    pass.target = flat.raw();
    dense_forward(enc_, encoder_params(), flat.values(), pass.enc);
    dense_forward(dec_, decoder_params(), pass.enc.output, pass.dec);
    double se = 0.0;
    for (std::size_t i = 0; i < pass.target.size(); ++i) {
      const double e = pass.dec.output[i] - pass.target[i];
      se += e * e;
    }
    pass.loss = se / static_cast<double>(shape_.k);
    return pass;
  }

  void backward(const Pass& pass, std::span<double> grad) const {
    const double scale = 2.0 / static_cast<double>(shape_.k);
    std::vector<double> d_out(pass.target.size());
    for (std::size_t i = 0; i < d_out.size(); ++i) d_out[i] = scale * (pass.dec.output[i] - pass.target[i]);
    std::vector<double> d_summary(shape_.d_sum, 0.0);
    dense_backward(dec_, decoder_params(), pass.dec, d_out, grad.subspan(enc_.param_count()), d_summary);
    dense_backward(enc_, encoder_params(), pass.enc, d_summary, grad.first(enc_.param_count()));
  }

  PoolerShape shape_;
  DenseShape enc_;
  DenseShape dec_;
};

enum class OutputKind { token, continuous };

struct ArShape {
  std::size_t d_in = 0;
  std::size_t d_ctx = 0;
  std::size_t w = 4;
  // 0 builds a linear predictor.
  std::size_t hidden = 0;

  static ArShape standard(std::size_t d_in, std::size_t d_ctx, std::size_t w) {
    return {d_in, d_ctx, w, 2 * d_in};
  }
  std::size_t input_dim() const { return w * d_in + d_ctx; }
};

// Next-input predictor over a window of w inputs plus a context vector.
// Token channels produce logits trained with softmax cross-entropy;
// continuous channels are trained on squared error.
class Autoregressor : public ParameterBlock {
 public:
  Autoregressor() = default;

  Autoregressor(const ArShape& shape, OutputKind kind, SeededRng& rng, std::string label = "ar")
      : ParameterBlock(std::move(label), 0), shape_(shape), kind_(kind) {
    if (shape.d_in == 0 || shape.w == 0) throw Error("autoregressor '" + label_ + "': d_in and w must be positive");
    net_ = {shape.input_dim(), shape.hidden, shape.d_in, false};
    params_.assign(net_.param_count(), 0.0);
    dense_init(net_, params_, rng);
  }

  const ArShape& shape() const { return shape_; }
  OutputKind kind() const { return kind_; }

  SignalVector assemble(std::span<const SignalVector> history, const SignalVector& context) const {
    if (history.size() != shape_.w) throw DimensionError(label_ + " history length", shape_.w, history.size());
    for (const auto& h : history) require_dim(h, shape_.d_in, label_ + " history entry");
    require_dim(context, shape_.d_ctx, label_ + " context");
    std::vector<double> x;
    x.reserve(shape_.input_dim());
    for (const auto& h : history) x.insert(x.end(), h.begin(), h.end());
    x.insert(x.end(), context.begin(), context.end());
    return SignalVector(std::move(x));
  }

  SignalVector predict(std::span<const SignalVector> history, const SignalVector& context) const {
    return predict_input(assemble(history, context));
  }

  // Raw outputs for an assembled input (logits for token channels).
  SignalVector predict_input(const SignalVector& input) const {
    require_dim(input, shape_.input_dim(), label_ + " input");
    DenseCache c;
    dense_forward(net_, params_, input.values(), c);
    return SignalVector(std::move(c.output));
  }

  // Normalized view; identity for continuous channels.
  SignalVector normalized(const SignalVector& output) const {
    return kind_ == OutputKind::token ? softmax(output) : output;
  }

  double loss(const SignalVector& input, const SignalVector& target) const {
    require_dim(target, shape_.d_in, label_ + " target");
    return forward(input, target).loss;
  }

  double train(std::span<const SignalVector> history, const SignalVector& context, const SignalVector& target,
               double lr) {
    return train_input(assemble(history, context), target, lr);
  }

  // One gradient step; returns the pre-step loss.
  double train_input(const SignalVector& input, const SignalVector& target, double lr) {
    if (lr < 0.0) throw Error(label_ + ": negative learning rate");
    require_dim(input, shape_.input_dim(), label_ + " input");
    require_dim(target, shape_.d_in, label_ + " target");
    Pass pass = forward(input, target);
    check_loss(pass.loss, lr);
    if (lr > 0.0) {
      std::vector<double> grad(params_.size(), 0.0);
      dense_backward(net_, params_, pass.cache, pass.d_out, grad);
      apply(grad, lr);
    }
    return pass.loss;
  }

  std::vector<double> gradient(const SignalVector& input, const SignalVector& target) const {
    Pass pass = forward(input, target);
    std::vector<double> grad(params_.size(), 0.0);
    dense_backward(net_, params_, pass.cache, pass.d_out, grad);
    return grad;
  }

 private:
  struct Pass {
    DenseCache cache;
    std::vector<double> d_out;
    double loss = 0.0;
  };

  Pass forward(const SignalVector& input, const SignalVector& target) const {
    require_dim(input, shape_.input_dim(), label_ + " input");
    Pass pass;
    dense_forward(net_, params_, input.values(), pass.cache);
    const auto& y = pass.cache.output;
    pass.d_out.assign(y.size(), 0.0);
    if (kind_ == OutputKind::token) {
      const double mx = *std::max_element(y.begin(), y.end());
      double z = 0.0;
      for (double v : y) z += std::exp(v - mx);
      const double log_z = mx + std::log(z);
      double mass = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        mass += target[i];
        if (target[i] != 0.0) pass.loss -= target[i] * (y[i] - log_z);
      }
      for (std::size_t i = 0; i < y.size(); ++i) pass.d_out[i] = std::exp(y[i] - log_z) * mass - target[i];
    } else {
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = y[i] - target[i];
        pass.loss += e * e;
        pass.d_out[i] = 2.0 * e;
      }
    }
    return pass;
  }

  ArShape shape_;
  OutputKind kind_ = OutputKind::continuous;
  DenseShape net_;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Below this magnitude on both sides the absolute difference is reported.
  double absolute_floor = 1e-7;
  // Test hook: perturbs the analytic gradient to prove the check can fail.
  bool corrupt_analytic = false;
};

struct GradCheckResult {
  double max_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t parameters = 0;
};

// Compares an analytic gradient against central finite differences of `loss_at`
// over every parameter of `block`. Parameters are restored afterwards.
template <typename Block>
GradCheckResult grad_check_block(Block& block, const std::function<double(const Block&)>& loss_at,
                                 std::vector<double> analytic, const GradCheckOptions& opt = {}) {
  if (!(opt.epsilon >= 1e-7 && opt.epsilon <= 1e-3)) throw Error("grad_check: epsilon must lie in [1e-7, 1e-3]");
  if (opt.corrupt_analytic)
    for (std::size_t i = 0; i < analytic.size(); ++i) analytic[i] = analytic[i] * 1.01 + 1e-3;
  GradCheckResult result;
  result.parameters = analytic.size();
  auto params = block.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + opt.epsilon;
    const double up = loss_at(block);
    params[i] = saved - opt.epsilon;
    const double down = loss_at(block);
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * opt.epsilon);
    const double a = analytic[i];
    const double scale = std::max(std::abs(a), std::abs(numeric));
    const double err = scale < opt.absolute_floor ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
    if (err > result.max_error) {
      result.max_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

inline GradCheckResult grad_check(Pooler& pooler, std::span<const SignalVector> window,
                                  const GradCheckOptions& opt = {}) {
  const SignalVector flat = pooler.flatten(window);
  return grad_check_block<Pooler>(
      pooler, [&](const Pooler& p) { return p.loss_flat(flat); }, pooler.gradient_flat(flat), opt);
}

inline GradCheckResult grad_check(Autoregressor& ar, std::span<const SignalVector> history,
                                  const SignalVector& context, const SignalVector& target,
                                  const GradCheckOptions& opt = {}) {
  const SignalVector input = ar.assemble(history, context);
  return grad_check_block<Autoregressor>(
      ar, [&](const Autoregressor& a) { return a.loss(input, target); }, ar.gradient(input, target), opt);
}

}  // namespace hica
