#pragma once

// A one-hidden-layer perceptron evaluated over a flat parameter span.
// Layout: W1[hidden][in], b1[hidden], W2[out][hidden], b2[out].
// hidden == 0 means a single affine map W[out][in], b[out].

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hica/signal.hpp"

namespace hica {

struct DenseShape {
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::size_t out = 0;
  bool tanh_out = false;

  std::size_t param_count() const {
    if (hidden == 0) return out * in + out;
    return hidden * in + hidden + out * hidden + out;
  }
};

struct DenseCache {
  std::vector<double> input;
  std::vector<double> hidden;  // post-tanh
  std::vector<double> output;  // post-activation
};

// Forward pass. `cache` receives the activations needed by backward().
inline void dense_forward(const DenseShape& s, std::span<const double> p, std::span<const double> x,
                          DenseCache& cache) {
  cache.input.assign(x.begin(), x.end());
  cache.output.assign(s.out, 0.0);
  if (s.hidden == 0) {
    const double* w = p.data();
    const double* b = w + s.out * s.in;
    for (std::size_t o = 0; o < s.out; ++o) {
      double acc = b[o];
      const double* row = w + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * x[i];
      cache.output[o] = s.tanh_out ? std::tanh(acc) : acc;
    }
    cache.hidden.clear();
    return;
  }
  const double* w1 = p.data();
  const double* b1 = w1 + s.hidden * s.in;
  const double* w2 = b1 + s.hidden;
  const double* b2 = w2 + s.out * s.hidden;
  cache.hidden.assign(s.hidden, 0.0);
  for (std::size_t h = 0; h < s.hidden; ++h) {
    double acc = b1[h];
    const double* row = w1 + h * s.in;
    for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * x[i];
    cache.hidden[h] = std::tanh(acc);
  }
  for (std::size_t o = 0; o < s.out; ++o) {
    double acc = b2[o];
    const double* row = w2 + o * s.hidden;
    for (std::size_t h = 0; h < s.hidden; ++h) acc += row[h] * cache.hidden[h];
    cache.output[o] = s.tanh_out ? std::tanh(acc) : acc;
  }
}

// Backward pass given dL/d(output). Gradients are accumulated into `grad`;
// `dx`, when non-empty, receives dL/d(input).
inline void dense_backward(const DenseShape& s, std::span<const double> p, const DenseCache& cache,
                           std::span<const double> d_out, std::span<double> grad,
                           std::span<double> dx = {}) {
  std::vector<double> d_pre(d_out.begin(), d_out.end());
  if (s.tanh_out)
    for (std::size_t o = 0; o < s.out; ++o) d_pre[o] *= 1.0 - cache.output[o] * cache.output[o];

  if (!dx.empty())
    for (auto& v : dx) v = 0.0;

  if (s.hidden == 0) {
    const double* w = p.data();
    double* gw = grad.data();
    double* gb = gw + s.out * s.in;
    for (std::size_t o = 0; o < s.out; ++o) {
      const double g = d_pre[o];
      gb[o] += g;
      if (g == 0.0) continue;
      double* grow = gw + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) grow[i] += g * cache.input[i];
      if (!dx.empty()) {
        const double* row = w + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) dx[i] += g * row[i];
      }
    }
    return;
  }

  const double* w1 = p.data();
  const double* w2 = w1 + s.hidden * s.in + s.hidden;
  double* gw1 = grad.data();
  double* gb1 = gw1 + s.hidden * s.in;
  double* gw2 = gb1 + s.hidden;
  double* gb2 = gw2 + s.out * s.hidden;

  std::vector<double> d_hidden(s.hidden, 0.0);
  for (std::size_t o = 0; o < s.out; ++o) {
    const double g = d_pre[o];
    gb2[o] += g;
    if (g == 0.0) continue;
    double* grow = gw2 + o * s.hidden;
    const double* row = w2 + o * s.hidden;
    for (std::size_t h = 0; h < s.hidden; ++h) {
      grow[h] += g * cache.hidden[h];
      d_hidden[h] += g * row[h];
    }
  }
  for (std::size_t h = 0; h < s.hidden; ++h) {
    const double g = d_hidden[h] * (1.0 - cache.hidden[h] * cache.hidden[h]);
    gb1[h] += g;
    if (g == 0.0) continue;
    double* grow = gw1 + h * s.in;
    for (std::size_t i = 0; i < s.in; ++i) grow[i] += g * cache.input[i];
    if (!dx.empty()) {
      const double* row = w1 + h * s.in;
      for (std::size_t i = 0; i < s.in; ++i) dx[i] += g * row[i];
    }
  }
}

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
inline void dense_init(const DenseShape& s, std::span<double> p, SeededRng& rng) {
  auto fill = [&](double* w, std::size_t rows, std::size_t fan_in) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < rows * fan_in; ++i) w[i] = rng.uniform(-scale, scale);
  };
  for (auto& v : p) v = 0.0;
  if (s.hidden == 0) {
    fill(p.data(), s.out, s.in);
    return;
  }
  fill(p.data(), s.hidden, s.in);
  fill(p.data() + s.hidden * s.in + s.hidden, s.out, s.hidden);
}

}  // namespace hica
