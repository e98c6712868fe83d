#pragma once

// Numeric primitives shared by every module: the SignalVector message type,
// the character codec and the seeded random source.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hica/errors.hpp"

namespace hica {

class SignalVector {
 public:
  SignalVector() = default;
  explicit SignalVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  SignalVector(std::initializer_list<double> init) : values_(init) {}
  explicit SignalVector(std::vector<double> values) : values_(std::move(values)) {}
  explicit SignalVector(std::span<const double> values) : values_(values.begin(), values.end()) {}

  std::size_t dim() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<double>& raw() const { return values_; }

  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }
  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  friend bool operator==(const SignalVector&, const SignalVector&) = default;

 private:
  std::vector<double> values_;
};

inline void require_dim(const SignalVector& v, std::size_t dim, const std::string& where) {
  if (v.dim() != dim) throw DimensionError(where, dim, v.dim());
}

inline SignalVector concat(std::span<const SignalVector> parts) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.dim();
  std::vector<double> out;
  out.reserve(total);
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return SignalVector(std::move(out));
}

inline std::vector<SignalVector> split(const SignalVector& v, std::size_t parts) {
  const std::size_t d = v.dim() / parts;
  std::vector<SignalVector> out;
  out.reserve(parts);
  for (std::size_t i = 0; i < parts; ++i)
    out.emplace_back(std::span<const double>(v.values().subspan(i * d, d)));
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Cosine similarity; zero when either side has zero norm.
inline double cosine(const SignalVector& a, const SignalVector& b) {
  const double na = norm(a.values());
  const double nb = norm(b.values());
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a.values(), b.values()) / (na * nb);
}

// Index of the maximum value; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline SignalVector softmax(const SignalVector& logits) {
  SignalVector out(logits.dim());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.dim(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

// Fixed byte alphabet; indices follow code-point (unsigned byte) order.
class TokenCodec {
 public:
  TokenCodec() = default;

  explicit TokenCodec(std::string_view alphabet) {
    std::vector<unsigned char> chars(alphabet.begin(), alphabet.end());
    std::sort(chars.begin(), chars.end());
    chars.erase(std::unique(chars.begin(), chars.end()), chars.end());
    alphabet_.assign(chars.begin(), chars.end());
    index_.fill(-1);
    for (std::size_t i = 0; i < alphabet_.size(); ++i)
      index_[static_cast<unsigned char>(alphabet_[i])] = static_cast<int>(i);
  }

  static TokenCodec from_corpus(std::string_view corpus) { return TokenCodec(corpus); }

  std::size_t size() const { return alphabet_.size(); }
  const std::string& alphabet() const { return alphabet_; }

  bool contains(char c) const { return index_[static_cast<unsigned char>(c)] >= 0; }

  std::size_t index_of(char c) const {
    const int i = index_[static_cast<unsigned char>(c)];
    if (i < 0) throw UnknownTokenError(c);
    return static_cast<std::size_t>(i);
  }

  char at(std::size_t i) const { return alphabet_.at(i); }

  SignalVector one_hot(char c) const {
    SignalVector v(size());
    v[index_of(c)] = 1.0;
    return v;
  }

  char argmax_decode(const SignalVector& v) const {
    require_dim(v, size(), "argmax_decode");
    return alphabet_[argmax(v.values())];
  }

 private:
  std::string alphabet_;
  std::array<int, 256> index_{};
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Child seed for worker/module `index` of a parent stream.
inline std::uint64_t derive_seed(std::uint64_t parent_seed, std::uint64_t index) {
  return splitmix64(splitmix64(parent_seed) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

// mt19937_64 output is fixed by the standard; the distributions below are
// written out so draws agree across standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller without caching so the engine is the whole state.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  SeededRng split(std::uint64_t worker_index) const {
    return SeededRng(derive_seed(seed_, worker_index));
  }

  std::string state() const {
    std::ostringstream os;
    os << seed_ << ' ' << engine_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> seed_ >> engine_;
    if (!is) throw Error("malformed rng state");
  }

  friend bool operator==(const SeededRng& a, const SeededRng& b) {
    return a.seed_ == b.seed_ && a.engine_ == b.engine_;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace hica
