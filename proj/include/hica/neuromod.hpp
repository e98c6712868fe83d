#pragma once

#include <algorithm>
#include <cmath>

#include "hica/errors.hpp"

namespace hica {

struct ModulatorParams {
  double tau_ticks = 10.0;
  double g_min = 0.1;
  double eta = 0.8;
  double ticks_per_second = 10.0;
};

// Global plasticity gain. Reward magnitude raises m, which decays exponentially;
// every unit's learning rate is scaled by g_min + (1 - g_min) * m.
class Modulator {
 public:
  Modulator() = default;
  explicit Modulator(const ModulatorParams& p) : p_(p) {
    if (!(p.tau_ticks > 0.0)) throw Error("modulator: tau_ticks must be positive");
    if (!(p.g_min > 0.0 && p.g_min <= 1.0)) throw Error("modulator: g_min must lie in (0, 1]");
    if (!(p.eta > 0.0)) throw Error("modulator: eta must be positive");
    if (!(p.ticks_per_second > 0.0)) throw Error("modulator: ticks_per_second must be positive");
  }

  const ModulatorParams& params() const { return p_; }
  double level() const { return m_; }

  void set_level(double m) { m_ = std::clamp(m, 0.0, 1.0); }

  void reward_event(double r) {
    if (!std::isfinite(r)) throw Error("modulator: reward must be finite");
    m_ = std::min(1.0, m_ + p_.eta * std::abs(r));
  }

  void decay_step() { m_ *= std::exp(-1.0 / p_.tau_ticks); }

  double gain() const { return p_.g_min + (1.0 - p_.g_min) * m_; }

  double effective_lr(double base_lr) const {
    if (base_lr < 0.0) throw Error("modulator: base_lr must be non-negative");
    return base_lr * gain();
  }

  template <typename Archive>
  void persist(Archive& ar) {
    ar.field(p_.tau_ticks);
    ar.field(p_.g_min);
    ar.field(p_.eta);
    ar.field(p_.ticks_per_second);
    ar.field(m_);
  }

 private:
  ModulatorParams p_;
  double m_ = 0.0;
};

}  // namespace hica
