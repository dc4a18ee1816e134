#ifndef ZYSIM_POWER_HPP
#define ZYSIM_POWER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>

#include "zysim/energy.hpp"
#include "zysim/error.hpp"

namespace zysim {

/// Capacitor energy thresholds, all in microjoules.
struct CapacitorConfig {
  std::int64_t capacity_uj = 0;
  std::int64_t e_on_uj = 0;    // off -> on once stored energy reaches this
  std::int64_t e_off_uj = 0;   // on -> off once stored energy falls to this
  std::int64_t e_man_uj = 0;   // minimum energy to start any unit
  std::int64_t e_opt_uj = 0;   // eta * E_curr must reach this for optional units

  /// e_off = E_man, e_on = 2 E_man (capped at capacity), E_opt = capacity.
  static CapacitorConfig with_defaults(std::int64_t capacity_uj, std::int64_t e_man_uj) {
    CapacitorConfig c;
    c.capacity_uj = capacity_uj;
    c.e_man_uj = e_man_uj;
    c.e_off_uj = e_man_uj;
    c.e_on_uj = std::min(2 * e_man_uj, capacity_uj);
    c.e_opt_uj = capacity_uj;
    return c;
  }

  void validate() const {
    require(capacity_uj > 0, "capacitor: capacity_uj must be positive");
    require(e_off_uj >= 0, "capacitor: e_off_uj must be >= 0");
    require(e_off_uj < e_on_uj, "capacitor: e_off_uj must be below e_on_uj");
    require(e_on_uj <= capacity_uj, "capacitor: e_on_uj exceeds capacity_uj");
    require(e_man_uj >= 0 && e_man_uj <= capacity_uj,
            "capacitor: e_man_uj outside [0, capacity_uj]");
    require(e_opt_uj >= 0 && e_opt_uj <= capacity_uj,
            "capacitor: e_opt_uj outside [0, capacity_uj]");
  }

  std::int64_t capacity_pj() const { return capacity_uj * kPicoPerMicro; }
  std::int64_t e_on_pj() const { return e_on_uj * kPicoPerMicro; }
  std::int64_t e_off_pj() const { return e_off_uj * kPicoPerMicro; }
};

/// Stored energy is kept in picojoules so that uW * us bookkeeping is exact.
struct PowerState {
  std::int64_t e_pj = 0;
  bool device_on = false;
  std::int64_t t_us = 0;

  std::int64_t e_curr_uj() const { return e_pj / kPicoPerMicro; }

  friend bool operator==(const PowerState&, const PowerState&) = default;
};

enum class Transition { none, power_off, power_on };

struct StepResult {
  PowerState state;
  std::int64_t elapsed_us = 0;  // < dt_us only when a transition cut the step
  Transition transition = Transition::none;
  std::int64_t harvested_pj = 0;
  std::int64_t consumed_pj = 0;
  std::int64_t wasted_pj = 0;   // inflow lost to a full capacitor
};

namespace detail {
inline std::int64_t ceil_div(std::int64_t num, std::int64_t den) {
  return num <= 0 ? 0 : (num + den - 1) / den;
}
}  // namespace detail

/// Microseconds until stored energy reaches target at a constant positive
/// net inflow, or nullopt if it never does.
inline std::optional<std::int64_t> time_to_reach(std::int64_t e_pj, std::int64_t target_pj,
                                                 std::int64_t net_uw) {
  if (e_pj >= target_pj) return 0;
  if (net_uw <= 0) return std::nullopt;
  return detail::ceil_div(target_pj - e_pj, net_uw);
}

/// Advance the capacitor by at most dt_us under constant harvest and load.
///
/// Stops early at the first on/off transition; the caller re-invokes with the
/// remainder. A discharging device turns off when the linear trajectory
/// reaches e_off, a charging one turns on when it reaches e_on.
inline StepResult step(const PowerState& state, const CapacitorConfig& cfg,
                       std::int64_t harvest_uw, std::int64_t load_uw, std::int64_t dt_us) {
  require(dt_us >= 0, "power step: negative duration");
  require(harvest_uw >= 0 && load_uw >= 0, "power step: negative power");
  require(state.device_on || load_uw == 0, "power step: load on a powered-off device");

  StepResult r;
  r.state = state;
  const std::int64_t cap = cfg.capacity_pj();
  const std::int64_t net = harvest_uw - load_uw;

  std::int64_t span = dt_us;
  if (state.device_on && net < 0) {
    const std::int64_t to_off = detail::ceil_div(state.e_pj - cfg.e_off_pj(), -net);
    if (to_off <= dt_us) {
      span = to_off;
      r.transition = Transition::power_off;
    }
  } else if (!state.device_on) {
    if (state.e_pj >= cfg.e_on_pj()) {
      span = 0;
      r.transition = Transition::power_on;
    } else if (harvest_uw > 0) {
      const std::int64_t to_on = detail::ceil_div(cfg.e_on_pj() - state.e_pj, harvest_uw);
      if (to_on <= dt_us) {
        span = to_on;
        r.transition = Transition::power_on;
      }
    }
  }

  r.elapsed_us = span;
  r.harvested_pj = harvest_uw * span;
  r.consumed_pj = load_uw * span;
  std::int64_t e = state.e_pj + net * span;
  if (e > cap) {
    r.wasted_pj = e - cap;
    e = cap;
  } else if (e < 0) {
    // The last partial microsecond cannot draw energy that is not there.
    r.consumed_pj += e;
    e = 0;
  }
  r.state.e_pj = e;
  r.state.t_us = state.t_us + span;
  if (r.transition == Transition::power_off) r.state.device_on = false;
  if (r.transition == Transition::power_on) r.state.device_on = true;
  return r;
}

/// Rough optimal capacitance sqrt(2 P dT) / V in farads, for average input
/// power P, slack dT between deadline and execution time, and voltage V.
inline double optimal_capacitance(double p_uw, double delta_t_us, double v_volts) {
  require(p_uw > 0.0 && delta_t_us > 0.0 && v_volts > 0.0,
          "optimal_capacitance: inputs must be positive");
  const double p_w = p_uw * 1e-6;
  const double dt_s = delta_t_us * 1e-6;
  return std::sqrt(2.0 * p_w * dt_s) / v_volts;
}

}  // namespace zysim

#endif  // ZYSIM_POWER_HPP
