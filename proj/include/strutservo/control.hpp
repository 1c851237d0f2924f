#pragma once

// Force/displacement regulation: discrete PID with conditional anti-windup
// and a filtered derivative, thermal feed-forward, the mode supervisor and
// the final command limiter. The command variable is jack rate (mm/s).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>

#include "strutservo/plant.hpp"
#include "strutservo/sensors.hpp"

namespace strutservo {

struct PidGains {
  double kp = 0.002;   // mm/s per kN
  double ki = 0.0002;  // mm/s per kN*s
  double kd = 0.0;     // mm/s per kN/s
  double integral_limit = 0.25;
  double output_limit = 0.5;
  double derivative_filter_alpha = 0.9;
};

inline void validate(const PidGains& g) {
  if (!(g.kp >= 0 && g.ki >= 0 && g.kd >= 0)) throw std::invalid_argument("gains: kp, ki, kd must be >= 0");
  if (!(g.integral_limit > 0)) throw std::invalid_argument("integral_limit: must be > 0");
  if (!(g.output_limit > 0)) throw std::invalid_argument("output_limit: must be > 0");
  if (!(g.derivative_filter_alpha >= 0 && g.derivative_filter_alpha <= 1))
    throw std::invalid_argument("derivative_filter_alpha: must be in [0, 1]");
}

struct FeedforwardConfig {
  bool enabled = true;
  double filter_time_constant_s = 30.0;
  double update_threshold_mm = 0.02;
};

struct ControllerState {
  double integral = 0.0;  // integral term's output contribution, mm/s
  double prev_error = 0.0;
  bool has_prev_error = false;
  double filtered_derivative = 0.0;
  double last_command_mm_per_s = 0.0;
  double ff_ref_temp_c = 20.0;
  double ff_filtered_temp_c = 20.0;
  double ff_applied_mm = 0.0;
  friend bool operator==(const ControllerState&, const ControllerState&) = default;
};

// --- modes -----------------------------------------------------------------

struct ForceHold {
  double setpoint_kn = 0.0;
  double deadband_kn = 0.0;
  friend bool operator==(const ForceHold&, const ForceHold&) = default;
};
struct DisplacementHold {
  double setpoint_mm = 0.0;
  double deadband_mm = 0.0;
  friend bool operator==(const DisplacementHold&, const DisplacementHold&) = default;
};
struct Manual {
  double jog_rate_mm_per_s = 0.0;
  friend bool operator==(const Manual&, const Manual&) = default;
};
struct Locked {
  friend bool operator==(const Locked&, const Locked&) = default;
};

using ControlMode = std::variant<ForceHold, DisplacementHold, Manual, Locked>;

[[nodiscard]] inline std::string_view mode_name(const ControlMode& m) noexcept {
  switch (m.index()) {
    case 0: return "force_hold";
    case 1: return "displacement_hold";
    case 2: return "manual";
    default: return "locked";
  }
}

[[nodiscard]] inline bool is_locked(const ControlMode& m) noexcept { return std::holds_alternative<Locked>(m); }
[[nodiscard]] inline bool is_automatic(const ControlMode& m) noexcept {
  return std::holds_alternative<ForceHold>(m) || std::holds_alternative<DisplacementHold>(m);
}

// --- PID -------------------------------------------------------------------

struct PidOutput {
  double command_mm_per_s = 0.0;
  ControllerState state;
  bool fault = false;  // non-finite error; caller must lock the loop
};

[[nodiscard]] inline PidOutput pid_step(const PidGains& g, ControllerState st, double error, double dt_s) {
  if (!(dt_s > 0)) throw std::invalid_argument("pid_step: dt_s must be > 0");
  if (!std::isfinite(error)) {
    st.last_command_mm_per_s = 0.0;
    return {0.0, st, true};
  }

  const double raw_derivative = st.has_prev_error ? (error - st.prev_error) / dt_s : 0.0;
  st.filtered_derivative =
      g.derivative_filter_alpha * st.filtered_derivative + (1.0 - g.derivative_filter_alpha) * raw_derivative;

  const double p = g.kp * error;
  const double d = g.kd * st.filtered_derivative;
  const double unsaturated = p + st.integral + d;
  // Conditional integration: no accumulation while saturated in the error's direction.
  const bool windup = std::abs(unsaturated) > g.output_limit && unsaturated * error > 0;
  if (!windup) st.integral = std::clamp(st.integral + g.ki * error * dt_s, -g.integral_limit, g.integral_limit);

  const double cmd = std::clamp(p + st.integral + d, -g.output_limit, g.output_limit);
  st.prev_error = error;
  st.has_prev_error = true;
  st.last_command_mm_per_s = cmd;
  return {cmd, st, false};
}

/// Deadband hold: integral frozen, derivative history restarted.
[[nodiscard]] inline ControllerState pid_hold(ControllerState st) noexcept {
  st.has_prev_error = false;
  st.filtered_derivative = 0.0;
  st.last_command_mm_per_s = 0.0;
  return st;
}

// --- feed-forward ----------------------------------------------------------

/// Jack offset that cancels the strut's thermal elongation.
[[nodiscard]] inline double thermal_feedforward(const StrutParams& strut, double temp_c, double ff_ref_temp_c) noexcept {
  return -thermal_elongation(strut, temp_c - ff_ref_temp_c);
}

/// Tracks the feed-forward offset as a rate. Returns (rate, state').
[[nodiscard]] inline std::pair<double, ControllerState> feedforward_rate(const FeedforwardConfig& cfg,
                                                                        const StrutParams& strut,
                                                                        ControllerState st, double dt_s) noexcept {
  if (!cfg.enabled) return {0.0, st};
  const double target = thermal_feedforward(strut, st.ff_filtered_temp_c, st.ff_ref_temp_c);
  const double gap = target - st.ff_applied_mm;
  if (std::abs(gap) <= cfg.update_threshold_mm) return {0.0, st};
  const double rate = std::clamp(gap / dt_s, -strut.jack_rate_limit_mm_per_s, strut.jack_rate_limit_mm_per_s);
  st.ff_applied_mm += rate * dt_s;
  return {rate, st};
}

[[nodiscard]] inline ControllerState filter_temperature(const FeedforwardConfig& cfg, ControllerState st,
                                                        double measured_temp_c, double dt_s) noexcept {
  const double a = 1.0 - std::exp(-dt_s / cfg.filter_time_constant_s);
  st.ff_filtered_temp_c += a * (measured_temp_c - st.ff_filtered_temp_c);
  return st;
}

// --- supervisor ------------------------------------------------------------

struct SupervisorLimits {
  double retract_limit_kn = 2700.0;  // hard limit; above it the jack retracts at full rate
};

struct Measurements {
  Reading force;
  Reading displacement;
};

enum class Action { hold, extend, retract, auto_retract, manual, locked };

[[nodiscard]] constexpr std::string_view to_string(Action a) noexcept {
  switch (a) {
    case Action::hold: return "hold";
    case Action::extend: return "extend";
    case Action::retract: return "retract";
    case Action::auto_retract: return "auto_retract";
    case Action::manual: return "manual";
    case Action::locked: return "locked";
  }
  return "?";
}

struct Decision {
  Action action = Action::hold;
  double error = 0.0;   // setpoint-referenced; + means extend
  double target = 0.0;  // active setpoint
  bool fault = false;   // measurement needed by this mode was not fresh
  double command_mm_per_s = 0.0;  // manual jog or auto-retract rate; PID fills the rest
};

[[nodiscard]] inline Decision band_decision(double error, double deadband, double target) noexcept {
  if (std::abs(error) <= deadband) return {Action::hold, 0.0, target};
  return {error > 0 ? Action::extend : Action::retract, error, target};
}

[[nodiscard]] inline Decision supervise(const ControlMode& mode, const Measurements& meas,
                                        const SupervisorLimits& limits, const StrutParams& strut) {
  return std::visit(
      [&](const auto& m) -> Decision {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Locked>) {
          return {Action::locked};
        } else if constexpr (std::is_same_v<M, Manual>) {
          Decision d{Action::manual};
          d.command_mm_per_s = m.jog_rate_mm_per_s;
          return d;
        } else {
          if (!meas.force.fresh()) return {Action::hold, 0.0, 0.0, true};
          if (meas.force.value > limits.retract_limit_kn) {
            Decision d{Action::auto_retract};
            d.command_mm_per_s = -strut.jack_rate_limit_mm_per_s;
            return d;
          }
          if constexpr (std::is_same_v<M, ForceHold>) {
            return band_decision(m.setpoint_kn - meas.force.value, m.deadband_kn, m.setpoint_kn);
          } else {
            if (!meas.displacement.fresh()) return {Action::hold, 0.0, m.setpoint_mm, true};
            // Wall too far into the pit -> extend.
            return band_decision(meas.displacement.value - m.setpoint_mm, m.deadband_mm, m.setpoint_mm);
          }
        }
      },
      mode);
}

[[nodiscard]] inline double limit_command(double command_mm_per_s, double jack_ext_mm, const StrutParams& strut,
                                          bool locked) noexcept {
  if (locked || !std::isfinite(command_mm_per_s)) return 0.0;
  double c = std::clamp(command_mm_per_s, -strut.jack_rate_limit_mm_per_s, strut.jack_rate_limit_mm_per_s);
  if (c > 0 && jack_ext_mm >= strut.jack_stroke_mm.hi) c = 0.0;
  if (c < 0 && jack_ext_mm <= strut.jack_stroke_mm.lo) c = 0.0;
  return c;
}

// --- one loop iteration ------------------------------------------------------

struct ControllerConfig {
  PidGains force_gains{};
  PidGains displacement_gains{0.05, 0.0005, 0.0, 0.25, 0.5, 0.9};
  FeedforwardConfig feedforward{};
  SupervisorLimits limits{};
};

struct RegulatorOutput {
  double command_mm_per_s = 0.0;
  Decision decision;
  ControllerState state;
  bool pid_fault = false;
};

/// Supervisor -> PID -> feed-forward -> limiter, for one strut and one tick.
[[nodiscard]] inline RegulatorOutput regulate(const ControllerConfig& cfg, const ControlMode& mode,
                                              ControllerState st, const Measurements& meas,
                                              const Reading& temperature, const StrutParams& strut,
                                              double jack_ext_mm, double dt_s) {
  if (temperature.fresh()) st = filter_temperature(cfg.feedforward, st, temperature.value, dt_s);

  RegulatorOutput out;
  out.decision = supervise(mode, meas, cfg.limits, strut);
  double cmd = 0.0;
  switch (out.decision.action) {
    case Action::locked:
    case Action::hold:
      st = pid_hold(st);
      break;
    case Action::manual:
    case Action::auto_retract:
      st = pid_hold(st);
      cmd = out.decision.command_mm_per_s;
      break;
    case Action::extend:
    case Action::retract: {
      const PidGains& g = std::holds_alternative<ForceHold>(mode) ? cfg.force_gains : cfg.displacement_gains;
      PidOutput p = pid_step(g, st, out.decision.error, dt_s);
      st = p.state;
      cmd = p.command_mm_per_s;
      out.pid_fault = p.fault;
      break;
    }
  }

  // Feed-forward rides on top of the feedback path in automatic modes, but
  // never while the loop is holding on a bad measurement or auto-retracting.
  const bool ff_allowed = is_automatic(mode) && !out.decision.fault && out.decision.action != Action::auto_retract &&
                          !out.pid_fault && temperature.fresh();
  if (ff_allowed) {
    auto [rate, st2] = feedforward_rate(cfg.feedforward, strut, st, dt_s);
    cmd += rate;
    st = st2;
  }

  out.command_mm_per_s = limit_command(cmd, jack_ext_mm, strut, is_locked(mode) || out.pid_fault);
  st.last_command_mm_per_s = out.command_mm_per_s;
  out.state = st;
  return out;
}

}  // namespace strutservo
