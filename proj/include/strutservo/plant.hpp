#pragma once

// Quasi-static digital twin of one strut level: a soil/wall relief spring in
// equilibrium with a thermally expanding steel strut driven by a jack.
//
// Sign conventions used throughout the library:
//   wall displacement w  + toward the pit (mm)
//   jack extension u     + extension (mm)
//   strut force F        + compression (kN)

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace strutservo {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] constexpr bool contains(double x) const noexcept { return x >= lo && x <= hi; }
  [[nodiscard]] constexpr double clamp(double x) const noexcept { return std::clamp(x, lo, hi); }
};

struct StrutParams {
  double length_mm = 10000.0;
  double axial_stiffness_kn_per_mm = 626.0;  // EA/L for a 609x16 pipe, 10 m, E = 210 GPa
  double thermal_coeff_per_c = 1.2e-5;
  Interval jack_stroke_mm{-100.0, 100.0};
  double jack_rate_limit_mm_per_s = 0.5;
  double design_force_kn = 2250.0;
  double thermal_time_constant_s = 120.0;
};

struct SoilParams {
  double driving_load_kn = 3000.0;
  double soil_stiffness_kn_per_mm = 200.0;
  Interval load_bounds_kn{0.0, 20000.0};
  double wall_time_constant_s = 60.0;
};

struct PlantState {
  double wall_disp_mm = 0.0;
  double jack_ext_mm = 0.0;
  double temp_c = 20.0;
  double ref_temp_c = 20.0;
  double strut_force_kn = 0.0;
  int stage_index = 0;
};

struct Equilibrium {
  double wall_disp_mm = 0.0;
  double strut_force_kn = 0.0;
};

struct StageIncrement {
  int stage_index = 1;  // must be state.stage_index + 1
  double load_increment_kn = 0.0;
};

class SequencingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline void validate(const StrutParams& p) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (!(p.length_mm > 0)) fail("length_mm", "must be > 0");
  if (!(p.axial_stiffness_kn_per_mm > 0)) fail("axial_stiffness_kn_per_mm", "must be > 0");
  if (!(p.thermal_coeff_per_c >= 0)) fail("thermal_coeff_per_c", "must be >= 0");
  if (!(p.jack_stroke_mm.lo < p.jack_stroke_mm.hi)) fail("jack_stroke_mm", "min must be < max");
  if (!(p.jack_rate_limit_mm_per_s > 0)) fail("jack_rate_limit_mm_per_s", "must be > 0");
  if (!(p.design_force_kn > 0)) fail("design_force_kn", "must be > 0");
  if (!(p.thermal_time_constant_s > 0)) fail("thermal_time_constant_s", "must be > 0");
}

inline void validate(const SoilParams& s) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (!(s.soil_stiffness_kn_per_mm > 0)) fail("soil_stiffness_kn_per_mm", "must be > 0");
  if (!(s.load_bounds_kn.lo <= s.driving_load_kn && s.driving_load_kn <= s.load_bounds_kn.hi))
    fail("driving_load_kn", "must lie within load_bounds_kn");
  // A non-negative upper clamp is what guarantees a root (the strut cannot pull).
  if (!(s.load_bounds_kn.hi >= 0)) fail("load_bounds_kn", "max must be >= 0");
  if (!(s.wall_time_constant_s > 0)) fail("wall_time_constant_s", "must be > 0");
  if (!std::isfinite(s.driving_load_kn)) fail("driving_load_kn", "must be finite");
}

[[nodiscard]] inline double thermal_elongation(const StrutParams& p, double delta_t_c) noexcept {
  return p.thermal_coeff_per_c * p.length_mm * delta_t_c;
}

/// Earth load mobilized on the wall panel at displacement w.
[[nodiscard]] inline double mobilized_load(const SoilParams& s, double wall_disp_mm) noexcept {
  return s.load_bounds_kn.clamp(s.driving_load_kn - s.soil_stiffness_kn_per_mm * wall_disp_mm);
}

/// Compressive strut reaction; zero when the strut would be in tension.
[[nodiscard]] inline double strut_reaction(const StrutParams& p, double wall_disp_mm, double jack_ext_mm,
                                           double delta_t_c) noexcept {
  const double squeeze = wall_disp_mm + jack_ext_mm + thermal_elongation(p, delta_t_c);
  return std::max(0.0, p.axial_stiffness_kn_per_mm * squeeze);
}

/// Solves mobilized_load(w) == strut_reaction(w) in closed form.
///
/// The residual is non-increasing in w, so the root is unique except where
/// both sides are flat at zero (slack strut, zero mobilized load). In that
/// case the wall is taken to rest against the soil alone, as close to
/// Q0/k_soil as the root set allows.
[[nodiscard]] inline Equilibrium solve_equilibrium(const StrutParams& strut, const SoilParams& soil,
                                                   double jack_ext_mm, double delta_t_c) noexcept {
  const double ks = soil.soil_stiffness_kn_per_mm;
  const double kk = strut.axial_stiffness_kn_per_mm;
  const double offset = jack_ext_mm + thermal_elongation(strut, delta_t_c);
  const double q0 = soil.driving_load_kn;

  const double interior_force = kk * (q0 + ks * offset) / (ks + kk);
  const double force = soil.load_bounds_kn.clamp(interior_force);
  if (force > 0.0) return {force / kk - offset, force};
  return {std::min(q0 / ks, -offset), 0.0};
}

/// Initial state at pre-stress lock-off: the jack extension that yields the
/// requested force at equilibrium, wall already settled.
[[nodiscard]] inline PlantState lock_off_state(const StrutParams& strut, const SoilParams& soil,
                                               double prestress_kn, double temp_c) {
  const double ks = soil.soil_stiffness_kn_per_mm;
  const double kk = strut.axial_stiffness_kn_per_mm;
  if (!(prestress_kn > 0) || !soil.load_bounds_kn.contains(prestress_kn))
    throw std::invalid_argument("prestress_kn: must be > 0 and within load_bounds_kn");
  const double u = (prestress_kn * (ks + kk) / kk - soil.driving_load_kn) / ks;
  if (!strut.jack_stroke_mm.contains(u))
    throw std::invalid_argument("prestress_kn: required jack extension " + std::to_string(u) +
                                " mm is outside jack_stroke_mm");
  const Equilibrium eq = solve_equilibrium(strut, soil, u, 0.0);
  PlantState st;
  st.wall_disp_mm = eq.wall_disp_mm;
  st.jack_ext_mm = u;
  st.temp_c = temp_c;
  st.ref_temp_c = temp_c;
  st.strut_force_kn = eq.strut_force_kn;
  return st;
}

/// Integrates the rate-limited, stroke-clamped jack command and relaxes the
/// strut temperature toward ambient. Wall and force are left untouched.
[[nodiscard]] inline PlantState advance_actuation(PlantState st, const StrutParams& strut, double dt_s,
                                                  double jack_cmd_mm_per_s, double ambient_temp_c) noexcept {
  const double rate = std::clamp(jack_cmd_mm_per_s, -strut.jack_rate_limit_mm_per_s,
                                 strut.jack_rate_limit_mm_per_s);
  st.jack_ext_mm = strut.jack_stroke_mm.clamp(st.jack_ext_mm + rate * dt_s);
  const double decay = std::exp(-dt_s / strut.thermal_time_constant_s);
  st.temp_c = ambient_temp_c + (st.temp_c - ambient_temp_c) * decay;
  return st;
}

/// First-order wall lag toward `target_wall_disp_mm`, then force recomputed.
[[nodiscard]] inline PlantState relax_wall(PlantState st, const StrutParams& strut, const SoilParams& soil,
                                           double dt_s, double target_wall_disp_mm) noexcept {
  const double decay = std::exp(-dt_s / soil.wall_time_constant_s);
  st.wall_disp_mm = target_wall_disp_mm + (st.wall_disp_mm - target_wall_disp_mm) * decay;
  st.strut_force_kn = strut_reaction(strut, st.wall_disp_mm, st.jack_ext_mm, st.temp_c - st.ref_temp_c);
  return st;
}

[[nodiscard]] inline PlantState step_plant(const PlantState& state, const StrutParams& strut, const SoilParams& soil,
                                           double dt_s, double jack_cmd_mm_per_s, double ambient_temp_c) {
  if (!(dt_s > 0)) throw std::invalid_argument("dt_s must be > 0");
  PlantState st = advance_actuation(state, strut, dt_s, jack_cmd_mm_per_s, ambient_temp_c);
  const Equilibrium eq = solve_equilibrium(strut, soil, st.jack_ext_mm, st.temp_c - st.ref_temp_c);
  return relax_wall(st, strut, soil, dt_s, eq.wall_disp_mm);
}

[[nodiscard]] inline std::pair<PlantState, SoilParams> apply_stage(PlantState state, SoilParams soil,
                                                                   const StageIncrement& stage) {
  if (stage.stage_index != state.stage_index + 1)
    throw SequencingError("stage " + std::to_string(stage.stage_index) + " applied after stage " +
                          std::to_string(state.stage_index));
  soil.driving_load_kn += stage.load_increment_kn;
  validate(soil);
  state.stage_index = stage.stage_index;
  return {state, soil};
}

}  // namespace strutservo
