#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "strutservo/plant.hpp"
#include "support/equilibrium_oracle.hpp"

using namespace strutservo;

using strutservo::testing::bisect_equilibrium;
using strutservo::testing::close_rel;

namespace {

StrutParams worked_strut() {
  StrutParams p;
  p.axial_stiffness_kn_per_mm = 600;
  return p;
}

}  // namespace

TEST(Equilibrium, WorkedCaseAtLockOff) {
  const auto eq = solve_equilibrium(worked_strut(), SoilParams{}, 0.0, 0.0);
  // 600 * 3000 / 800
  EXPECT_DOUBLE_EQ(eq.strut_force_kn, 2250.0);
  EXPECT_DOUBLE_EQ(eq.wall_disp_mm, 3.75);
}

TEST(Equilibrium, TenDegreesWarmerWithJackFixed) {
  // s = 1.2e-5 * 10000 * 10 = 1.2 mm; F = 600 (3000 + 200 * 1.2) / 800
  const auto eq = solve_equilibrium(worked_strut(), SoilParams{}, 0.0, 10.0);
  EXPECT_NEAR(eq.strut_force_kn, 2430.0, 1e-9);
  EXPECT_NEAR(eq.wall_disp_mm, 2430.0 / 600.0 - 1.2, 1e-12);
}

TEST(Equilibrium, RetractedFarEnoughTheStrutGoesSlack) {
  SoilParams s;
  s.load_bounds_kn = {0, 20000};
  const auto eq = solve_equilibrium(worked_strut(), s, -40.0, 0.0);
  EXPECT_EQ(eq.strut_force_kn, 0.0);
  EXPECT_DOUBLE_EQ(eq.wall_disp_mm, 15.0);  // Q0 / ks, soil carries itself
}

TEST(Equilibrium, ActivePressureFloorIsRespected) {
  SoilParams s;
  s.load_bounds_kn = {1000, 20000};
  const auto eq = solve_equilibrium(worked_strut(), s, -40.0, 0.0);
  EXPECT_DOUBLE_EQ(eq.strut_force_kn, 1000.0);
  EXPECT_DOUBLE_EQ(eq.wall_disp_mm, 1000.0 / 600.0 + 40.0);
}

TEST(Equilibrium, PassiveCeilingIsRespected) {
  SoilParams s;
  s.load_bounds_kn = {0, 3100};
  const auto eq = solve_equilibrium(worked_strut(), s, 30.0, 0.0);
  EXPECT_DOUBLE_EQ(eq.strut_force_kn, 3100.0);
}

TEST(Equilibrium, AgreesWithBisectionOracleOnRandomDraws) {
  std::mt19937_64 gen(20240611);
  auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); };
  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    StrutParams p;
    p.axial_stiffness_kn_per_mm = U(50, 3000);
    SoilParams s;
    s.soil_stiffness_kn_per_mm = U(20, 2000);
    s.driving_load_kn = U(0, 8000);
    if (i % 3 == 0) s.load_bounds_kn = {U(0, s.driving_load_kn), s.driving_load_kn + U(0, 3000)};
    const double u = U(-50, 50);
    const double dT = U(-30, 30);
    const auto got = solve_equilibrium(p, s, u, dT);
    const auto want = bisect_equilibrium(p, s, u, dT);
    if (!close_rel(got.strut_force_kn, want.strut_force_kn, 1e-6) || !close_rel(got.wall_disp_mm, want.wall_disp_mm, 1e-6)) {
      ++failures;
      ADD_FAILURE() << "draw " << i << ": closed form (" << got.wall_disp_mm << ", " << got.strut_force_kn
                    << ") vs oracle (" << want.wall_disp_mm << ", " << want.strut_force_kn << ")";
    }
  }
  EXPECT_EQ(failures, 0);
}

TEST(Equilibrium, SolutionIsARootOfTheBalance) {
  std::mt19937_64 gen(7);
  auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); };
  for (int i = 0; i < 500; ++i) {
    StrutParams p;
    p.axial_stiffness_kn_per_mm = U(50, 3000);
    SoilParams s;
    s.soil_stiffness_kn_per_mm = U(20, 2000);
    s.driving_load_kn = U(0, 8000);
    const double u = U(-50, 50), dT = U(-30, 30);
    const auto eq = solve_equilibrium(p, s, u, dT);
    const double q = mobilized_load(s, eq.wall_disp_mm);
    const double f = strut_reaction(p, eq.wall_disp_mm, u, dT);
    EXPECT_NEAR(q, f, 1e-9 * std::max(1.0, q));
    EXPECT_NEAR(eq.strut_force_kn, f, 1e-9 * std::max(1.0, f));
    EXPECT_GE(eq.strut_force_kn, 0.0);
  }
}

TEST(LockOff, InverseGivesRequestedForce) {
  for (double f : {500.0, 1800.0, 2250.0, 2700.0}) {
    const auto st = lock_off_state(worked_strut(), SoilParams{}, f, 18.0);
    EXPECT_NEAR(st.strut_force_kn, f, 1e-9);
    EXPECT_EQ(st.temp_c, 18.0);
    EXPECT_EQ(st.ref_temp_c, 18.0);
    const auto eq = solve_equilibrium(worked_strut(), SoilParams{}, st.jack_ext_mm, 0.0);
    EXPECT_NEAR(eq.wall_disp_mm, st.wall_disp_mm, 1e-12);
  }
}

TEST(LockOff, RejectsForceNeedingMoreStrokeThanAvailable) {
  EXPECT_THROW((void)lock_off_state(worked_strut(), SoilParams{}, 19000.0, 20.0)  /* needs ~112 mm */, std::invalid_argument);
  EXPECT_THROW((void)lock_off_state(worked_strut(), SoilParams{}, 0.0, 20.0), std::invalid_argument);
}

TEST(Actuation, RateAndStrokeLimited) {
  StrutParams p = worked_strut();
  PlantState st;
  st = advance_actuation(st, p, 1.0, 5.0, 20.0);
  EXPECT_DOUBLE_EQ(st.jack_ext_mm, 0.5);
  st.jack_ext_mm = 99.8;
  st = advance_actuation(st, p, 1.0, 0.5, 20.0);
  EXPECT_DOUBLE_EQ(st.jack_ext_mm, 100.0);
  st = advance_actuation(st, p, 1.0, -0.5, 20.0);
  EXPECT_DOUBLE_EQ(st.jack_ext_mm, 99.5);
}

TEST(Actuation, TemperatureRelaxesTowardAmbient) {
  StrutParams p;
  p.thermal_time_constant_s = 120;
  PlantState st;
  st.temp_c = 20;
  st = advance_actuation(st, p, 120.0, 0.0, 30.0);
  EXPECT_NEAR(st.temp_c, 30.0 - 10.0 * std::exp(-1.0), 1e-12);
}

TEST(Plant, HoldsStillAtEquilibrium) {
  const StrutParams p = worked_strut();
  const SoilParams s;
  PlantState st = lock_off_state(p, s, 2250, 20);
  for (int i = 0; i < 100; ++i) st = step_plant(st, p, s, 1.0, 0.0, 20.0);
  EXPECT_DOUBLE_EQ(st.strut_force_kn, 2250.0);
  EXPECT_DOUBLE_EQ(st.wall_disp_mm, 3.75);
}

TEST(Plant, WallConvergesToNewEquilibrium) {
  const StrutParams p = worked_strut();
  const SoilParams s;
  PlantState st = lock_off_state(p, s, 2250, 20);
  for (int i = 0; i < 5000; ++i) st = step_plant(st, p, s, 1.0, 0.0, 30.0);
  EXPECT_NEAR(st.strut_force_kn, 2430.0, 1e-6);
}

TEST(Plant, RejectsNonPositiveStep) {
  EXPECT_THROW((void)step_plant(PlantState{}, StrutParams{}, SoilParams{}, 0.0, 0.0, 20.0), std::invalid_argument);
}

TEST(Stage, AppliesInOrderOnly) {
  auto [st, soil] = apply_stage(PlantState{}, SoilParams{}, {1, 500});
  EXPECT_EQ(st.stage_index, 1);
  EXPECT_DOUBLE_EQ(soil.driving_load_kn, 3500);
  EXPECT_THROW((void)apply_stage(st, soil, {1, 500}), SequencingError);
  EXPECT_THROW((void)apply_stage(st, soil, {3, 500}), SequencingError);
  EXPECT_THROW((void)apply_stage(st, soil, {2, 1e6}), std::invalid_argument);
}

TEST(Params, ValidationNamesTheField) {
  StrutParams p;
  p.axial_stiffness_kn_per_mm = 0;
  try {
    validate(p);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("axial_stiffness_kn_per_mm"), std::string::npos);
  }
  SoilParams s;
  s.load_bounds_kn = {-10, -1};
  s.driving_load_kn = -5;
  EXPECT_THROW(validate(s), std::invalid_argument);
}
