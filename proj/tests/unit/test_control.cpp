#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "strutservo/control.hpp"

using namespace strutservo;

namespace {
Reading fresh(SensorKind k, double v, Tick t = 0) { return {t, {"S1", k}, v, ReadingStatus::ok}; }
Reading stale(SensorKind k, double v) { return {0, {"S1", k}, v, ReadingStatus::stale}; }
Measurements meas(double f, double w = 0.0) { return {fresh(SensorKind::force, f), fresh(SensorKind::displacement, w)}; }
}  // namespace

TEST(Pid, IntegralContributionStaysBoundedUnderRandomErrors) {
  PidGains g;
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> e(-3000, 3000);
  std::bernoulli_distribution burst(0.1);
  ControllerState st;
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const double err = burst(gen) ? 1e6 * (e(gen) > 0 ? 1 : -1) : e(gen);
    const auto out = pid_step(g, st, err, 1.0);
    st = out.state;
    worst = std::max(worst, std::abs(st.integral));
    ASSERT_LE(std::abs(st.integral), g.integral_limit);
    ASSERT_LE(std::abs(out.command_mm_per_s), g.output_limit);
  }
  EXPECT_GT(worst, 0.0);
}

TEST(Pid, NoIntegrationWhileSaturatedTheSameWay) {
  PidGains g;
  ControllerState st;
  st.integral = 0.1;
  // kp * 1000 = 2 mm/s, far past the 0.5 limit -> integral frozen.
  const auto out = pid_step(g, st, 1000.0, 1.0);
  EXPECT_DOUBLE_EQ(out.state.integral, 0.1);
  EXPECT_DOUBLE_EQ(out.command_mm_per_s, 0.5);
  // Saturated against the error's direction: integration allowed (unwinds).
  st.integral = 0.25;
  const auto back = pid_step(g, st, -10.0, 1.0);
  EXPECT_LT(back.state.integral, 0.25);
}

TEST(Pid, ProportionalAndIntegralArithmetic) {
  PidGains g;
  const auto out = pid_step(g, ControllerState{}, 100.0, 1.0);
  EXPECT_DOUBLE_EQ(out.state.integral, 0.0002 * 100.0);
  EXPECT_DOUBLE_EQ(out.command_mm_per_s, 0.002 * 100.0 + 0.0002 * 100.0);
}

TEST(Pid, DerivativeIsFiltered) {
  PidGains g;
  g.kp = 0;
  g.ki = 0;
  g.kd = 1.0;
  g.derivative_filter_alpha = 0.5;
  ControllerState st;
  st = pid_step(g, st, 0.0, 1.0).state;
  const auto out = pid_step(g, st, 0.4, 1.0);
  EXPECT_DOUBLE_EQ(out.state.filtered_derivative, 0.2);
  EXPECT_DOUBLE_EQ(out.command_mm_per_s, 0.2);
}

TEST(Pid, NonFiniteErrorFaults) {
  const auto out = pid_step(PidGains{}, ControllerState{}, std::numeric_limits<double>::quiet_NaN(), 1.0);
  EXPECT_TRUE(out.fault);
  EXPECT_EQ(out.command_mm_per_s, 0.0);
}

TEST(Pid, HoldFreezesIntegral) {
  ControllerState st;
  st.integral = 0.2;
  st.has_prev_error = true;
  EXPECT_EQ(pid_hold(st).integral, 0.2);
  EXPECT_FALSE(pid_hold(st).has_prev_error);
}

TEST(Supervisor, DeadbandHolds) {
  const ControlMode m = ForceHold{2250, 112.5};
  const auto d = supervise(m, meas(2250 - 112.5), {2700}, StrutParams{});
  EXPECT_EQ(d.action, Action::hold);
  EXPECT_EQ(supervise(m, meas(2100), {2700}, StrutParams{}).action, Action::extend);
  EXPECT_EQ(supervise(m, meas(2400), {2700}, StrutParams{}).action, Action::retract);
}

TEST(Supervisor, RetractsAboveHardLimitInAnyAutomaticMode) {
  for (ControlMode m : {ControlMode{ForceHold{2250, 112.5}}, ControlMode{DisplacementHold{4, 0.5}}}) {
    const auto d = supervise(m, meas(2701, 4), {2700}, StrutParams{});
    EXPECT_EQ(d.action, Action::auto_retract);
    EXPECT_EQ(d.command_mm_per_s, -0.5);
  }
}

TEST(Supervisor, DisplacementModeExtendsWhenWallMovesIn) {
  const ControlMode m = DisplacementHold{4.0, 0.5};
  const auto d = supervise(m, meas(2250, 5.0), {2700}, StrutParams{});
  EXPECT_EQ(d.action, Action::extend);
  EXPECT_DOUBLE_EQ(d.error, 1.0);
}

TEST(Supervisor, StaleReadingsHold) {
  const ControlMode m = ForceHold{2250, 112.5};
  const auto d = supervise(m, {stale(SensorKind::force, 1000), fresh(SensorKind::displacement, 0)}, {2700}, StrutParams{});
  EXPECT_EQ(d.action, Action::hold);
  EXPECT_TRUE(d.fault);
  const ControlMode dm = DisplacementHold{4.0, 0.5};
  EXPECT_TRUE(supervise(dm, {fresh(SensorKind::force, 2250), stale(SensorKind::displacement, 9)}, {2700}, StrutParams{}).fault);
}

TEST(Regulate, DeadbandCommandIsExactlyZeroForAnyMeasurementInside) {
  ControllerConfig cfg;
  cfg.feedforward.enabled = false;
  const ControlMode m = ForceHold{2250, 112.5};
  ControllerState st;
  st.integral = 0.2;  // a wound integrator must not leak out inside the band
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> f(2250 - 112.5, 2250 + 112.5);
  for (int i = 0; i < 2000; ++i) {
    const auto out = regulate(cfg, m, st, meas(f(gen)), fresh(SensorKind::temperature, 20), StrutParams{}, 0.0, 1.0);
    ASSERT_EQ(out.command_mm_per_s, 0.0);
    ASSERT_EQ(out.state.integral, 0.2);
    st = out.state;
  }
}

TEST(Regulate, InvalidForceGivesZeroCommandEvenWithFeedforward) {
  ControllerConfig cfg;
  ControllerState st;
  st.ff_filtered_temp_c = 30;  // big pending feed-forward move
  const ControlMode m = ForceHold{2250, 112.5};
  const auto out = regulate(cfg, m, st, {stale(SensorKind::force, 1500), fresh(SensorKind::displacement, 0)},
                            fresh(SensorKind::temperature, 30), StrutParams{}, 0.0, 1.0);
  EXPECT_EQ(out.command_mm_per_s, 0.0);
  EXPECT_TRUE(out.decision.fault);
}

TEST(Regulate, LockedAlwaysZero) {
  const auto out = regulate(ControllerConfig{}, Locked{}, ControllerState{}, meas(100), fresh(SensorKind::temperature, 40),
                            StrutParams{}, 0.0, 1.0);
  EXPECT_EQ(out.command_mm_per_s, 0.0);
}

TEST(Regulate, ManualJogPassesThroughLimiter) {
  const auto out = regulate(ControllerConfig{}, Manual{0.3}, ControllerState{}, meas(2250),
                            fresh(SensorKind::temperature, 20), StrutParams{}, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(out.command_mm_per_s, 0.3);
}

TEST(Feedforward, CancelsThermalElongation) {
  StrutParams p;
  EXPECT_DOUBLE_EQ(thermal_feedforward(p, 30, 20), -1.2);
}

TEST(Feedforward, RateTracksFilteredTemperatureAboveThreshold) {
  FeedforwardConfig cfg;
  StrutParams p;
  ControllerState st;
  st.ff_ref_temp_c = 20;
  st.ff_filtered_temp_c = 20.1;  // 0.012 mm, under the threshold
  EXPECT_EQ(feedforward_rate(cfg, p, st, 1.0).first, 0.0);
  st.ff_filtered_temp_c = 21;  // -0.12 mm
  auto [rate, st2] = feedforward_rate(cfg, p, st, 1.0);
  EXPECT_NEAR(rate, -0.12, 1e-12);
  EXPECT_NEAR(st2.ff_applied_mm, -0.12, 1e-12);
  EXPECT_EQ(feedforward_rate(cfg, p, st2, 1.0).first, 0.0);
}

TEST(Feedforward, RateIsClampedToJack) {
  FeedforwardConfig cfg;
  StrutParams p;
  ControllerState st;
  st.ff_filtered_temp_c = 40;
  EXPECT_DOUBLE_EQ(feedforward_rate(cfg, p, st, 1.0).first, -0.5);
}

TEST(Feedforward, TemperatureFilterIsFirstOrder) {
  FeedforwardConfig cfg;
  ControllerState st;
  st.ff_filtered_temp_c = 20;
  st = filter_temperature(cfg, st, 30, 30.0);
  EXPECT_NEAR(st.ff_filtered_temp_c, 30 - 10 * std::exp(-1.0), 1e-12);
}

TEST(Limiter, StopsAtStrokeEnds) {
  StrutParams p;
  EXPECT_EQ(limit_command(0.3, 100.0, p, false), 0.0);
  EXPECT_EQ(limit_command(-0.3, 100.0, p, false), -0.3);
  EXPECT_EQ(limit_command(-0.3, -100.0, p, false), 0.0);
  EXPECT_EQ(limit_command(3.0, 0.0, p, false), 0.5);
  EXPECT_EQ(limit_command(0.3, 0.0, p, true), 0.0);
  EXPECT_EQ(limit_command(std::numeric_limits<double>::infinity(), 0.0, p, false), 0.0);
}

TEST(Gains, Validation) {
  PidGains g;
  g.output_limit = 0;
  EXPECT_THROW(validate(g), std::invalid_argument);
  g = {};
  g.derivative_filter_alpha = 1.5;
  EXPECT_THROW(validate(g), std::invalid_argument);
}
