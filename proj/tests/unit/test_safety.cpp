#include <gtest/gtest.h>

#include <random>

#include "strutservo/safety.hpp"

using namespace strutservo;

namespace {

ChannelThresholds force_thresholds() {
  ChannelThresholds t;
  t.direction = AlarmDirection::both;
  t.high = {2475, 2700};
  t.low = {2025, 1800};
  t.hysteresis = 45;
  return t;
}

ChannelThresholds high_only() {
  ChannelThresholds t;
  t.direction = AlarmDirection::high;
  t.high = {20, 30};
  t.hysteresis = 2;
  return t;
}

struct Trace {
  AlarmState st;
  ChannelThresholds th;
  Tick t = 0;
  AlarmLevel feed(double v) {
    st = evaluate_alarm(st, v, th, t++);
    return st.level;
  }
};

}  // namespace

TEST(Alarm, TransitionTable) {
  const auto th = high_only();
  struct Row {
    AlarmLevel from;
    bool acked;
    double value;
    AlarmLevel to;
  };
  const Row rows[] = {
      {AlarmLevel::normal, false, 10, AlarmLevel::normal},
      {AlarmLevel::normal, false, 20, AlarmLevel::warning},
      {AlarmLevel::normal, false, 30, AlarmLevel::alarm},
      {AlarmLevel::warning, false, 19, AlarmLevel::warning},  // inside hysteresis
      {AlarmLevel::warning, false, 18, AlarmLevel::warning},  // 18 == 20 - 2 still holds
      {AlarmLevel::warning, false, 17.9, AlarmLevel::normal},
      {AlarmLevel::warning, false, 31, AlarmLevel::alarm},
      {AlarmLevel::alarm, false, 0, AlarmLevel::alarm},  // latched until acked
      {AlarmLevel::alarm, true, 29, AlarmLevel::alarm},  // acked but not receded
      {AlarmLevel::alarm, true, 27.9, AlarmLevel::warning},
      {AlarmLevel::alarm, true, 5, AlarmLevel::normal},
  };
  for (const auto& r : rows) {
    AlarmState st;
    st.level = r.from;
    st.side = r.from == AlarmLevel::normal ? AlarmSide::none : AlarmSide::high;
    st.latched = r.from == AlarmLevel::alarm;
    st.acknowledged = r.acked;
    EXPECT_EQ(evaluate_alarm(st, r.value, th, 1).level, r.to)
        << to_string(r.from) << (r.acked ? "+ack" : "") << " @ " << r.value;
  }
}

TEST(Alarm, LowSideMirrorsHighSide) {
  Trace tr{{}, force_thresholds()};
  EXPECT_EQ(tr.feed(2000), AlarmLevel::warning);
  EXPECT_EQ(tr.st.side, AlarmSide::low);
  EXPECT_EQ(tr.feed(2060), AlarmLevel::warning);
  EXPECT_EQ(tr.feed(2071), AlarmLevel::normal);
  EXPECT_EQ(tr.feed(1700), AlarmLevel::alarm);
  EXPECT_TRUE(tr.st.latched);
}

TEST(Alarm, RaiseRecordsTickAndClearRequiresAck) {
  Trace tr{{}, high_only()};
  tr.feed(5);
  tr.feed(35);
  EXPECT_EQ(tr.st.raised_tick, 1);
  for (int i = 0; i < 10; ++i) tr.feed(0);
  EXPECT_EQ(tr.st.level, AlarmLevel::alarm);
  auto ack = acknowledge(tr.st, "op", tr.t);
  ASSERT_TRUE(ack.ok());
  tr.st = ack.state;
  EXPECT_EQ(tr.st.acknowledged_by, "op");
  EXPECT_EQ(tr.feed(0), AlarmLevel::normal);
  EXPECT_EQ(tr.st.cleared_tick, 12);
  EXPECT_FALSE(tr.st.latched);
}

TEST(Alarm, AckWithoutActiveAlarmIsRejected) {
  AlarmState st;
  EXPECT_EQ(acknowledge(st, "op", 0).error, AckError::no_active_alarm);
  st.level = AlarmLevel::warning;
  EXPECT_FALSE(acknowledge(st, "op", 0).ok());
}

TEST(Alarm, ReRaiseDropsOldAck) {
  Trace tr{{}, high_only()};
  tr.feed(35);
  tr.st = acknowledge(tr.st, "op", 1).state;
  tr.feed(21);  // recedes to warning
  EXPECT_EQ(tr.st.level, AlarmLevel::warning);
  tr.feed(40);
  EXPECT_EQ(tr.st.level, AlarmLevel::alarm);
  EXPECT_FALSE(tr.st.acknowledged);
}

TEST(Alarm, MatchesReferenceModelUnderRandomValuesAndAcks) {
  // Straightforward restatement of the rules for a high-only channel.
  struct Model {
    int level = 0;  // 0 normal, 1 warning, 2 alarm
    bool acked = false;
    void step(double v, double w, double a, double h) {
      auto cls = [&] { return v >= a ? 2 : v >= w ? 1 : 0; };
      if (level == 0) {
        level = cls();
      } else if (level == 1) {
        if (v >= a || v < w - h) level = cls();
      } else if (acked && v < a - h) {
        level = cls();
        acked = false;
      }
    }
  };
  const auto th = high_only();
  std::mt19937_64 gen(1234);
  std::uniform_real_distribution<double> val(0, 40);
  std::bernoulli_distribution ack_now(0.2), jump(0.1);
  for (int trace = 0; trace < 200; ++trace) {
    Model m;
    AlarmState st;
    double v = val(gen);
    for (Tick t = 0; t < 500; ++t) {
      v = jump(gen) ? val(gen) : std::clamp(v + std::normal_distribution<double>(0, 1.5)(gen), 0.0, 40.0);
      if (ack_now(gen)) {
        const auto r = acknowledge(st, "op", t);
        ASSERT_EQ(r.ok(), m.level == 2);
        if (r.ok()) {
          st = r.state;
          m.acked = true;
        }
      }
      const AlarmLevel before = st.level;
      st = evaluate_alarm(st, v, th, t);
      const int prev_level = m.level;
      m.step(v, th.high.warn, th.high.alarm, th.hysteresis);
      if (m.level == 2 && prev_level != 2) m.acked = false;
      ASSERT_EQ(static_cast<int>(st.level), m.level) << "trace " << trace << " tick " << t << " v " << v;
      ASSERT_EQ(st.acknowledged, m.acked);
      // A latched alarm never leaves without an ack.
      if (before == AlarmLevel::alarm && st.level != AlarmLevel::alarm) {
        ASSERT_TRUE(m.level != 2);
      }
      ASSERT_EQ(st.latched, st.level == AlarmLevel::alarm);
    }
  }
}

TEST(Thresholds, Validation) {
  auto t = high_only();
  t.hysteresis = 20;
  EXPECT_THROW(validate(t), std::invalid_argument);
  t = force_thresholds();
  t.low.warn = 3000;
  EXPECT_THROW(validate(t), std::invalid_argument);
  EXPECT_NO_THROW(validate(force_thresholds()));
}

// --- locks -------------------------------------------------------------------

TEST(Locks, LoadsSumExactlyForEveryMask) {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> f(0, 5000);
  for (int n = 1; n <= 3; ++n) {
    for (int mask = 0; mask < (1 << n) - 1; ++mask) {  // all-failed excluded
      LockAssembly a;
      a.n_locks = n;
      for (int i = 0; i < n; ++i) a.failed[i] = (mask >> i) & 1;
      for (int k = 0; k < 200; ++k) {
        const double total = f(gen);
        const auto loads = lock_loads(total, a);
        double sum = 0;
        for (std::size_t i = 0; i < loads.size(); ++i) {
          sum += loads[i];
          if (a.failed[i]) {
            EXPECT_EQ(loads[i], 0.0);
          }
        }
        ASSERT_EQ(sum, total) << "n " << n << " mask " << mask;
      }
    }
  }
}

TEST(Locks, SingleFailureToleranceAtDesignForce) {
  const double fd = 2250, cap = default_lock_capacity(fd);
  EXPECT_DOUBLE_EQ(cap, 1237.5);

  LockAssembly three;
  three.capacity_kn = cap;
  fail_lock(three, 0);
  const auto l3 = lock_loads(fd, three);
  EXPECT_DOUBLE_EQ(l3[1], 1125.0);
  EXPECT_DOUBLE_EQ(l3[2], 1125.0);
  EXPECT_TRUE(check_lock_capacity(l3, cap).ok());

  LockAssembly two;
  two.n_locks = 2;
  two.capacity_kn = cap;
  fail_lock(two, 1);
  const auto l2 = lock_loads(fd, two);
  EXPECT_DOUBLE_EQ(l2[0], 2250.0);
  const auto c = check_lock_capacity(l2, cap);
  ASSERT_EQ(c.overloaded.size(), 1u);
  EXPECT_EQ(c.overloaded[0], 0u);
}

TEST(Locks, LosingTheLastLockIsStructural) {
  LockAssembly a;
  a.n_locks = 2;
  fail_lock(a, 0);
  EXPECT_THROW(fail_lock(a, 1), StructuralFault);
  EXPECT_THROW((void)lock_loads(100, a), StructuralFault);
  EXPECT_THROW(fail_lock(a, 5), std::out_of_range);
}

TEST(Locks, CyclesSkipFailedLocks) {
  LockAssembly a;
  fail_lock(a, 2);
  cycle_locks(a);
  cycle_locks(a);
  EXPECT_EQ(a.cycles[0], 2u);
  EXPECT_EQ(a.cycles[2], 0u);
}

TEST(Duty, SlidingWindowOfTravel) {
  DutyMonitor d(3);
  EXPECT_DOUBLE_EQ(d.push(0.5, 1), 0.5);
  EXPECT_DOUBLE_EQ(d.push(-0.5, 1), 1.0);
  EXPECT_DOUBLE_EQ(d.push(0.25, 2), 1.5);
  EXPECT_DOUBLE_EQ(d.push(0, 1), 1.0);
}

TEST(EStop, LatchesIdempotentlyAndResetRestores) {
  EmergencyStop e;
  std::vector<ControlMode> modes{ForceHold{2250, 112.5}, Manual{0.2}};
  emergency_stop(e, modes);
  EXPECT_TRUE(is_locked(modes[0]) && is_locked(modes[1]));
  emergency_stop(e, modes);  // second press keeps the first save
  ASSERT_TRUE(reset_emergency_stop(e, modes));
  EXPECT_TRUE(std::holds_alternative<ForceHold>(modes[0]));
  EXPECT_EQ(std::get<Manual>(modes[1]).jog_rate_mm_per_s, 0.2);
  EXPECT_FALSE(reset_emergency_stop(e, modes));
}
