#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "strutservo/control.hpp"
#include "strutservo/sensors.hpp"

namespace strutservo {

// --- alarm state machine ---------------------------------------------------

enum class AlarmLevel { normal, warning, alarm };
enum class AlarmDirection { high, low, both };
enum class AlarmSide { none, high, low };
enum class AlarmChannel { force, displacement, temperature, duty };

inline constexpr std::array<AlarmChannel, 4> kAlarmChannels{AlarmChannel::force, AlarmChannel::displacement,
                                                            AlarmChannel::temperature, AlarmChannel::duty};

[[nodiscard]] constexpr std::string_view to_string(AlarmLevel l) noexcept {
  switch (l) {
    case AlarmLevel::normal: return "normal";
    case AlarmLevel::warning: return "warning";
    case AlarmLevel::alarm: return "alarm";
  }
  return "?";
}

[[nodiscard]] constexpr std::string_view to_string(AlarmChannel c) noexcept {
  switch (c) {
    case AlarmChannel::force: return "force";
    case AlarmChannel::displacement: return "displacement";
    case AlarmChannel::temperature: return "temperature";
    case AlarmChannel::duty: return "duty";
  }
  return "?";
}

[[nodiscard]] inline std::optional<AlarmChannel> parse_alarm_channel(std::string_view s) noexcept {
  for (AlarmChannel c : kAlarmChannels)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

[[nodiscard]] inline std::optional<AlarmLevel> parse_alarm_level(std::string_view s) noexcept {
  for (AlarmLevel l : {AlarmLevel::normal, AlarmLevel::warning, AlarmLevel::alarm})
    if (to_string(l) == s) return l;
  return std::nullopt;
}

struct LevelPair {
  double warn = 0.0;
  double alarm = 0.0;
};

struct ChannelThresholds {
  AlarmDirection direction = AlarmDirection::high;
  LevelPair high{};
  LevelPair low{};
  double hysteresis = 1.0;
};

inline void validate(const ChannelThresholds& t) {
  const bool hi = t.direction != AlarmDirection::low;
  const bool lo = t.direction != AlarmDirection::high;
  if (!(t.hysteresis > 0)) throw std::invalid_argument("hysteresis: must be > 0");
  if (hi) {
    if (!(t.high.warn < t.high.alarm)) throw std::invalid_argument("high: warn must be below alarm");
    if (!(t.hysteresis < t.high.alarm - t.high.warn))
      throw std::invalid_argument("hysteresis: must be smaller than the high warn/alarm gap");
  }
  if (lo) {
    if (!(t.low.warn > t.low.alarm)) throw std::invalid_argument("low: warn must be above alarm");
    if (!(t.hysteresis < t.low.warn - t.low.alarm))
      throw std::invalid_argument("hysteresis: must be smaller than the low warn/alarm gap");
  }
  if (hi && lo && !(t.low.warn < t.high.warn)) throw std::invalid_argument("low.warn must be below high.warn");
}

struct AlarmState {
  AlarmChannel channel = AlarmChannel::force;
  AlarmLevel level = AlarmLevel::normal;
  AlarmSide side = AlarmSide::none;
  bool latched = false;
  bool acknowledged = false;
  std::optional<Tick> raised_tick;
  std::optional<Tick> cleared_tick;
  std::string acknowledged_by;
  friend bool operator==(const AlarmState&, const AlarmState&) = default;
};

struct Classification {
  AlarmLevel level = AlarmLevel::normal;
  AlarmSide side = AlarmSide::none;
};

/// Level implied by the entry thresholds alone, ignoring history.
[[nodiscard]] inline Classification classify(double v, const ChannelThresholds& t) noexcept {
  const bool hi = t.direction != AlarmDirection::low;
  const bool lo = t.direction != AlarmDirection::high;
  if (hi && v >= t.high.alarm) return {AlarmLevel::alarm, AlarmSide::high};
  if (lo && v <= t.low.alarm) return {AlarmLevel::alarm, AlarmSide::low};
  if (hi && v >= t.high.warn) return {AlarmLevel::warning, AlarmSide::high};
  if (lo && v <= t.low.warn) return {AlarmLevel::warning, AlarmSide::low};
  return {};
}

/// True while `v` has not receded `hysteresis` past `level` on `side`.
[[nodiscard]] inline bool holds(double v, double level, double hysteresis, AlarmSide side) noexcept {
  return side == AlarmSide::high ? v >= level - hysteresis : v <= level + hysteresis;
}

/// One transition at most per call. Warnings auto-clear with hysteresis;
/// alarms latch and clear only once the value has receded past
/// alarm - hysteresis and the alarm has been acknowledged.
[[nodiscard]] inline AlarmState evaluate_alarm(AlarmState prev, double value, const ChannelThresholds& t, Tick tick) {
  const Classification c = classify(value, t);
  AlarmState next = prev;
  auto level_on = [&](AlarmSide side) -> const LevelPair& { return side == AlarmSide::high ? t.high : t.low; };

  auto enter = [&](Classification to) {
    const bool from_normal = prev.level == AlarmLevel::normal;
    next.level = to.level;
    next.side = to.side;
    if (to.level == AlarmLevel::alarm) {
      next.latched = true;
      next.acknowledged = false;
      next.acknowledged_by.clear();
      next.raised_tick = tick;
      next.cleared_tick.reset();
    } else if (to.level == AlarmLevel::warning) {
      next.latched = false;
      next.acknowledged = false;
      next.acknowledged_by.clear();
      if (from_normal) {
        next.raised_tick = tick;
        next.cleared_tick.reset();
      }
    } else {
      next.side = AlarmSide::none;
      next.latched = false;
      next.acknowledged = false;
      next.acknowledged_by.clear();
      next.cleared_tick = tick;
    }
  };

  switch (prev.level) {
    case AlarmLevel::normal:
      if (c.level != AlarmLevel::normal) enter(c);
      break;
    case AlarmLevel::warning:
      if (c.level == AlarmLevel::alarm) {
        enter(c);
      } else if (!holds(value, level_on(prev.side).warn, t.hysteresis, prev.side)) {
        enter(c);
      }
      break;
    case AlarmLevel::alarm:
      if (prev.acknowledged && !holds(value, level_on(prev.side).alarm, t.hysteresis, prev.side)) enter(c);
      break;
  }
  return next;
}

enum class AckError { none, no_active_alarm };

struct AckResult {
  AlarmState state;
  AckError error = AckError::none;
  [[nodiscard]] bool ok() const noexcept { return error == AckError::none; }
};

[[nodiscard]] inline AckResult acknowledge(AlarmState st, std::string_view operator_id, Tick /*tick*/) {
  if (st.level != AlarmLevel::alarm) return {st, AckError::no_active_alarm};
  st.acknowledged = true;
  st.acknowledged_by = operator_id;
  return {st, AckError::none};
}

// --- triple-lock head assembly ---------------------------------------------

class StructuralFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LockAssembly {
  int n_locks = 3;
  double capacity_kn = 1237.5;
  std::array<bool, 3> failed{};
  std::array<bool, 3> engaged{true, true, true};
  std::array<std::uint64_t, 3> cycles{};

  [[nodiscard]] int failed_count() const noexcept {
    int n = 0;
    for (int i = 0; i < n_locks; ++i) n += failed[i] ? 1 : 0;
    return n;
  }
  [[nodiscard]] bool carrying(int i) const noexcept { return !failed[i] && engaged[i]; }
};

inline void validate(const LockAssembly& a) {
  if (a.n_locks < 1 || a.n_locks > 3) throw std::invalid_argument("n_locks: must be 1..3");
  if (!(a.capacity_kn > 0)) throw std::invalid_argument("capacity_kn: must be > 0");
  if (a.failed_count() >= a.n_locks) throw std::invalid_argument("failed: at least one lock must remain");
}

/// Equal share across carrying locks. The last carrier takes the remainder,
/// so the loads sum to `total_force_kn` exactly.
[[nodiscard]] inline std::vector<double> lock_loads(double total_force_kn, const LockAssembly& a) {
  std::vector<double> loads(static_cast<std::size_t>(a.n_locks), 0.0);
  int carriers = 0;
  int last = -1;
  for (int i = 0; i < a.n_locks; ++i)
    if (a.carrying(i)) {
      ++carriers;
      last = i;
    }
  if (carriers == 0) throw StructuralFault("no lock left to carry the strut force");
  const double share = total_force_kn / carriers;
  double assigned = 0.0;
  for (int i = 0; i < last; ++i)
    if (a.carrying(i)) {
      loads[i] = share;
      assigned += share;
    }
  loads[last] = total_force_kn - assigned;
  return loads;
}

struct CapacityCheck {
  std::vector<std::size_t> overloaded;
  [[nodiscard]] bool ok() const noexcept { return overloaded.empty(); }
};

[[nodiscard]] inline CapacityCheck check_lock_capacity(std::span<const double> loads, double capacity_kn) {
  CapacityCheck c;
  for (std::size_t i = 0; i < loads.size(); ++i)
    if (loads[i] > capacity_kn) c.overloaded.push_back(i);
  return c;
}

/// Sizing rule used by default: 0.55 * F_design per lock.
[[nodiscard]] constexpr double default_lock_capacity(double design_force_kn) noexcept {
  return 0.55 * design_force_kn;
}

/// Marks lock `index` failed. Throws StructuralFault if it was the last one.
inline void fail_lock(LockAssembly& a, int index) {
  if (index < 0 || index >= a.n_locks) throw std::out_of_range("lock index");
  a.failed[index] = true;
  if (a.failed_count() >= a.n_locks) throw StructuralFault("all locks failed");
}

/// A disengage/re-engage cycle on every healthy lock.
inline void cycle_locks(LockAssembly& a) noexcept {
  for (int i = 0; i < a.n_locks; ++i)
    if (!a.failed[i]) ++a.cycles[i];
}

// --- pump duty (overcurrent surrogate) ---------------------------------------

/// Sum of |command| * dt over a sliding window of ticks (mm of travel).
class DutyMonitor {
 public:
  explicit DutyMonitor(std::size_t window_ticks = 60) : window_(window_ticks) {}

  double push(double command_mm_per_s, double dt_s) {
    travel_.push_back(std::abs(command_mm_per_s) * dt_s);
    if (travel_.size() > window_) travel_.pop_front();
    return value();
  }
  [[nodiscard]] double value() const noexcept { return std::accumulate(travel_.begin(), travel_.end(), 0.0); }

 private:
  std::size_t window_;
  std::deque<double> travel_;
};

// --- emergency stop ----------------------------------------------------------

struct EmergencyStop {
  bool engaged = false;
  std::vector<ControlMode> saved_modes;
};

/// Latches every loop to Locked. Idempotent: a second stop keeps the modes
/// saved by the first.
inline void emergency_stop(EmergencyStop& estop, std::span<ControlMode> modes) {
  if (!estop.engaged) estop.saved_modes.assign(modes.begin(), modes.end());
  estop.engaged = true;
  for (auto& m : modes) m = Locked{};
}

/// Explicit release; restores the pre-stop modes. Returns false if not stopped.
inline bool reset_emergency_stop(EmergencyStop& estop, std::span<ControlMode> modes) {
  if (!estop.engaged) return false;
  for (std::size_t i = 0; i < modes.size() && i < estop.saved_modes.size(); ++i) modes[i] = estop.saved_modes[i];
  estop.engaged = false;
  estop.saved_modes.clear();
  return true;
}

}  // namespace strutservo
