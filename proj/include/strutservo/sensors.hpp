#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "strutservo/plant.hpp"
#include "strutservo/rng.hpp"

namespace strutservo {

using Tick = std::int64_t;

enum class SensorKind { force, displacement, temperature };
enum class ReadingStatus { ok, out_of_range, stale };
enum class FaultKind { stuck, dropout, drift };

[[nodiscard]] constexpr std::string_view to_string(SensorKind k) noexcept {
  switch (k) {
    case SensorKind::force: return "force";
    case SensorKind::displacement: return "displacement";
    case SensorKind::temperature: return "temperature";
  }
  return "?";
}

[[nodiscard]] constexpr std::string_view to_string(ReadingStatus s) noexcept {
  switch (s) {
    case ReadingStatus::ok: return "ok";
    case ReadingStatus::out_of_range: return "out_of_range";
    case ReadingStatus::stale: return "stale";
  }
  return "?";
}

[[nodiscard]] constexpr std::string_view to_string(FaultKind k) noexcept {
  switch (k) {
    case FaultKind::stuck: return "stuck";
    case FaultKind::dropout: return "dropout";
    case FaultKind::drift: return "drift";
  }
  return "?";
}

struct SensorSpec {
  SensorKind kind = SensorKind::force;
  double noise_sigma = 0.0;
  double bias = 0.0;
  double quantum = 0.0;
  Interval range{-1e9, 1e9};
  int period_ticks = 1;
};

inline void validate(const SensorSpec& s) {
  if (!(s.noise_sigma >= 0)) throw std::invalid_argument("noise_sigma: must be >= 0");
  if (!(s.quantum >= 0)) throw std::invalid_argument("quantum: must be >= 0");
  if (!(s.range.lo < s.range.hi)) throw std::invalid_argument("range: lo must be < hi");
  if (s.period_ticks < 1) throw std::invalid_argument("period_ticks: must be >= 1");
}

/// Default specs for the standard channels; `design_force_kn` scales the force range.
[[nodiscard]] inline SensorSpec default_sensor_spec(SensorKind kind, double design_force_kn) {
  switch (kind) {
    case SensorKind::force: return {kind, 2.0, 0.0, 0.0, {-100.0, 3.0 * design_force_kn}, 1};
    case SensorKind::displacement: return {kind, 0.05, 0.0, 0.0, {-100.0, 200.0}, 1};
    case SensorKind::temperature: return {kind, 0.1, 0.0, 0.0, {-40.0, 80.0}, 1};
  }
  return {};
}

struct Channel {
  std::string strut_id;
  SensorKind kind = SensorKind::force;
  friend bool operator==(const Channel&, const Channel&) = default;
};

struct Reading {
  Tick tick = 0;
  Channel channel;
  double value = 0.0;
  ReadingStatus status = ReadingStatus::ok;
  friend bool operator==(const Reading&, const Reading&) = default;

  [[nodiscard]] bool fresh() const noexcept { return status == ReadingStatus::ok; }
};

struct SensorFault {
  FaultKind kind = FaultKind::stuck;
  Tick start_tick = 0;
  Tick end_tick = 0;
  double magnitude = 0.0;  // drift rate, units per second

  [[nodiscard]] bool active(Tick t) const noexcept { return t >= start_tick && t <= end_tick; }
};

/// Round to the nearest multiple of `quantum`, ties to even. quantum == 0 is identity.
[[nodiscard]] inline double quantize(double x, double quantum) noexcept {
  if (quantum == 0.0) return x;
  return std::nearbyint(x / quantum) * quantum;
}

[[nodiscard]] inline Reading sample(const SensorSpec& spec, const Channel& channel, double true_value, Tick tick,
                                    RngStream& rng) {
  if (tick % spec.period_ticks != 0)
    throw std::logic_error("sample: tick " + std::to_string(tick) + " not aligned to period");
  // Always draw, so a channel's stream position depends only on its sample count.
  const double noise = rng.normal() * spec.noise_sigma;
  Reading r;
  r.tick = tick;
  r.channel = channel;
  r.value = quantize(true_value + spec.bias + noise, spec.quantum);
  r.status = spec.range.contains(r.value) ? ReadingStatus::ok : ReadingStatus::out_of_range;
  return r;
}

/// Applies an active fault. A stuck sensor repeats the last good frame as-is,
/// sample tick included, so its age keeps growing until validate() flags it.
[[nodiscard]] inline Reading apply_fault(const Reading& reading, const SensorFault& fault,
                                         const std::optional<Reading>& last_good, double tick_seconds) {
  Reading r = reading;
  switch (fault.kind) {
    case FaultKind::stuck:
      if (last_good) {
        r.value = last_good->value;
        r.tick = last_good->tick;
      } else {
        r.status = ReadingStatus::stale;
      }
      break;
    case FaultKind::dropout:
      r.status = ReadingStatus::stale;
      break;
    case FaultKind::drift:
      r.value += fault.magnitude * static_cast<double>(reading.tick - fault.start_tick) * tick_seconds;
      break;
  }
  return r;
}

/// Ages and range-checks a reading. The value is never modified; the
/// staleness limit is inclusive (age == limit is still ok).
[[nodiscard]] inline Reading validate(Reading reading, const Interval& range, Tick staleness_limit_ticks,
                                      Tick now_tick) noexcept {
  if (reading.status == ReadingStatus::stale) return reading;
  if (now_tick - reading.tick > staleness_limit_ticks) {
    reading.status = ReadingStatus::stale;
  } else if (!range.contains(reading.value) || !std::isfinite(reading.value)) {
    reading.status = ReadingStatus::out_of_range;
  } else {
    reading.status = ReadingStatus::ok;
  }
  return reading;
}

/// Runtime state of one physical sensor: spec, rng substream, held frame.
class SensorChannel {
 public:
  SensorChannel() = default;
  SensorChannel(Channel channel, SensorSpec spec, std::uint64_t seed, std::vector<SensorFault> faults = {})
      : channel_(std::move(channel)),
        spec_(spec),
        rng_(seed, channel_.strut_id + "/" + std::string(to_string(channel_.kind))),
        faults_(std::move(faults)) {}

  /// Produces the validated reading seen by the rest of the system at `tick`.
  Reading read(double true_value, Tick tick, Tick staleness_limit_ticks, double tick_seconds) {
    Reading raw = held_.value_or(Reading{tick, channel_, true_value, ReadingStatus::stale});
    bool faulted = false;
    if (tick % spec_.period_ticks == 0) {
      raw = sample(spec_, channel_, true_value, tick, rng_);
      for (const auto& f : faults_) {
        if (!f.active(tick)) continue;
        raw = apply_fault(raw, f, last_good_, tick_seconds);
        faulted = true;
      }
      held_ = raw;
    }
    Reading v = validate(raw, spec_.range, staleness_limit_ticks, tick);
    if (!faulted && v.fresh() && v.tick == tick) last_good_ = v;
    return v;
  }

  void add_fault(const SensorFault& f) { faults_.push_back(f); }

  [[nodiscard]] bool fault_active(Tick t) const noexcept {
    for (const auto& f : faults_)
      if (f.active(t)) return true;
    return false;
  }
  [[nodiscard]] const std::vector<SensorFault>& faults() const noexcept { return faults_; }
  [[nodiscard]] const SensorSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] const Channel& channel() const noexcept { return channel_; }
  [[nodiscard]] const RngStream& rng() const noexcept { return rng_; }

 private:
  Channel channel_;
  SensorSpec spec_;
  RngStream rng_;
  std::vector<SensorFault> faults_;
  std::optional<Reading> held_;
  std::optional<Reading> last_good_;
};

}  // namespace strutservo
