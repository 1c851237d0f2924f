#pragma once

// Declarative experiment description and its strict JSON loader.
// Field reference and defaults: docs/scenario.md.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "strutservo/command.hpp"
#include "strutservo/control.hpp"
#include "strutservo/plant.hpp"
#include "strutservo/safety.hpp"
#include "strutservo/sensors.hpp"

namespace strutservo {

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  [[nodiscard]] const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct Envelope {
  Interval force_setpoint_kn{500.0, 2700.0};
  Interval displacement_setpoint_mm{-20.0, 50.0};
  double max_stage_increment_kn = 2000.0;
  double max_temp_ramp_c = 30.0;
  std::int64_t max_ramp_ticks = 100000;
};

struct StrutConfig {
  std::string id;
  StrutParams strut;
  SoilParams soil;
  double prestress_kn = 2250.0;
  std::array<SensorSpec, 3> sensors{};  // indexed by SensorKind
  ControllerConfig controller;
  std::string initial_mode = "force_hold";
  double force_setpoint_kn = 2250.0;
  double displacement_setpoint_mm = 0.0;
  double deadband_fraction = 0.05;
  double displacement_deadband_mm = 0.5;
  double retract_limit_fraction = 1.2;
  double jog_rate_mm_per_s = 0.0;
  std::array<ChannelThresholds, 4> thresholds{};  // indexed by AlarmChannel
  LockAssembly locks;
  Envelope envelope;

  [[nodiscard]] const SensorSpec& sensor(SensorKind k) const { return sensors[static_cast<int>(k)]; }
  [[nodiscard]] const ChannelThresholds& threshold(AlarmChannel c) const { return thresholds[static_cast<int>(c)]; }
  [[nodiscard]] double force_deadband_kn(double setpoint_kn) const { return deadband_fraction * setpoint_kn; }
};

struct StageEvent {
  Tick tick = 0;
  std::vector<std::string> struts;
  double increment_kn = 0.0;
};

struct TemperaturePoint {
  Tick tick = 0;
  double ambient_c = 20.0;
};

struct FaultEvent {
  std::string strut;
  SensorKind sensor = SensorKind::force;
  SensorFault fault;
};

struct LockFaultEvent {
  Tick tick = 0;
  std::string strut;
  int lock = 0;
};

struct Scenario {
  std::string name = "unnamed";
  std::string description;
  double dt_s = 1.0;
  Tick duration_ticks = 600;
  std::uint64_t seed = 1;
  std::vector<StrutConfig> struts;
  std::vector<std::vector<double>> coupling;  // empty == identity
  std::vector<StageEvent> stages;
  std::vector<TemperaturePoint> temperature_profile;
  std::vector<FaultEvent> faults;
  std::vector<LockFaultEvent> lock_faults;
  std::vector<AppliedCommand> command_script;
  Tick staleness_limit_ticks = 3;
  std::size_t duty_window_ticks = 60;
  std::string gateway_token = "strutservo";

  [[nodiscard]] const StrutConfig* find_strut(std::string_view id) const {
    for (const auto& s : struts)
      if (s.id == id) return &s;
    return nullptr;
  }
  [[nodiscard]] std::ptrdiff_t strut_index(std::string_view id) const {
    for (std::size_t i = 0; i < struts.size(); ++i)
      if (struts[i].id == id) return static_cast<std::ptrdiff_t>(i);
    return -1;
  }

  /// Ambient temperature at `tick`, linear between profile points, held flat outside.
  [[nodiscard]] double ambient_at(Tick tick) const {
    if (temperature_profile.empty()) return 20.0;
    if (tick <= temperature_profile.front().tick) return temperature_profile.front().ambient_c;
    for (std::size_t i = 1; i < temperature_profile.size(); ++i) {
      const auto& a = temperature_profile[i - 1];
      const auto& b = temperature_profile[i];
      if (tick <= b.tick) {
        if (b.tick == a.tick) return b.ambient_c;
        const double f = static_cast<double>(tick - a.tick) / static_cast<double>(b.tick - a.tick);
        return a.ambient_c + f * (b.ambient_c - a.ambient_c);
      }
    }
    return temperature_profile.back().ambient_c;
  }
};

/// Default thresholds for a strut of the given design force.
[[nodiscard]] inline std::array<ChannelThresholds, 4> default_thresholds(double design_force_kn) {
  const double fd = design_force_kn;
  std::array<ChannelThresholds, 4> t{};
  t[static_cast<int>(AlarmChannel::force)] = {AlarmDirection::both, {1.1 * fd, 1.2 * fd}, {0.9 * fd, 0.8 * fd},
                                              0.02 * fd};
  t[static_cast<int>(AlarmChannel::displacement)] = {AlarmDirection::high, {20.0, 30.0}, {0.0, 0.0}, 2.0};
  t[static_cast<int>(AlarmChannel::temperature)] = {AlarmDirection::both, {45.0, 55.0}, {-5.0, -15.0}, 1.0};
  t[static_cast<int>(AlarmChannel::duty)] = {AlarmDirection::high, {15.0, 25.0}, {0.0, 0.0}, 1.0};
  return t;
}

[[nodiscard]] inline bool valid_identifier(std::string_view s) noexcept {
  if (s.empty() || s.size() > 64) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
           c == '.';
  });
}

namespace detail {

/// Strict object view: typed getters with defaults, unknown keys rejected.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ScenarioError(path_, "expected an object");
  }
  ~ObjectReader() = default;
  ObjectReader(const ObjectReader&) = delete;
  ObjectReader& operator=(const ObjectReader&) = delete;

  [[nodiscard]] std::string at(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const nlohmann::json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  double number(const char* key, double def) {
    const auto* v = find(key);
    if (!v) return def;
    if (!v->is_number()) throw ScenarioError(at(key), "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw ScenarioError(at(key), "must be finite");
    return d;
  }

  std::int64_t integer(const char* key, std::int64_t def) {
    const auto* v = find(key);
    if (!v) return def;
    if (!v->is_number_integer()) throw ScenarioError(at(key), "expected an integer");
    return v->get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const char* key, std::uint64_t def) {
    const auto* v = find(key);
    if (!v) return def;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v->get<std::int64_t>());
    throw ScenarioError(at(key), "expected a non-negative integer");
  }

  bool boolean(const char* key, bool def) {
    const auto* v = find(key);
    if (!v) return def;
    if (!v->is_boolean()) throw ScenarioError(at(key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(const char* key, std::string def) {
    const auto* v = find(key);
    if (!v) return def;
    if (!v->is_string()) throw ScenarioError(at(key), "expected a string");
    return v->get<std::string>();
  }

  Interval interval(const char* key, Interval def) {
    const auto* v = find(key);
    if (!v) return def;
    if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
      throw ScenarioError(at(key), "expected [min, max]");
    return {(*v)[0].get<double>(), (*v)[1].get<double>()};
  }

  const nlohmann::json* array(const char* key) {
    const auto* v = find(key);
    if (v && !v->is_array()) throw ScenarioError(at(key), "expected an array");
    return v;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ScenarioError(at(it.key()), "unknown field");
  }

  [[nodiscard]] const std::string& path() const noexcept { return path_; }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

template <class F>
void checked(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    // Field-level messages come back as "field: why".
    const auto colon = msg.find(": ");
    if (colon != std::string::npos && msg.find(' ') > colon)
      throw ScenarioError(path + "." + msg.substr(0, colon), msg.substr(colon + 2));
    throw ScenarioError(path, msg);
  }
}

inline void read_strut_params(ObjectReader& r, StrutParams& p) {
  p.length_mm = r.number("length_mm", p.length_mm);
  p.axial_stiffness_kn_per_mm = r.number("axial_stiffness_kn_per_mm", p.axial_stiffness_kn_per_mm);
  p.thermal_coeff_per_c = r.number("thermal_coeff_per_c", p.thermal_coeff_per_c);
  p.jack_stroke_mm = r.interval("jack_stroke_mm", p.jack_stroke_mm);
  p.jack_rate_limit_mm_per_s = r.number("jack_rate_limit_mm_per_s", p.jack_rate_limit_mm_per_s);
  p.design_force_kn = r.number("design_force_kn", p.design_force_kn);
  p.thermal_time_constant_s = r.number("thermal_time_constant_s", p.thermal_time_constant_s);
  r.finish();
}

inline void read_soil_params(ObjectReader& r, SoilParams& s) {
  s.driving_load_kn = r.number("driving_load_kn", s.driving_load_kn);
  s.soil_stiffness_kn_per_mm = r.number("soil_stiffness_kn_per_mm", s.soil_stiffness_kn_per_mm);
  s.load_bounds_kn = r.interval("load_bounds_kn", s.load_bounds_kn);
  s.wall_time_constant_s = r.number("wall_time_constant_s", s.wall_time_constant_s);
  r.finish();
}

inline void read_sensor(ObjectReader& r, SensorSpec& s) {
  s.noise_sigma = r.number("noise_sigma", s.noise_sigma);
  s.bias = r.number("bias", s.bias);
  s.quantum = r.number("quantum", s.quantum);
  s.range = r.interval("range", s.range);
  s.period_ticks = static_cast<int>(r.integer("period_ticks", s.period_ticks));
  r.finish();
  checked(r.path(), [&] { validate(s); });
}

inline void read_gains(ObjectReader& r, PidGains& g) {
  g.kp = r.number("kp", g.kp);
  g.ki = r.number("ki", g.ki);
  g.kd = r.number("kd", g.kd);
  g.integral_limit = r.number("integral_limit", g.integral_limit);
  g.output_limit = r.number("output_limit", g.output_limit);
  g.derivative_filter_alpha = r.number("derivative_filter_alpha", g.derivative_filter_alpha);
  r.finish();
  checked(r.path(), [&] { validate(g); });
}

inline AlarmDirection parse_direction(const std::string& s, const std::string& path) {
  if (s == "high") return AlarmDirection::high;
  if (s == "low") return AlarmDirection::low;
  if (s == "both") return AlarmDirection::both;
  throw ScenarioError(path, "expected high, low or both");
}

inline void read_level_pair(ObjectReader& r, LevelPair& p) {
  p.warn = r.number("warn", p.warn);
  p.alarm = r.number("alarm", p.alarm);
  r.finish();
}

inline void read_channel_thresholds(ObjectReader& r, ChannelThresholds& t) {
  if (const auto* d = r.find("direction")) {
    if (!d->is_string()) throw ScenarioError(r.at("direction"), "expected a string");
    t.direction = parse_direction(d->get<std::string>(), r.at("direction"));
  }
  if (const auto* h = r.find("high")) {
    ObjectReader hr(*h, r.at("high"));
    read_level_pair(hr, t.high);
  }
  if (const auto* l = r.find("low")) {
    ObjectReader lr(*l, r.at("low"));
    read_level_pair(lr, t.low);
  }
  t.hysteresis = r.number("hysteresis", t.hysteresis);
  r.finish();
}

inline void read_thresholds(const nlohmann::json& j, const std::string& path, std::array<ChannelThresholds, 4>& t) {
  ObjectReader r(j, path);
  for (AlarmChannel c : kAlarmChannels) {
    const std::string key(to_string(c));
    if (const auto* v = r.find(key.c_str())) {
      ObjectReader cr(*v, r.at(key));
      read_channel_thresholds(cr, t[static_cast<int>(c)]);
    }
  }
  r.finish();
}

inline void read_envelope(const nlohmann::json& j, const std::string& path, Envelope& e) {
  ObjectReader r(j, path);
  e.force_setpoint_kn = r.interval("force_setpoint_kn", e.force_setpoint_kn);
  e.displacement_setpoint_mm = r.interval("displacement_setpoint_mm", e.displacement_setpoint_mm);
  e.max_stage_increment_kn = r.number("max_stage_increment_kn", e.max_stage_increment_kn);
  e.max_temp_ramp_c = r.number("max_temp_ramp_c", e.max_temp_ramp_c);
  e.max_ramp_ticks = r.integer("max_ramp_ticks", e.max_ramp_ticks);
  r.finish();
  if (!(e.force_setpoint_kn.lo < e.force_setpoint_kn.hi)) throw ScenarioError(r.at("force_setpoint_kn"), "min must be < max");
  if (!(e.displacement_setpoint_mm.lo < e.displacement_setpoint_mm.hi))
    throw ScenarioError(r.at("displacement_setpoint_mm"), "min must be < max");
  if (!(e.max_stage_increment_kn > 0)) throw ScenarioError(r.at("max_stage_increment_kn"), "must be > 0");
  if (!(e.max_temp_ramp_c > 0)) throw ScenarioError(r.at("max_temp_ramp_c"), "must be > 0");
  if (e.max_ramp_ticks < 1) throw ScenarioError(r.at("max_ramp_ticks"), "must be >= 1");
}

inline bool parse_sensor_kind(std::string_view s, SensorKind& out) {
  for (SensorKind k : {SensorKind::force, SensorKind::displacement, SensorKind::temperature})
    if (to_string(k) == s) {
      out = k;
      return true;
    }
  return false;
}

inline void read_controller(ObjectReader& r, StrutConfig& sc) {
  sc.initial_mode = r.string("mode", sc.initial_mode);
  sc.force_setpoint_kn = r.number("force_setpoint_kn", sc.force_setpoint_kn);
  sc.displacement_setpoint_mm = r.number("displacement_setpoint_mm", sc.displacement_setpoint_mm);
  sc.deadband_fraction = r.number("deadband_fraction", sc.deadband_fraction);
  sc.displacement_deadband_mm = r.number("displacement_deadband_mm", sc.displacement_deadband_mm);
  sc.retract_limit_fraction = r.number("retract_limit_fraction", sc.retract_limit_fraction);
  sc.jog_rate_mm_per_s = r.number("jog_rate_mm_per_s", sc.jog_rate_mm_per_s);
  if (const auto* g = r.find("force_gains")) {
    ObjectReader gr(*g, r.at("force_gains"));
    read_gains(gr, sc.controller.force_gains);
  }
  if (const auto* g = r.find("displacement_gains")) {
    ObjectReader gr(*g, r.at("displacement_gains"));
    read_gains(gr, sc.controller.displacement_gains);
  }
  if (const auto* f = r.find("feedforward")) {
    ObjectReader fr(*f, r.at("feedforward"));
    auto& ff = sc.controller.feedforward;
    ff.enabled = fr.boolean("enabled", ff.enabled);
    ff.filter_time_constant_s = fr.number("filter_time_constant_s", ff.filter_time_constant_s);
    ff.update_threshold_mm = fr.number("update_threshold_mm", ff.update_threshold_mm);
    fr.finish();
    if (!(ff.filter_time_constant_s > 0)) throw ScenarioError(fr.at("filter_time_constant_s"), "must be > 0");
    if (!(ff.update_threshold_mm >= 0)) throw ScenarioError(fr.at("update_threshold_mm"), "must be >= 0");
  }
  r.finish();
  const std::string& m = sc.initial_mode;
  if (m != "force_hold" && m != "displacement_hold" && m != "manual" && m != "locked")
    throw ScenarioError(r.at("mode"), "expected force_hold, displacement_hold, manual or locked");
  if (!(sc.deadband_fraction >= 0 && sc.deadband_fraction < 1)) throw ScenarioError(r.at("deadband_fraction"), "must be in [0, 1)");
  if (!(sc.displacement_deadband_mm >= 0)) throw ScenarioError(r.at("displacement_deadband_mm"), "must be >= 0");
  if (!(sc.retract_limit_fraction > 1)) throw ScenarioError(r.at("retract_limit_fraction"), "must be > 1");
}

inline StrutConfig read_strut(const nlohmann::json& j, const std::string& path, const nlohmann::json* global_thresholds,
                              const nlohmann::json* global_envelope) {
  ObjectReader r(j, path);
  StrutConfig sc;
  sc.id = r.string("id", "");
  if (!valid_identifier(sc.id)) throw ScenarioError(r.at("id"), "expected an identifier [A-Za-z0-9_.-]+");

  if (const auto* p = r.find("strut")) {
    ObjectReader pr(*p, r.at("strut"));
    read_strut_params(pr, sc.strut);
  }
  checked(r.at("strut"), [&] { validate(sc.strut); });
  const double fd = sc.strut.design_force_kn;

  if (const auto* s = r.find("soil")) {
    ObjectReader sr(*s, r.at("soil"));
    read_soil_params(sr, sc.soil);
  }
  checked(r.at("soil"), [&] { validate(sc.soil); });

  sc.prestress_kn = r.number("prestress_kn", fd);
  sc.force_setpoint_kn = fd;

  for (SensorKind k : {SensorKind::force, SensorKind::displacement, SensorKind::temperature})
    sc.sensors[static_cast<int>(k)] = default_sensor_spec(k, fd);
  if (const auto* s = r.find("sensors")) {
    ObjectReader sr(*s, r.at("sensors"));
    for (SensorKind k : {SensorKind::force, SensorKind::displacement, SensorKind::temperature}) {
      const std::string key(to_string(k));
      if (const auto* v = sr.find(key.c_str())) {
        ObjectReader vr(*v, sr.at(key));
        read_sensor(vr, sc.sensors[static_cast<int>(k)]);
      }
    }
    sr.finish();
  }

  if (const auto* c = r.find("controller")) {
    ObjectReader cr(*c, r.at("controller"));
    read_controller(cr, sc);
  }
  sc.controller.limits.retract_limit_kn = sc.retract_limit_fraction * fd;

  sc.thresholds = default_thresholds(fd);
  if (global_thresholds) read_thresholds(*global_thresholds, "thresholds", sc.thresholds);
  if (const auto* t = r.find("thresholds")) read_thresholds(*t, r.at("thresholds"), sc.thresholds);
  for (AlarmChannel ch : kAlarmChannels)
    checked(r.at("thresholds") + "." + std::string(to_string(ch)),
            [&] { validate(sc.thresholds[static_cast<int>(ch)]); });

  sc.envelope.force_setpoint_kn = {0.2 * fd, sc.retract_limit_fraction * fd};
  if (global_envelope) read_envelope(*global_envelope, "envelope", sc.envelope);
  if (const auto* e = r.find("envelope")) read_envelope(*e, r.at("envelope"), sc.envelope);

  sc.locks.capacity_kn = default_lock_capacity(fd);
  if (const auto* l = r.find("locks")) {
    ObjectReader lr(*l, r.at("locks"));
    sc.locks.n_locks = static_cast<int>(lr.integer("n_locks", sc.locks.n_locks));
    sc.locks.capacity_kn = lr.number("capacity_kn", sc.locks.capacity_kn);
    if (sc.locks.n_locks < 1 || sc.locks.n_locks > 3) throw ScenarioError(lr.at("n_locks"), "must be 1..3");
    if (const auto* f = lr.array("failed")) {
      for (const auto& idx : *f) {
        if (!idx.is_number_integer() || idx.get<int>() < 0 || idx.get<int>() >= sc.locks.n_locks)
          throw ScenarioError(lr.at("failed"), "lock index out of range");
        sc.locks.failed[idx.get<int>()] = true;
      }
    }
    lr.finish();
  }
  checked(r.at("locks"), [&] { validate(sc.locks); });
  r.finish();

  if (!sc.envelope.force_setpoint_kn.contains(sc.force_setpoint_kn))
    throw ScenarioError(r.at("controller.force_setpoint_kn"), "outside envelope.force_setpoint_kn");
  if (!sc.envelope.displacement_setpoint_mm.contains(sc.displacement_setpoint_mm))
    throw ScenarioError(r.at("controller.displacement_setpoint_mm"), "outside envelope.displacement_setpoint_mm");
  if (std::abs(sc.jog_rate_mm_per_s) > sc.strut.jack_rate_limit_mm_per_s)
    throw ScenarioError(r.at("controller.jog_rate_mm_per_s"), "exceeds jack_rate_limit_mm_per_s");
  checked(path, [&] { (void)lock_off_state(sc.strut, sc.soil, sc.prestress_kn, 20.0); });
  return sc;
}

}  // namespace detail

/// Parses and fully validates a scenario document. Every failure names the
/// offending field path.
[[nodiscard]] inline Scenario load_scenario(std::string_view text) {
  using detail::ObjectReader;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError("<document>", std::string("parse error: ") + e.what());
  }

  ObjectReader r(doc, "");
  Scenario sc;
  sc.name = r.string("name", sc.name);
  if (!valid_identifier(sc.name)) throw ScenarioError("name", "expected an identifier [A-Za-z0-9_.-]+");
  sc.description = r.string("description", "");
  sc.dt_s = r.number("dt_s", sc.dt_s);
  if (!(sc.dt_s > 0)) throw ScenarioError("dt_s", "must be > 0");
  sc.duration_ticks = r.integer("duration_ticks", sc.duration_ticks);
  if (sc.duration_ticks < 1) throw ScenarioError("duration_ticks", "must be >= 1");
  sc.seed = r.unsigned_integer("seed", sc.seed);

  if (const auto* s = r.find("safety")) {
    ObjectReader sr(*s, "safety");
    sc.staleness_limit_ticks = sr.integer("staleness_limit_ticks", sc.staleness_limit_ticks);
    sc.duty_window_ticks = static_cast<std::size_t>(sr.integer("duty_window_ticks", 60));
    sr.finish();
    if (sc.staleness_limit_ticks < 0) throw ScenarioError("safety.staleness_limit_ticks", "must be >= 0");
    if (sc.duty_window_ticks < 1) throw ScenarioError("safety.duty_window_ticks", "must be >= 1");
  }
  if (const auto* g = r.find("gateway")) {
    ObjectReader gr(*g, "gateway");
    sc.gateway_token = gr.string("token", sc.gateway_token);
    gr.finish();
  }

  const auto* global_thresholds = r.find("thresholds");
  const auto* global_envelope = r.find("envelope");
  const auto* struts = r.array("struts");
  if (!struts || struts->empty()) throw ScenarioError("struts", "at least one strut is required");
  for (std::size_t i = 0; i < struts->size(); ++i) {
    const std::string path = "struts[" + std::to_string(i) + "]";
    StrutConfig s = detail::read_strut((*struts)[i], path, global_thresholds, global_envelope);
    if (sc.find_strut(s.id)) throw ScenarioError(path + ".id", "duplicate strut id '" + s.id + "'");
    sc.struts.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < sc.struts.size(); ++i)
    for (SensorKind k : {SensorKind::force, SensorKind::displacement, SensorKind::temperature})
      if (sc.struts[i].sensor(k).period_ticks - 1 > sc.staleness_limit_ticks)
        throw ScenarioError("struts[" + std::to_string(i) + "].sensors." + std::string(to_string(k)) + ".period_ticks",
                            "sampling period exceeds safety.staleness_limit_ticks + 1; readings would always be stale");

  if (const auto* c = r.array("coupling")) {
    const std::size_t n = sc.struts.size();
    if (c->size() != n) throw ScenarioError("coupling", "must be an n x n matrix over the struts");
    sc.coupling.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = (*c)[i];
      if (!row.is_array() || row.size() != n) throw ScenarioError("coupling[" + std::to_string(i) + "]", "row length must be n");
      for (std::size_t k = 0; k < n; ++k) {
        if (!row[k].is_number()) throw ScenarioError("coupling[" + std::to_string(i) + "]", "expected numbers");
        sc.coupling[i][k] = row[k].get<double>();
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k)
        if (sc.coupling[i][k] != sc.coupling[k][i]) throw ScenarioError("coupling", "matrix must be symmetric");
  }

  auto strut_ref = [&](const nlohmann::json& v, const std::string& path) {
    if (!v.is_string()) throw ScenarioError(path, "expected a strut id");
    std::string id = v.get<std::string>();
    if (!sc.find_strut(id)) throw ScenarioError(path, "unknown strut '" + id + "'");
    return id;
  };

  if (const auto* stages = r.array("stages")) {
    std::map<std::string, double> load;
    for (const auto& s : sc.struts) load[s.id] = s.soil.driving_load_kn;
    for (std::size_t i = 0; i < stages->size(); ++i) {
      const std::string path = "stages[" + std::to_string(i) + "]";
      ObjectReader sr((*stages)[i], path);
      StageEvent ev;
      ev.tick = sr.integer("tick", -1);
      if (ev.tick < 0) throw ScenarioError(sr.at("tick"), "required, must be >= 0");
      if (!sc.stages.empty() && ev.tick <= sc.stages.back().tick)
        throw ScenarioError(sr.at("tick"), "stage ticks must be strictly increasing");
      ev.increment_kn = sr.number("increment_kn", 0.0);
      const auto* ids = sr.array("struts");
      if (!ids || ids->empty()) throw ScenarioError(sr.at("struts"), "at least one strut id is required");
      for (std::size_t k = 0; k < ids->size(); ++k) {
        const auto id = strut_ref((*ids)[k], sr.at("struts") + "[" + std::to_string(k) + "]");
        if (std::find(ev.struts.begin(), ev.struts.end(), id) != ev.struts.end())
          throw ScenarioError(sr.at("struts"), "strut listed twice");
        ev.struts.push_back(id);
        load[id] += ev.increment_kn;
        if (!sc.find_strut(id)->soil.load_bounds_kn.contains(load[id]))
          throw ScenarioError(sr.at("increment_kn"), "cumulative driving load leaves load_bounds_kn for strut '" + id + "'");
      }
      sr.finish();
      sc.stages.push_back(std::move(ev));
    }
  }

  if (const auto* prof = r.array("temperature_profile")) {
    for (std::size_t i = 0; i < prof->size(); ++i) {
      const std::string path = "temperature_profile[" + std::to_string(i) + "]";
      ObjectReader pr((*prof)[i], path);
      TemperaturePoint p;
      p.tick = pr.integer("tick", -1);
      p.ambient_c = pr.number("ambient_c", 20.0);
      pr.finish();
      if (p.tick < 0) throw ScenarioError(pr.at("tick"), "required, must be >= 0");
      if (!sc.temperature_profile.empty() && p.tick < sc.temperature_profile.back().tick)
        throw ScenarioError(pr.at("tick"), "temperature profile ticks must be non-decreasing");
      sc.temperature_profile.push_back(p);
    }
  }

  if (const auto* faults = r.array("faults")) {
    for (std::size_t i = 0; i < faults->size(); ++i) {
      const std::string path = "faults[" + std::to_string(i) + "]";
      ObjectReader fr((*faults)[i], path);
      FaultEvent f;
      const auto* sid = fr.find("strut");
      if (!sid) throw ScenarioError(fr.at("strut"), "required");
      f.strut = strut_ref(*sid, fr.at("strut"));
      if (!detail::parse_sensor_kind(fr.string("sensor", ""), f.sensor))
        throw ScenarioError(fr.at("sensor"), "expected force, displacement or temperature");
      const std::string kind = fr.string("kind", "");
      if (kind == "stuck") f.fault.kind = FaultKind::stuck;
      else if (kind == "dropout") f.fault.kind = FaultKind::dropout;
      else if (kind == "drift") f.fault.kind = FaultKind::drift;
      else throw ScenarioError(fr.at("kind"), "expected stuck, dropout or drift");
      f.fault.start_tick = fr.integer("start_tick", 0);
      f.fault.end_tick = fr.integer("end_tick", sc.duration_ticks);
      f.fault.magnitude = fr.number("magnitude", 0.0);
      fr.finish();
      if (f.fault.start_tick < 0) throw ScenarioError(fr.at("start_tick"), "must be >= 0");
      if (f.fault.end_tick < f.fault.start_tick) throw ScenarioError(fr.at("end_tick"), "must be >= start_tick");
      sc.faults.push_back(f);
    }
  }

  if (const auto* lf = r.array("lock_faults")) {
    for (std::size_t i = 0; i < lf->size(); ++i) {
      const std::string path = "lock_faults[" + std::to_string(i) + "]";
      ObjectReader fr((*lf)[i], path);
      LockFaultEvent ev;
      ev.tick = fr.integer("tick", -1);
      const auto* sid = fr.find("strut");
      if (!sid) throw ScenarioError(fr.at("strut"), "required");
      ev.strut = strut_ref(*sid, fr.at("strut"));
      ev.lock = static_cast<int>(fr.integer("lock", -1));
      fr.finish();
      if (ev.tick < 0) throw ScenarioError(fr.at("tick"), "required, must be >= 0");
      if (ev.lock < 0 || ev.lock >= sc.find_strut(ev.strut)->locks.n_locks)
        throw ScenarioError(fr.at("lock"), "lock index out of range");
      sc.lock_faults.push_back(ev);
    }
  }

  if (const auto* script = r.array("command_script")) {
    for (std::size_t i = 0; i < script->size(); ++i) {
      const std::string path = "command_script[" + std::to_string(i) + "]";
      ObjectReader cr((*script)[i], path);
      AppliedCommand ac;
      ac.tick = cr.integer("tick", -1);
      if (ac.tick < 0) throw ScenarioError(cr.at("tick"), "required, must be >= 0");
      if (!sc.command_script.empty() && ac.tick < sc.command_script.back().tick)
        throw ScenarioError(cr.at("tick"), "command_script ticks must be non-decreasing");
      const auto* cmd = cr.find("command");
      if (!cmd || !cmd->is_object()) throw ScenarioError(cr.at("command"), "expected an object");
      Json full = Json::parse(cmd->dump());
      if (!full.contains("client_id")) full["client_id"] = "script";
      if (!full.contains("client_seq")) full["client_seq"] = static_cast<std::int64_t>(i + 1);
      try {
        ac.command = command_from_json(full);
      } catch (const MalformedCommand& e) {
        throw ScenarioError(cr.at("command"), e.what());
      }
      if (needs_strut(ac.command.kind) && !sc.find_strut(ac.command.strut_id))
        throw ScenarioError(cr.at("command.strut_id"), "unknown strut '" + ac.command.strut_id + "'");
      cr.finish();
      sc.command_script.push_back(std::move(ac));
    }
  }
  r.finish();
  return sc;
}

[[nodiscard]] inline Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("<file>", "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_scenario(ss.str());
}

}  // namespace strutservo
