#pragma once

// Fixed-timestep orchestrator. Each tick runs, in this order:
//   1. queued operator commands
//   2. scheduled items (stages, lock failures, fault onsets)
//   3. plant advance under the previous tick's actuation (skipped at tick 0)
//   4. sensor sampling and validation
//   5. alarms, lock loads, pump duty
//   6. supervisor + PID + feed-forward -> next actuation
//   7. one telemetry record
// The order is normative; changing it changes results.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "strutservo/command.hpp"
#include "strutservo/control.hpp"
#include "strutservo/plant.hpp"
#include "strutservo/safety.hpp"
#include "strutservo/scenario.hpp"
#include "strutservo/sensors.hpp"
#include "strutservo/telemetry.hpp"

namespace strutservo {

enum class RunStatus { running, stopped, finished, failed };

[[nodiscard]] constexpr std::string_view to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::running: return "running";
    case RunStatus::stopped: return "stopped";
    case RunStatus::finished: return "finished";
    case RunStatus::failed: return "failed";
  }
  return "?";
}

struct TempRamp {
  Tick start = 0;
  Tick duration = 1;
  double from_c = 0.0;
  double to_c = 0.0;

  [[nodiscard]] double offset_at(Tick t) const noexcept {
    if (t <= start) return from_c;
    if (t >= start + duration) return to_c;
    return from_c + (to_c - from_c) * static_cast<double>(t - start) / static_cast<double>(duration);
  }
};

struct StrutRuntime {
  PlantState plant;
  SoilParams soil;
  ControllerState ctrl;
  ControlMode mode = Locked{};
  double force_setpoint_kn = 0.0;
  double displacement_setpoint_mm = 0.0;
  std::array<SensorChannel, 3> sensors;
  std::array<Reading, 3> readings{};
  std::array<AlarmState, 4> alarms{};
  LockAssembly locks;
  DutyMonitor duty;
  std::vector<double> lock_loads;
  double command_mm_per_s = 0.0;  // applied during the next plant advance
  double error = 0.0;
  bool moving = false;
  bool overloaded = false;

  [[nodiscard]] const Reading& reading(SensorKind k) const { return readings[static_cast<int>(k)]; }
  [[nodiscard]] AlarmState& alarm(AlarmChannel c) { return alarms[static_cast<int>(c)]; }
  [[nodiscard]] const AlarmState& alarm(AlarmChannel c) const { return alarms[static_cast<int>(c)]; }
};

struct SimState {
  Tick tick = 0;  // next tick to execute == ticks executed so far
  std::vector<StrutRuntime> struts;
  EmergencyStop estop;
  TempRamp ramp;
  double ambient_c = 20.0;
  RunStatus status = RunStatus::running;
  std::string failure;
};

struct EngineEvent {
  Tick tick = 0;
  std::string tag;
};

struct StepResult {
  TelemetryRecord record;
  std::vector<AppliedCommand> applied;
};

// --- snapshot ----------------------------------------------------------------

struct AlarmSummary {
  AlarmLevel level = AlarmLevel::normal;
  bool latched = false;
  bool acknowledged = false;
  std::optional<Tick> raised_tick;
  friend bool operator==(const AlarmSummary&, const AlarmSummary&) = default;
};

struct StrutSnapshot {
  std::string id;
  double true_force_kn = 0.0;
  double true_disp_mm = 0.0;
  double temp_c = 0.0;
  double measured_force_kn = 0.0;
  double measured_disp_mm = 0.0;
  double measured_temp_c = 0.0;
  std::array<ReadingStatus, 3> statuses{};
  double jack_ext_mm = 0.0;
  double command_mm_per_s = 0.0;
  std::string mode;
  double force_setpoint_kn = 0.0;
  double displacement_setpoint_mm = 0.0;
  double driving_load_kn = 0.0;
  int stage_index = 0;
  std::array<AlarmSummary, 4> alarms{};
  std::vector<double> lock_loads_kn;
  std::vector<bool> lock_failed;
  std::vector<std::uint64_t> lock_cycles;
  friend bool operator==(const StrutSnapshot&, const StrutSnapshot&) = default;
};

/// Published view after `tick` ticks have executed.
struct StateSnapshot {
  Tick tick = 0;
  double time_s = 0.0;
  RunStatus run_status = RunStatus::running;
  bool estop = false;
  double ambient_c = 0.0;
  std::vector<StrutSnapshot> struts;
  friend bool operator==(const StateSnapshot&, const StateSnapshot&) = default;
};

[[nodiscard]] inline Json to_json(const StateSnapshot& s) {
  Json j;
  j["tick"] = s.tick;
  j["time_s"] = s.time_s;
  j["run_status"] = to_string(s.run_status);
  j["estop"] = s.estop;
  j["ambient_c"] = s.ambient_c;
  auto& arr = j["struts"] = Json::array();
  for (const auto& st : s.struts) {
    Json o;
    o["id"] = st.id;
    o["true_force_kn"] = st.true_force_kn;
    o["true_disp_mm"] = st.true_disp_mm;
    o["temp_c"] = st.temp_c;
    o["measured_force_kn"] = st.measured_force_kn;
    o["measured_disp_mm"] = st.measured_disp_mm;
    o["measured_temp_c"] = st.measured_temp_c;
    o["force_status"] = to_string(st.statuses[0]);
    o["disp_status"] = to_string(st.statuses[1]);
    o["temp_status"] = to_string(st.statuses[2]);
    o["jack_ext_mm"] = st.jack_ext_mm;
    o["command_mm_per_s"] = st.command_mm_per_s;
    o["mode"] = st.mode;
    o["force_setpoint_kn"] = st.force_setpoint_kn;
    o["displacement_setpoint_mm"] = st.displacement_setpoint_mm;
    o["driving_load_kn"] = st.driving_load_kn;
    o["stage_index"] = st.stage_index;
    auto& alarms = o["alarms"] = Json::object();
    for (AlarmChannel c : kAlarmChannels) {
      const auto& a = st.alarms[static_cast<int>(c)];
      Json aj;
      aj["level"] = to_string(a.level);
      aj["latched"] = a.latched;
      aj["acknowledged"] = a.acknowledged;
      aj["raised_tick"] = a.raised_tick ? Json(*a.raised_tick) : Json(nullptr);
      alarms[std::string(to_string(c))] = std::move(aj);
    }
    o["lock_loads_kn"] = st.lock_loads_kn;
    o["lock_failed"] = st.lock_failed;
    o["lock_cycles"] = st.lock_cycles;
    arr.push_back(std::move(o));
  }
  return j;
}

[[nodiscard]] inline StateSnapshot snapshot_from_json(const Json& j) {
  auto status = [](const std::string& s) {
    for (ReadingStatus r : {ReadingStatus::ok, ReadingStatus::out_of_range, ReadingStatus::stale})
      if (to_string(r) == s) return r;
    throw std::invalid_argument("bad reading status");
  };
  StateSnapshot s;
  s.tick = j.at("tick").get<Tick>();
  s.time_s = j.at("time_s").get<double>();
  const auto rs = j.at("run_status").get<std::string>();
  for (RunStatus r : {RunStatus::running, RunStatus::stopped, RunStatus::finished, RunStatus::failed})
    if (to_string(r) == rs) s.run_status = r;
  s.estop = j.at("estop").get<bool>();
  s.ambient_c = j.at("ambient_c").get<double>();
  for (const auto& o : j.at("struts")) {
    StrutSnapshot st;
    st.id = o.at("id").get<std::string>();
    st.true_force_kn = o.at("true_force_kn").get<double>();
    st.true_disp_mm = o.at("true_disp_mm").get<double>();
    st.temp_c = o.at("temp_c").get<double>();
    st.measured_force_kn = o.at("measured_force_kn").get<double>();
    st.measured_disp_mm = o.at("measured_disp_mm").get<double>();
    st.measured_temp_c = o.at("measured_temp_c").get<double>();
    st.statuses = {status(o.at("force_status")), status(o.at("disp_status")), status(o.at("temp_status"))};
    st.jack_ext_mm = o.at("jack_ext_mm").get<double>();
    st.command_mm_per_s = o.at("command_mm_per_s").get<double>();
    st.mode = o.at("mode").get<std::string>();
    st.force_setpoint_kn = o.at("force_setpoint_kn").get<double>();
    st.displacement_setpoint_mm = o.at("displacement_setpoint_mm").get<double>();
    st.driving_load_kn = o.at("driving_load_kn").get<double>();
    st.stage_index = o.at("stage_index").get<int>();
    for (AlarmChannel c : kAlarmChannels) {
      const auto& aj = o.at("alarms").at(std::string(to_string(c)));
      auto& a = st.alarms[static_cast<int>(c)];
      a.level = *parse_alarm_level(aj.at("level").get<std::string>());
      a.latched = aj.at("latched").get<bool>();
      a.acknowledged = aj.at("acknowledged").get<bool>();
      if (!aj.at("raised_tick").is_null()) a.raised_tick = aj.at("raised_tick").get<Tick>();
    }
    st.lock_loads_kn = o.at("lock_loads_kn").get<std::vector<double>>();
    st.lock_failed = o.at("lock_failed").get<std::vector<bool>>();
    st.lock_cycles = o.at("lock_cycles").get<std::vector<std::uint64_t>>();
    s.struts.push_back(std::move(st));
  }
  return s;
}

// --- initialisation ------------------------------------------------------------

[[nodiscard]] inline TelemetryLayout layout_of(const Scenario& sc) {
  TelemetryLayout l;
  for (const auto& s : sc.struts) l.struts.push_back({s.id, s.locks.n_locks});
  return l;
}

[[nodiscard]] inline ControlMode make_mode(std::string_view name, const StrutConfig& cfg, const StrutRuntime& rt) {
  if (name == "force_hold") return ForceHold{rt.force_setpoint_kn, cfg.force_deadband_kn(rt.force_setpoint_kn)};
  if (name == "displacement_hold") return DisplacementHold{rt.displacement_setpoint_mm, cfg.displacement_deadband_mm};
  if (name == "manual") return Manual{cfg.jog_rate_mm_per_s};
  if (name == "locked") return Locked{};
  throw std::invalid_argument("unknown mode '" + std::string(name) + "'");
}

[[nodiscard]] inline SimState initial_state(const Scenario& sc) {
  SimState sim;
  sim.ambient_c = sc.ambient_at(0);
  for (const auto& cfg : sc.struts) {
    StrutRuntime rt;
    rt.soil = cfg.soil;
    rt.plant = lock_off_state(cfg.strut, cfg.soil, cfg.prestress_kn, sim.ambient_c);
    rt.ctrl.ff_ref_temp_c = rt.plant.ref_temp_c;
    rt.ctrl.ff_filtered_temp_c = rt.plant.ref_temp_c;
    rt.force_setpoint_kn = cfg.force_setpoint_kn;
    rt.displacement_setpoint_mm = cfg.displacement_setpoint_mm;
    rt.mode = make_mode(cfg.initial_mode, cfg, rt);
    for (SensorKind k : {SensorKind::force, SensorKind::displacement, SensorKind::temperature}) {
      std::vector<SensorFault> faults;
      for (const auto& f : sc.faults)
        if (f.strut == cfg.id && f.sensor == k) faults.push_back(f.fault);
      rt.sensors[static_cast<int>(k)] = SensorChannel({cfg.id, k}, cfg.sensor(k), sc.seed, std::move(faults));
    }
    for (AlarmChannel c : kAlarmChannels) rt.alarm(c).channel = c;
    rt.locks = cfg.locks;
    rt.lock_loads = lock_loads(rt.plant.strut_force_kn, rt.locks);
    rt.duty = DutyMonitor(sc.duty_window_ticks);
    // Nothing sampled yet.
    for (int k = 0; k < 3; ++k)
      rt.readings[k] = {0, {cfg.id, static_cast<SensorKind>(k)}, 0.0, ReadingStatus::stale};
    sim.struts.push_back(std::move(rt));
  }
  return sim;
}

[[nodiscard]] inline StateSnapshot snapshot(const SimState& sim, const Scenario& sc) {
  StateSnapshot s;
  s.tick = sim.tick;
  s.time_s = static_cast<double>(sim.tick) * sc.dt_s;
  s.run_status = sim.status;
  s.estop = sim.estop.engaged;
  s.ambient_c = sim.ambient_c;
  for (std::size_t i = 0; i < sim.struts.size(); ++i) {
    const auto& rt = sim.struts[i];
    StrutSnapshot st;
    st.id = sc.struts[i].id;
    st.true_force_kn = rt.plant.strut_force_kn;
    st.true_disp_mm = rt.plant.wall_disp_mm;
    st.temp_c = rt.plant.temp_c;
    st.measured_force_kn = rt.reading(SensorKind::force).value;
    st.measured_disp_mm = rt.reading(SensorKind::displacement).value;
    st.measured_temp_c = rt.reading(SensorKind::temperature).value;
    for (int k = 0; k < 3; ++k) st.statuses[k] = rt.readings[k].status;
    st.jack_ext_mm = rt.plant.jack_ext_mm;
    st.command_mm_per_s = rt.command_mm_per_s;
    st.mode = std::string(mode_name(rt.mode));
    st.force_setpoint_kn = rt.force_setpoint_kn;
    st.displacement_setpoint_mm = rt.displacement_setpoint_mm;
    st.driving_load_kn = rt.soil.driving_load_kn;
    st.stage_index = rt.plant.stage_index;
    for (AlarmChannel c : kAlarmChannels) {
      const auto& a = rt.alarm(c);
      st.alarms[static_cast<int>(c)] = {a.level, a.latched, a.acknowledged, a.raised_tick};
    }
    st.lock_loads_kn = rt.lock_loads;
    for (int k = 0; k < rt.locks.n_locks; ++k) {
      st.lock_failed.push_back(rt.locks.failed[k]);
      st.lock_cycles.push_back(rt.locks.cycles[k]);
    }
    s.struts.push_back(std::move(st));
  }
  return s;
}

// --- the tick --------------------------------------------------------------------

namespace detail {

inline std::string fmt_tag_number(double v) { return (v >= 0 ? "+" : "") + format_double(v); }

inline void reset_pid(ControllerState& st) {
  st.integral = 0.0;
  st = pid_hold(st);
}

/// Applies one validated command. Returns the tags it produced.
inline void apply_command(SimState& sim, const Scenario& sc, const AppliedCommand& ac, std::vector<std::string>& tags,
                          std::vector<AlarmEvent>& alarm_events) {
  const OperatorCommand& c = ac.command;
  const std::string base = "cmd:" + c.client_id + ":" + std::to_string(c.client_seq) + ":" + std::string(to_string(c.kind));

  const bool allowed_while_locked =
      c.kind == CommandKind::reset || c.kind == CommandKind::e_stop || c.kind == CommandKind::ack_alarm;
  if (sim.estop.engaged && !allowed_while_locked) {
    tags.push_back(base + ":ignored_system_locked");
    return;
  }

  StrutRuntime* rt = nullptr;
  const StrutConfig* cfg = nullptr;
  if (needs_strut(c.kind)) {
    const auto idx = sc.strut_index(c.strut_id);
    if (idx < 0) {
      tags.push_back(base + ":ignored_unknown_strut");
      return;
    }
    rt = &sim.struts[static_cast<std::size_t>(idx)];
    cfg = &sc.struts[static_cast<std::size_t>(idx)];
  }

  std::vector<ControlMode> modes;
  auto all_modes = [&] {
    modes.clear();
    for (auto& s : sim.struts) modes.push_back(s.mode);
  };
  auto store_modes = [&] {
    for (std::size_t i = 0; i < sim.struts.size(); ++i) sim.struts[i].mode = modes[i];
  };

  switch (c.kind) {
    case CommandKind::set_force_setpoint:
      rt->force_setpoint_kn = c.value;
      if (std::holds_alternative<ForceHold>(rt->mode))
        rt->mode = ForceHold{c.value, cfg->force_deadband_kn(c.value)};
      break;
    case CommandKind::set_displacement_setpoint:
      rt->displacement_setpoint_mm = c.value;
      if (std::holds_alternative<DisplacementHold>(rt->mode))
        rt->mode = DisplacementHold{c.value, cfg->displacement_deadband_mm};
      break;
    case CommandKind::set_mode: {
      ControlMode m = make_mode(c.mode, *cfg, *rt);
      if (std::holds_alternative<Manual>(m)) m = Manual{0.0};
      if (m.index() != rt->mode.index()) reset_pid(rt->ctrl);
      rt->mode = m;
      if (!is_automatic(m) && !std::holds_alternative<Manual>(m)) rt->command_mm_per_s = 0.0;
      break;
    }
    case CommandKind::jog_jack:
      if (!std::holds_alternative<Manual>(rt->mode)) reset_pid(rt->ctrl);
      rt->mode = Manual{c.value};
      break;
    case CommandKind::ack_alarm: {
      const auto ch = parse_alarm_channel(c.channel);
      if (!ch) {
        tags.push_back(base + ":rejected_bad_channel");
        return;
      }
      AckResult r = acknowledge(rt->alarm(*ch), c.client_id, ac.tick);
      if (!r.ok()) {
        tags.push_back(base + ":rejected_no_active_alarm");
        return;
      }
      const bool changed = !rt->alarm(*ch).acknowledged;
      rt->alarm(*ch) = r.state;
      if (changed)
        alarm_events.push_back({c.strut_id, *ch, r.state.level, r.state.latched, r.state.acknowledged,
                                r.state.raised_tick.value_or(ac.tick)});
      break;
    }
    case CommandKind::e_stop:
      all_modes();
      emergency_stop(sim.estop, modes);
      store_modes();
      for (auto& s : sim.struts) {
        s.command_mm_per_s = 0.0;
        s.ctrl = pid_hold(s.ctrl);
      }
      break;
    case CommandKind::reset:
      all_modes();
      if (!reset_emergency_stop(sim.estop, modes)) {
        tags.push_back(base + ":rejected_not_stopped");
        return;
      }
      store_modes();
      for (auto& s : sim.struts) reset_pid(s.ctrl);
      break;
    case CommandKind::inject_stage:
      try {
        auto [plant, soil] = apply_stage(rt->plant, rt->soil, {rt->plant.stage_index + 1, c.value});
        rt->plant = plant;
        rt->soil = soil;
        tags.push_back("stage:" + c.strut_id + ":" + fmt_tag_number(c.value));
      } catch (const std::exception&) {
        tags.push_back(base + ":rejected_load_bounds");
        return;
      }
      break;
    case CommandKind::inject_temp_ramp: {
      const double now = sim.ramp.offset_at(ac.tick);
      sim.ramp = {ac.tick, std::max<Tick>(1, c.duration_ticks), now, now + c.value};
      break;
    }
  }
  tags.push_back(base);
}

inline void note_alarm(std::vector<AlarmEvent>& out, const std::string& id, const AlarmState& before,
                       const AlarmState& after) {
  if (before.level == after.level && before.acknowledged == after.acknowledged) return;
  out.push_back({id, after.channel, after.level, after.latched, after.acknowledged, after.raised_tick.value_or(0)});
}

}  // namespace detail

/// Executes tick `sim.tick`. `commands` are the ones applied at this boundary, in order.
[[nodiscard]] inline StepResult step(SimState& sim, const Scenario& sc, std::span<const AppliedCommand> commands) {
  if (sim.status != RunStatus::running) throw std::logic_error("step on a run that is not running");
  const Tick k = sim.tick;
  const double dt = sc.dt_s;
  StepResult out;
  TelemetryRecord& rec = out.record;
  rec.tick = k;
  rec.time_s = static_cast<double>(k) * dt;

  // 1. commands
  for (const auto& ac : commands) {
    AppliedCommand at = ac;
    at.tick = k;
    detail::apply_command(sim, sc, at, rec.tags, rec.alarm_events);
    out.applied.push_back(std::move(at));
  }

  // 2. schedule
  for (const auto& stage : sc.stages) {
    if (stage.tick != k) continue;
    for (const auto& id : stage.struts) {
      auto& rt = sim.struts[static_cast<std::size_t>(sc.strut_index(id))];
      auto [plant, soil] = apply_stage(rt.plant, rt.soil, {rt.plant.stage_index + 1, stage.increment_kn});
      rt.plant = plant;
      rt.soil = soil;
      rec.tags.push_back("stage:" + id + ":" + detail::fmt_tag_number(stage.increment_kn));
    }
  }
  for (const auto& lf : sc.lock_faults) {
    if (lf.tick != k) continue;
    auto& rt = sim.struts[static_cast<std::size_t>(sc.strut_index(lf.strut))];
    rec.tags.push_back("lock_failed:" + lf.strut + ":" + std::to_string(lf.lock));
    try {
      fail_lock(rt.locks, lf.lock);
    } catch (const StructuralFault& e) {
      rec.tags.push_back("structural_fault:" + lf.strut);
      sim.status = RunStatus::failed;
      sim.failure = lf.strut + ": " + e.what();
    }
  }
  for (const auto& f : sc.faults)
    if (f.fault.active(k))
      rec.tags.push_back("fault_active:" + f.strut + ":" + std::string(to_string(f.sensor)) + ":" +
                         std::string(to_string(f.fault.kind)));
  sim.ambient_c = sc.ambient_at(k) + sim.ramp.offset_at(k);
  rec.ambient_c = sim.ambient_c;

  // 3. plant
  if (k > 0) {
    const std::size_t n = sim.struts.size();
    std::vector<double> w_eq(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& rt = sim.struts[i];
      const auto& cfg = sc.struts[i];
      if (rt.command_mm_per_s != 0.0 && !rt.moving) cycle_locks(rt.locks);
      rt.moving = rt.command_mm_per_s != 0.0;
      rt.plant = advance_actuation(rt.plant, cfg.strut, dt, rt.command_mm_per_s, sim.ambient_c);
      w_eq[i] = solve_equilibrium(cfg.strut, rt.soil, rt.plant.jack_ext_mm, rt.plant.temp_c - rt.plant.ref_temp_c)
                    .wall_disp_mm;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double target = w_eq[i];
      if (!sc.coupling.empty()) {
        target = 0.0;
        for (std::size_t j = 0; j < n; ++j) target += sc.coupling[i][j] * w_eq[j];
      }
      sim.struts[i].plant = relax_wall(sim.struts[i].plant, sc.struts[i].strut, sim.struts[i].soil, dt, target);
    }
  }

  for (std::size_t i = 0; i < sim.struts.size(); ++i) {
    auto& rt = sim.struts[i];
    const auto& cfg = sc.struts[i];

    // 4. sensors
    const std::array<double, 3> truth{rt.plant.strut_force_kn, rt.plant.wall_disp_mm, rt.plant.temp_c};
    for (int s = 0; s < 3; ++s) rt.readings[s] = rt.sensors[s].read(truth[s], k, sc.staleness_limit_ticks, dt);

    // 5. safety
    const std::array<AlarmChannel, 3> sensed{AlarmChannel::force, AlarmChannel::displacement, AlarmChannel::temperature};
    for (int s = 0; s < 3; ++s) {
      if (!rt.readings[s].fresh()) continue;
      const AlarmState before = rt.alarm(sensed[s]);
      rt.alarm(sensed[s]) = evaluate_alarm(before, rt.readings[s].value, cfg.threshold(sensed[s]), k);
      detail::note_alarm(rec.alarm_events, cfg.id, before, rt.alarm(sensed[s]));
    }
    {
      const double duty = rt.duty.push(k > 0 ? rt.command_mm_per_s : 0.0, dt);
      const AlarmState before = rt.alarm(AlarmChannel::duty);
      rt.alarm(AlarmChannel::duty) = evaluate_alarm(before, duty, cfg.threshold(AlarmChannel::duty), k);
      detail::note_alarm(rec.alarm_events, cfg.id, before, rt.alarm(AlarmChannel::duty));
    }
    if (sim.status != RunStatus::failed) {
      rt.lock_loads = lock_loads(rt.plant.strut_force_kn, rt.locks);
      const CapacityCheck cap = check_lock_capacity(rt.lock_loads, rt.locks.capacity_kn);
      for (auto idx : cap.overloaded) rec.tags.push_back("lock_overload:" + cfg.id + ":" + std::to_string(idx));
      rt.overloaded = !cap.ok();
    } else {
      rt.lock_loads.assign(static_cast<std::size_t>(rt.locks.n_locks), 0.0);
    }

    // 6. control
    const Measurements meas{rt.reading(SensorKind::force), rt.reading(SensorKind::displacement)};
    RegulatorOutput reg = regulate(cfg.controller, rt.mode, rt.ctrl, meas, rt.reading(SensorKind::temperature),
                                   cfg.strut, rt.plant.jack_ext_mm, dt);
    rt.ctrl = reg.state;
    rt.error = reg.decision.error;
    if (reg.decision.fault) rec.tags.push_back("sensor_fault:" + cfg.id);
    if (reg.pid_fault) {
      rt.mode = Locked{};
      rec.tags.push_back("controller_fault:" + cfg.id);
    }
    if (reg.decision.action == Action::auto_retract) rec.tags.push_back("auto_retract:" + cfg.id);
    rt.command_mm_per_s = sim.status == RunStatus::failed ? 0.0 : reg.command_mm_per_s;
  }
  if (sim.estop.engaged) rec.tags.push_back("estop");

  // 7. record
  for (std::size_t i = 0; i < sim.struts.size(); ++i) {
    const auto& rt = sim.struts[i];
    StrutRecord s;
    s.id = sc.struts[i].id;
    s.true_force_kn = rt.plant.strut_force_kn;
    s.measured_force_kn = rt.reading(SensorKind::force).value;
    s.force_status = rt.reading(SensorKind::force).status;
    s.true_disp_mm = rt.plant.wall_disp_mm;
    s.measured_disp_mm = rt.reading(SensorKind::displacement).value;
    s.disp_status = rt.reading(SensorKind::displacement).status;
    s.temp_c = rt.plant.temp_c;
    s.measured_temp_c = rt.reading(SensorKind::temperature).value;
    s.temp_status = rt.reading(SensorKind::temperature).status;
    s.jack_ext_mm = rt.plant.jack_ext_mm;
    s.command_mm_per_s = rt.command_mm_per_s;
    s.mode = std::string(mode_name(rt.mode));
    s.setpoint = std::holds_alternative<DisplacementHold>(rt.mode) ? rt.displacement_setpoint_mm : rt.force_setpoint_kn;
    s.error_kn = rt.error;
    for (AlarmChannel c : kAlarmChannels) s.alarm_levels[static_cast<int>(c)] = rt.alarm(c).level;
    s.lock_loads_kn = rt.lock_loads;
    for (int l = 0; l < rt.locks.n_locks; ++l) s.lock_cycles.push_back(rt.locks.cycles[l]);
    rec.struts.push_back(std::move(s));
  }

  sim.tick = k + 1;
  if (sim.status == RunStatus::running && sim.tick >= sc.duration_ticks) sim.status = RunStatus::finished;
  return out;
}

// --- command queue -------------------------------------------------------------

/// Multi-producer, single-consumer queue between the gateway and the engine.
/// Commands accepted now are applied at `boundary()`.
class CommandQueue {
 public:
  /// Runs `check(cmd, projected_estop)` under the queue lock; an empty
  /// reason accepts. The projection reflects every command already queued.
  template <class Check>
  CommandOutcome submit(const OperatorCommand& cmd, Check&& check) {
    std::lock_guard lock(mu_);
    CommandOutcome o{cmd.client_id, cmd.client_seq, false, {}, std::nullopt};
    if (closed_) {
      o.reason = "run_finished";
      return o;
    }
    o.reason = check(cmd, projected_estop_);
    if (!o.reason.empty()) return o;
    pending_.push_back(cmd);
    project(cmd);
    o.accepted = true;
    o.applied_tick = boundary_;
    return o;
  }

  /// Takes everything queued for tick `tick`. `estop_now` is the engine's
  /// e-stop state before these commands are applied.
  std::vector<OperatorCommand> drain(Tick tick, bool estop_now) {
    std::lock_guard lock(mu_);
    std::vector<OperatorCommand> out;
    out.swap(pending_);
    boundary_ = tick + 1;
    projected_estop_ = estop_now;
    for (const auto& c : out) project(c);
    return out;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
  }

  [[nodiscard]] Tick boundary() const {
    std::lock_guard lock(mu_);
    return boundary_;
  }

 private:
  void project(const OperatorCommand& c) {
    if (c.kind == CommandKind::e_stop) projected_estop_ = true;
    if (c.kind == CommandKind::reset) projected_estop_ = false;
  }

  mutable std::mutex mu_;
  std::vector<OperatorCommand> pending_;
  Tick boundary_ = 0;
  bool projected_estop_ = false;
  bool closed_ = false;
};

// --- engine ---------------------------------------------------------------------

/// Owns one run: scenario, state, and the command inputs for each boundary.
class Engine {
 public:
  explicit Engine(Scenario sc, bool use_script = true)
      : sc_(std::move(sc)), sim_(initial_state(sc_)), use_script_(use_script) {}

  /// Commands applied at a boundary: scenario script first, then any
  /// recorded log entries, then live queue arrivals.
  StepResult step(CommandQueue* queue = nullptr) {
    std::vector<AppliedCommand> cmds;
    const Tick k = sim_.tick;
    if (use_script_)
      for (const auto& ac : sc_.command_script)
        if (ac.tick == k) cmds.push_back(ac);
    while (log_pos_ < log_.size() && log_[log_pos_].tick <= k) {
      if (log_[log_pos_].tick == k) cmds.push_back(log_[log_pos_]);
      ++log_pos_;
    }
    if (queue) {
      bool estop = sim_.estop.engaged;
      for (const auto& c : cmds) {
        if (c.command.kind == CommandKind::e_stop) estop = true;
        if (c.command.kind == CommandKind::reset) estop = false;
      }
      for (auto& c : queue->drain(k, estop)) cmds.push_back({k, std::move(c)});
    }
    return strutservo::step(sim_, sc_, cmds);
  }

  /// Replaces scripted input with a recorded command log (sorted by tick).
  void set_command_log(std::vector<AppliedCommand> log) {
    std::stable_sort(log.begin(), log.end(), [](const auto& a, const auto& b) { return a.tick < b.tick; });
    log_ = std::move(log);
    log_pos_ = 0;
    use_script_ = false;
  }

  [[nodiscard]] StateSnapshot snapshot() const { return strutservo::snapshot(sim_, sc_); }
  [[nodiscard]] bool running() const noexcept { return sim_.status == RunStatus::running; }
  [[nodiscard]] const SimState& state() const noexcept { return sim_; }
  [[nodiscard]] const Scenario& scenario() const noexcept { return sc_; }

 private:
  Scenario sc_;
  SimState sim_;
  bool use_script_;
  std::vector<AppliedCommand> log_;
  std::size_t log_pos_ = 0;
};

}  // namespace strutservo
