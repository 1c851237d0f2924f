#pragma once

// Headless and paced run loops, run summaries, and the on-disk run
// directory: <out>/<name>-<seed>/{run.csv, events.log, commands.log, summary.json}.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "strutservo/engine.hpp"
#include "strutservo/telemetry.hpp"

namespace strutservo {

struct StrutSummary {
  std::string id;
  double max_abs_force_error_kn = 0.0;  // |true F - force setpoint| over force_hold ticks
  double max_abs_wall_disp_mm = 0.0;
  double max_true_force_kn = 0.0;
  double final_force_kn = 0.0;
  std::array<std::array<int, 2>, 4> raises{};  // [channel][warning, alarm]
  std::optional<Tick> settling_tick;           // first tick after which the measured force stays in band
  Tick last_out_of_band = -1;
  bool in_force_hold_at_end = false;
};

struct RunSummary {
  std::string scenario;
  std::uint64_t seed = 0;
  Tick ticks = 0;
  RunStatus status = RunStatus::running;
  std::string failure;
  std::size_t commands_applied = 0;
  std::vector<StrutSummary> struts;
};

class SummaryBuilder {
 public:
  explicit SummaryBuilder(const Scenario& sc) {
    s_.scenario = sc.name;
    s_.seed = sc.seed;
    for (const auto& st : sc.struts) {
      StrutSummary out;
      out.id = st.id;
      s_.struts.push_back(std::move(out));
    }
  }

  void add(const TelemetryRecord& rec, const SimState& sim, const Scenario& sc) {
    s_.ticks = rec.tick + 1;
    for (std::size_t i = 0; i < rec.struts.size(); ++i) {
      const auto& r = rec.struts[i];
      auto& out = s_.struts[i];
      const auto& rt = sim.struts[i];
      const bool force_hold = r.mode == "force_hold";
      if (force_hold) {
        out.max_abs_force_error_kn = std::max(out.max_abs_force_error_kn, std::abs(r.true_force_kn - rt.force_setpoint_kn));
        const double band = sc.struts[i].force_deadband_kn(rt.force_setpoint_kn);
        if (r.force_status != ReadingStatus::ok || std::abs(r.measured_force_kn - rt.force_setpoint_kn) > band)
          out.last_out_of_band = rec.tick;
      } else {
        out.last_out_of_band = rec.tick;
      }
      out.in_force_hold_at_end = force_hold;
      out.max_abs_wall_disp_mm = std::max(out.max_abs_wall_disp_mm, std::abs(r.true_disp_mm));
      out.max_true_force_kn = std::max(out.max_true_force_kn, r.true_force_kn);
      out.final_force_kn = r.true_force_kn;
    }
    for (const auto& ev : rec.alarm_events) {
      if (ev.level == AlarmLevel::normal || !raised_now(ev, rec.tick)) continue;
      for (auto& out : s_.struts)
        if (out.id == ev.strut_id) ++out.raises[static_cast<int>(ev.channel)][ev.level == AlarmLevel::alarm ? 1 : 0];
    }
  }

  void commands(std::size_t n) { s_.commands_applied += n; }

  [[nodiscard]] RunSummary finish(const SimState& sim) {
    s_.status = sim.status;
    s_.failure = sim.failure;
    for (auto& out : s_.struts)
      if (out.in_force_hold_at_end && out.last_out_of_band + 1 < s_.ticks) out.settling_tick = out.last_out_of_band + 1;
    return s_;
  }

 private:
  // An event reports a raise when it carries this tick as its raise tick;
  // acknowledgments and escalations inside one warning do not.
  static bool raised_now(const AlarmEvent& ev, Tick tick) { return ev.raised_tick == tick && !ev.acknowledged; }
  RunSummary s_;
};

[[nodiscard]] inline Json to_json(const RunSummary& s) {
  Json j;
  j["scenario"] = s.scenario;
  j["seed"] = s.seed;
  j["ticks"] = s.ticks;
  j["status"] = to_string(s.status);
  if (!s.failure.empty()) j["failure"] = s.failure;
  j["commands_applied"] = s.commands_applied;
  auto& arr = j["struts"] = Json::array();
  for (const auto& st : s.struts) {
    Json o;
    o["id"] = st.id;
    o["max_abs_force_error_kn"] = st.max_abs_force_error_kn;
    o["max_abs_wall_disp_mm"] = st.max_abs_wall_disp_mm;
    o["max_true_force_kn"] = st.max_true_force_kn;
    o["final_force_kn"] = st.final_force_kn;
    o["settling_tick"] = st.settling_tick ? Json(*st.settling_tick) : Json(nullptr);
    Json raises;
    for (AlarmChannel c : kAlarmChannels)
      raises[std::string(to_string(c))] = {{"warning", st.raises[static_cast<int>(c)][0]},
                                           {"alarm", st.raises[static_cast<int>(c)][1]}};
    o["alarm_raises"] = std::move(raises);
    arr.push_back(std::move(o));
  }
  return j;
}

/// Canonical event lines, shared by events.log and the gateway's alarm feed.
[[nodiscard]] inline Json alarm_event_message(const AlarmEvent& e, Tick tick) {
  Json j;
  j["v"] = 1;
  j["type"] = "alarm_event";
  j["tick"] = tick;
  const Json body = to_json(e);
  for (auto& [k, v] : body.items()) j[k] = v;
  return j;
}

[[nodiscard]] inline Json tag_event_line(const std::string& tag, Tick tick) {
  Json j;
  j["tick"] = tick;
  j["type"] = "tag";
  j["tag"] = tag;
  return j;
}

/// Streams one run to disk as it executes.
class RunWriter {
 public:
  RunWriter(const std::filesystem::path& out_root, const Scenario& sc)
      : dir_(out_root / (sc.name + "-" + std::to_string(sc.seed))) {
    std::filesystem::create_directories(dir_);
    csv_.open(dir_ / "run.csv", std::ios::binary | std::ios::trunc);
    events_.open(dir_ / "events.log", std::ios::binary | std::ios::trunc);
    commands_.open(dir_ / "commands.log", std::ios::binary | std::ios::trunc);
    if (!csv_ || !events_ || !commands_) throw std::runtime_error("cannot create run files in " + dir_.string());
    csv_ << csv_header(layout_of(sc));
  }

  void write(const StepResult& r) {
    csv_ << csv_row(r.record);
    for (const auto& t : r.record.tags) events_ << tag_event_line(t, r.record.tick).dump() << '\n';
    for (const auto& e : r.record.alarm_events) events_ << alarm_event_message(e, r.record.tick).dump() << '\n';
    for (const auto& c : r.applied) commands_ << to_json(c).dump() << '\n';
    if (!csv_ || !events_ || !commands_) throw std::runtime_error("write failure in " + dir_.string());
  }

  void finish(const RunSummary& s) {
    csv_.flush();
    events_.flush();
    commands_.flush();
    std::ofstream sum(dir_ / "summary.json", std::ios::binary | std::ios::trunc);
    sum << to_json(s).dump(2) << '\n';
    if (!sum || !csv_) throw std::runtime_error("write failure in " + dir_.string());
  }

  [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  std::ofstream csv_, events_, commands_;
};

/// Reads a command log (one JSON command per line, with its applied tick).
[[nodiscard]] inline std::vector<AppliedCommand> read_command_log(std::istream& in) {
  std::vector<AppliedCommand> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(applied_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw std::invalid_argument("command log line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  double seconds_per_tick = 0.0;  // 0 runs unpaced
  CommandQueue* queue = nullptr;
  std::optional<std::vector<AppliedCommand>> replay_log;
  std::shared_ptr<TelemetryStore> store;
  std::function<void(const StateSnapshot&, const StepResult&)> on_tick;
  const std::atomic<bool>* stop = nullptr;
};

struct RunResult {
  RunSummary summary;
  std::optional<std::filesystem::path> dir;
  std::shared_ptr<TelemetryStore> store;
};

[[nodiscard]] inline RunResult run(const Scenario& sc, RunOptions opt = {}) {
  Engine engine(sc);
  if (opt.replay_log) engine.set_command_log(*opt.replay_log);
  RunResult result;
  result.store = opt.store ? opt.store : std::make_shared<TelemetryStore>(layout_of(sc));
  std::optional<RunWriter> writer;
  if (opt.out_dir) {
    writer.emplace(*opt.out_dir, sc);
    result.dir = writer->dir();
  }
  SummaryBuilder summary(sc);

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  while (engine.running()) {
    if (opt.stop && opt.stop->load()) break;
    StepResult r = engine.step(opt.queue);
    summary.add(r.record, engine.state(), sc);
    summary.commands(r.applied.size());
    if (writer) writer->write(r);
    result.store->record(r.record);
    if (opt.on_tick) opt.on_tick(engine.snapshot(), r);
    if (opt.seconds_per_tick > 0) {
      const auto due = start + std::chrono::duration_cast<clock::duration>(
                                   std::chrono::duration<double>(opt.seconds_per_tick * static_cast<double>(engine.state().tick)));
      std::this_thread::sleep_until(due);
    }
  }
  if (opt.queue) opt.queue->close();
  SimState final_state = engine.state();
  if (final_state.status == RunStatus::running) final_state.status = RunStatus::stopped;
  result.summary = summary.finish(final_state);
  if (writer) writer->finish(result.summary);
  return result;
}

}  // namespace strutservo
