#pragma once

// Operator-facing service logic, independent of any transport: command
// validation and idempotency, the latest-wins state feed, and the line
// protocol handler. server.hpp puts this behind TCP and HTTP.

#include <cmath>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "strutservo/engine.hpp"
#include "strutservo/runner.hpp"
#include "strutservo/scenario.hpp"
#include "strutservo/telemetry.hpp"

namespace strutservo {

namespace reason {
inline constexpr const char* unauthenticated = "unauthenticated";
inline constexpr const char* malformed = "malformed";
inline constexpr const char* unknown_strut = "unknown_strut";
inline constexpr const char* out_of_envelope = "out_of_envelope";
inline constexpr const char* system_locked = "system_locked";
inline constexpr const char* stale_seq = "stale_seq";
inline constexpr const char* no_active_alarm = "no_active_alarm";
inline constexpr const char* not_stopped = "not_stopped";
inline constexpr const char* run_finished = "run_finished";
}  // namespace reason

/// Latest published snapshot, shared immutably with readers.
class SnapshotBoard {
 public:
  void set(StateSnapshot s) {
    auto p = std::make_shared<const StateSnapshot>(std::move(s));
    std::lock_guard lock(mu_);
    latest_ = std::move(p);
  }
  [[nodiscard]] std::shared_ptr<const StateSnapshot> latest() const {
    std::lock_guard lock(mu_);
    return latest_;
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const StateSnapshot> latest_;
};

/// Validates operator commands and forwards the valid ones to the queue.
/// Every call yields exactly one outcome; a repeated (client_id, client_seq)
/// gets the original outcome back and is not enqueued again.
class CommandGateway {
 public:
  CommandGateway(const Scenario& sc, CommandQueue& queue, const SnapshotBoard& board)
      : sc_(sc), queue_(queue), board_(board) {}

  CommandOutcome handle_command(const OperatorCommand& cmd) {
    std::lock_guard lock(mu_);
    auto& client = clients_[cmd.client_id];
    if (auto it = client.outcomes.find(cmd.client_seq); it != client.outcomes.end()) return it->second;

    CommandOutcome out{cmd.client_id, cmd.client_seq, false, {}, std::nullopt};
    if (client.last_seq && cmd.client_seq <= *client.last_seq) {
      out.reason = reason::stale_seq;
      return out;  // not recorded: the slot may belong to a later original
    }
    if (std::string why = static_checks(cmd); !why.empty()) {
      out.reason = std::move(why);
    } else {
      out = queue_.submit(cmd, [&](const OperatorCommand& c, bool locked) { return state_checks(c, locked); });
    }
    client.last_seq = cmd.client_seq;
    client.outcomes.emplace(cmd.client_seq, out);
    return out;
  }

 private:
  struct Client {
    std::optional<std::int64_t> last_seq;
    std::map<std::int64_t, CommandOutcome> outcomes;
  };

  std::string static_checks(const OperatorCommand& c) const {
    const StrutConfig* cfg = nullptr;
    if (needs_strut(c.kind)) {
      cfg = sc_.find_strut(c.strut_id);
      if (!cfg) return reason::unknown_strut;
    }
    const Envelope* env = cfg ? &cfg->envelope : (sc_.struts.empty() ? nullptr : &sc_.struts.front().envelope);
    auto finite = [](double v) { return std::isfinite(v); };
    switch (c.kind) {
      case CommandKind::set_force_setpoint:
        if (!finite(c.value) || !env->force_setpoint_kn.contains(c.value)) return reason::out_of_envelope;
        break;
      case CommandKind::set_displacement_setpoint:
        if (!finite(c.value) || !env->displacement_setpoint_mm.contains(c.value)) return reason::out_of_envelope;
        break;
      case CommandKind::set_mode:
        if (c.mode != "force_hold" && c.mode != "displacement_hold" && c.mode != "manual" && c.mode != "locked")
          return reason::out_of_envelope;
        break;
      case CommandKind::jog_jack:
        if (!finite(c.value) || std::abs(c.value) > cfg->strut.jack_rate_limit_mm_per_s) return reason::out_of_envelope;
        break;
      case CommandKind::ack_alarm:
        if (!parse_alarm_channel(c.channel)) return reason::out_of_envelope;
        break;
      case CommandKind::inject_stage:
        if (!finite(c.value) || std::abs(c.value) > env->max_stage_increment_kn) return reason::out_of_envelope;
        break;
      case CommandKind::inject_temp_ramp:
        if (!finite(c.value) || std::abs(c.value) > env->max_temp_ramp_c || c.duration_ticks < 1 ||
            c.duration_ticks > env->max_ramp_ticks)
          return reason::out_of_envelope;
        break;
      case CommandKind::e_stop:
      case CommandKind::reset:
        break;
    }
    return {};
  }

  // Checks against live state. Runs under the queue lock.
  std::string state_checks(const OperatorCommand& c, bool locked) const {
    if (c.kind == CommandKind::reset) return locked ? std::string{} : reason::not_stopped;
    if (locked && c.kind != CommandKind::e_stop && c.kind != CommandKind::ack_alarm) return reason::system_locked;
    const auto snap = board_.latest();
    if (!snap) return {};
    const auto idx = sc_.strut_index(c.strut_id);
    if (c.kind == CommandKind::ack_alarm) {
      const auto& a = snap->struts[static_cast<std::size_t>(idx)].alarms[static_cast<int>(*parse_alarm_channel(c.channel))];
      if (a.level != AlarmLevel::alarm) return reason::no_active_alarm;
    }
    if (c.kind == CommandKind::inject_stage) {
      const auto& cfg = sc_.struts[static_cast<std::size_t>(idx)];
      if (!cfg.soil.load_bounds_kn.contains(snap->struts[static_cast<std::size_t>(idx)].driving_load_kn + c.value))
        return reason::out_of_envelope;
    }
    return {};
  }

  const Scenario& sc_;
  CommandQueue& queue_;
  const SnapshotBoard& board_;
  mutable std::mutex mu_;
  std::map<std::string, Client> clients_;
};

// --- state feed -------------------------------------------------------------------

/// Per-subscriber outbox. Direct replies and alarm events are kept in order;
/// snapshots coalesce to the newest and are never delivered out of tick order.
class Mailbox {
 public:
  explicit Mailbox(std::size_t event_capacity = 4096) : event_capacity_(event_capacity) {}

  void push_direct(std::string line) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      direct_.push_back(std::move(line));
    }
    cv_.notify_one();
  }

  void push_event(std::string line) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      if (events_.size() >= event_capacity_) {
        events_.pop_front();
        ++dropped_events_;
      }
      events_.push_back(std::move(line));
    }
    cv_.notify_one();
  }

  /// Marks `tick` as already delivered (used for the join snapshot).
  void mark_sent(Tick tick) {
    std::lock_guard lock(mu_);
    last_sent_ = std::max(last_sent_, tick);
  }

  void offer_snapshot(Tick tick, std::shared_ptr<const std::string> line) {
    {
      std::lock_guard lock(mu_);
      if (closed_ || tick <= last_sent_ || (snapshot_ && tick <= snapshot_tick_)) return;
      snapshot_ = std::move(line);
      snapshot_tick_ = tick;
    }
    cv_.notify_one();
  }

  /// Next line to send; blocks until one exists. Empty once closed and drained.
  std::optional<std::string> pop(std::optional<std::chrono::milliseconds> timeout = std::nullopt) {
    std::unique_lock lock(mu_);
    auto ready = [&] { return closed_ || !direct_.empty() || !events_.empty() || snapshot_; };
    if (timeout) {
      if (!cv_.wait_for(lock, *timeout, ready)) return std::nullopt;
    } else {
      cv_.wait(lock, ready);
    }
    return take(lock);
  }

  /// Non-blocking variant.
  std::optional<std::string> try_pop() {
    std::unique_lock lock(mu_);
    return take(lock);
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }
  [[nodiscard]] bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }
  [[nodiscard]] std::uint64_t dropped_events() const {
    std::lock_guard lock(mu_);
    return dropped_events_;
  }

 private:
  std::optional<std::string> take(std::unique_lock<std::mutex>&) {
    if (!direct_.empty()) {
      auto s = std::move(direct_.front());
      direct_.pop_front();
      return s;
    }
    if (!events_.empty()) {
      auto s = std::move(events_.front());
      events_.pop_front();
      return s;
    }
    if (snapshot_) {
      last_sent_ = snapshot_tick_;
      auto s = *snapshot_;
      snapshot_.reset();
      return s;
    }
    return std::nullopt;
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> direct_;
  std::deque<std::string> events_;
  std::size_t event_capacity_;
  std::uint64_t dropped_events_ = 0;
  std::shared_ptr<const std::string> snapshot_;
  Tick snapshot_tick_ = -1;
  Tick last_sent_ = -1;
  bool closed_ = false;
};

class Publisher {
 public:
  void subscribe(const std::shared_ptr<Mailbox>& m) {
    std::lock_guard lock(mu_);
    subs_.push_back(m);
  }

  void publish_state(const StateSnapshot& snap) {
    std::lock_guard lock(mu_);
    prune();
    if (subs_.empty()) return;
    auto line = std::make_shared<const std::string>(snapshot_message(snap).dump());
    for (auto& w : subs_)
      if (auto m = w.lock()) m->offer_snapshot(snap.tick, line);
  }

  void publish_event(const std::string& line) {
    std::lock_guard lock(mu_);
    prune();
    for (auto& w : subs_)
      if (auto m = w.lock()) m->push_event(line);
  }

  [[nodiscard]] std::size_t subscribers() {
    std::lock_guard lock(mu_);
    prune();
    return subs_.size();
  }

  [[nodiscard]] static Json snapshot_message(const StateSnapshot& s) {
    Json j;
    j["v"] = 1;
    j["type"] = "snapshot";
    const Json body = to_json(s);
    for (auto& [k, v] : body.items()) j[k] = v;
    return j;
  }

 private:
  void prune() {
    std::erase_if(subs_, [](const std::weak_ptr<Mailbox>& w) {
      auto m = w.lock();
      return !m || m->closed();
    });
  }
  std::mutex mu_;
  std::vector<std::weak_ptr<Mailbox>> subs_;
};

// --- line protocol --------------------------------------------------------------

struct Session {
  bool authenticated = false;
  std::string client_id;
  std::shared_ptr<Mailbox> mailbox = std::make_shared<Mailbox>();
};

/// Everything a transport needs for one run.
class GatewayHub {
 public:
  GatewayHub(const Scenario& sc, CommandQueue& queue, std::shared_ptr<TelemetryStore> store, std::string token)
      : sc_(sc), store_(std::move(store)), token_(std::move(token)), gateway_(sc_, queue, board_) {
    board_.set(snapshot(initial_state(sc_), sc_));
  }

  /// Engine-side hook: call once per executed tick.
  void on_tick(const StateSnapshot& snap, const StepResult& r) {
    board_.set(snap);
    for (const auto& e : r.record.alarm_events) publisher_.publish_event(alarm_event_message(e, r.record.tick).dump());
    publisher_.publish_state(snap);
  }

  /// Handles one inbound line; replies go to the session's mailbox.
  void handle_line(Session& s, std::string_view line) {
    Json msg;
    try {
      msg = Json::parse(line);
    } catch (const std::exception&) {
      s.mailbox->push_direct(error_message("malformed: not JSON").dump());
      return;
    }
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
      s.mailbox->push_direct(error_message("malformed: missing type").dump());
      return;
    }
    const std::string type = msg["type"].get<std::string>();
    if (type == "hello") return hello(s, msg);
    if (type == "command") return command(s, msg);
    if (!s.authenticated) {
      s.mailbox->push_direct(error_message(reason::unauthenticated).dump());
      return;
    }
    if (type == "snapshot") {
      s.mailbox->push_direct(Publisher::snapshot_message(*board_.latest()).dump());
    } else if (type == "history") {
      s.mailbox->push_direct(history_message(msg).dump());
    } else {
      s.mailbox->push_direct(error_message("unknown message type '" + type + "'").dump());
    }
  }

  [[nodiscard]] Json header() const {
    Json j;
    j["v"] = 1;
    j["type"] = "hello";
    j["ok"] = true;
    j["scenario"] = sc_.name;
    j["seed"] = sc_.seed;
    j["dt_s"] = sc_.dt_s;
    j["duration_ticks"] = sc_.duration_ticks;
    auto& arr = j["struts"] = Json::array();
    for (const auto& st : sc_.struts) {
      Json o;
      o["id"] = st.id;
      o["design_force_kn"] = st.strut.design_force_kn;
      o["deadband_fraction"] = st.deadband_fraction;
      o["retract_limit_kn"] = st.controller.limits.retract_limit_kn;
      o["n_locks"] = st.locks.n_locks;
      o["lock_capacity_kn"] = st.locks.capacity_kn;
      o["envelope"] = {{"force_setpoint_kn", {st.envelope.force_setpoint_kn.lo, st.envelope.force_setpoint_kn.hi}},
                       {"displacement_setpoint_mm",
                        {st.envelope.displacement_setpoint_mm.lo, st.envelope.displacement_setpoint_mm.hi}},
                       {"max_stage_increment_kn", st.envelope.max_stage_increment_kn},
                       {"max_temp_ramp_c", st.envelope.max_temp_ramp_c},
                       {"max_ramp_ticks", st.envelope.max_ramp_ticks}};
      Json th;
      for (AlarmChannel c : kAlarmChannels) {
        const auto& t = st.threshold(c);
        th[std::string(to_string(c))] = {
            {"direction", t.direction == AlarmDirection::high ? "high" : t.direction == AlarmDirection::low ? "low" : "both"},
            {"high", {{"warn", t.high.warn}, {"alarm", t.high.alarm}}},
            {"low", {{"warn", t.low.warn}, {"alarm", t.low.alarm}}},
            {"hysteresis", t.hysteresis}};
      }
      o["thresholds"] = std::move(th);
      arr.push_back(std::move(o));
    }
    return j;
  }

  [[nodiscard]] Json history_message(const Json& msg) const {
    try {
      const TickRange range{msg.value("start", Tick{0}), msg.value("end", Tick{0})};
      std::optional<std::string> strut;
      if (msg.contains("strut_id") && msg["strut_id"].is_string()) strut = msg["strut_id"].get<std::string>();
      Json j;
      j["v"] = 1;
      j["type"] = "history";
      auto& recs = j["records"] = Json::array();
      for (const auto& r : store_->query(range, strut)) recs.push_back(to_json(r));
      return j;
    } catch (const std::exception& e) {
      return error_message(e.what());
    }
  }

  [[nodiscard]] CommandGateway& gateway() noexcept { return gateway_; }
  [[nodiscard]] Publisher& publisher() noexcept { return publisher_; }
  [[nodiscard]] const SnapshotBoard& board() const noexcept { return board_; }
  [[nodiscard]] const TelemetryStore& store() const noexcept { return *store_; }

 private:
  static Json error_message(const std::string& why) {
    Json j;
    j["v"] = 1;
    j["type"] = "error";
    j["reason"] = why;
    return j;
  }

  void hello(Session& s, const Json& msg) {
    const bool ok = msg.contains("token") && msg["token"].is_string() && msg["token"].get<std::string>() == token_;
    if (!ok) {
      Json j;
      j["v"] = 1;
      j["type"] = "hello";
      j["ok"] = false;
      j["reason"] = reason::unauthenticated;
      s.mailbox->push_direct(j.dump());
      return;
    }
    s.authenticated = true;
    if (msg.contains("client_id") && msg["client_id"].is_string()) s.client_id = msg["client_id"].get<std::string>();
    const auto snap = board_.latest();
    Json h = header();
    h["tick"] = snap->tick;
    s.mailbox->push_direct(h.dump());
    s.mailbox->push_direct(Publisher::snapshot_message(*snap).dump());
    s.mailbox->mark_sent(snap->tick);
    if (msg.value("subscribe", true)) publisher_.subscribe(s.mailbox);
  }

  void command(Session& s, const Json& msg) {
    OperatorCommand cmd;
    try {
      cmd = command_from_json(msg);
    } catch (const std::exception& e) {
      // An outcome still goes back when the idempotency key is readable.
      if (msg.contains("client_id") && msg["client_id"].is_string() && msg.contains("client_seq") &&
          msg["client_seq"].is_number_integer()) {
        CommandOutcome o{msg["client_id"].get<std::string>(), msg["client_seq"].get<std::int64_t>(), false,
                         std::string(reason::malformed) + ": " + e.what(), std::nullopt};
        s.mailbox->push_direct(to_json(o).dump());
      } else {
        s.mailbox->push_direct(error_message(std::string(reason::malformed) + ": " + e.what()).dump());
      }
      return;
    }
    if (!s.authenticated) {
      s.mailbox->push_direct(to_json(CommandOutcome{cmd.client_id, cmd.client_seq, false, reason::unauthenticated, {}}).dump());
      return;
    }
    s.mailbox->push_direct(to_json(gateway_.handle_command(cmd)).dump());
  }

  const Scenario& sc_;
  std::shared_ptr<TelemetryStore> store_;
  std::string token_;
  SnapshotBoard board_;
  CommandGateway gateway_;
  Publisher publisher_;
};

}  // namespace strutservo
