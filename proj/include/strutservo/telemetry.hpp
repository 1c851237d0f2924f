#pragma once

// Append-only per-run record store with windowed queries and bit-exact export.
//
// CSV layout (LF line endings, UTF-8, no BOM):
//   tick,time_s,ambient_c,
//   then per strut, in scenario order, prefixed "<id>.":
//     true_force_kn,measured_force_kn,force_status,true_disp_mm,measured_disp_mm,
//     disp_status,temp_c,measured_temp_c,temp_status,jack_ext_mm,command_mm_per_s,
//     mode,setpoint,error_kn,alarm_force,alarm_displacement,alarm_temperature,
//     alarm_duty,lock<i>_kn...,lock<i>_cycles...
//   then alarm_events,events
// Floating point is written as the shortest decimal that round-trips.
// alarm_events entries are "strut:channel:level:latched:acknowledged:raised_tick"
// joined by '|'; events are free tags joined by '|'.

#include <charconv>
#include <cstdint>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "strutservo/safety.hpp"
#include "strutservo/sensors.hpp"

namespace strutservo {

struct AlarmEvent {
  std::string strut_id;
  AlarmChannel channel = AlarmChannel::force;
  AlarmLevel level = AlarmLevel::normal;
  bool latched = false;
  bool acknowledged = false;
  Tick raised_tick = 0;
  friend bool operator==(const AlarmEvent&, const AlarmEvent&) = default;
};

struct StrutRecord {
  std::string id;
  double true_force_kn = 0.0;
  double measured_force_kn = 0.0;
  ReadingStatus force_status = ReadingStatus::ok;
  double true_disp_mm = 0.0;
  double measured_disp_mm = 0.0;
  ReadingStatus disp_status = ReadingStatus::ok;
  double temp_c = 0.0;
  double measured_temp_c = 0.0;
  ReadingStatus temp_status = ReadingStatus::ok;
  double jack_ext_mm = 0.0;
  double command_mm_per_s = 0.0;
  std::string mode;
  double setpoint = 0.0;
  double error_kn = 0.0;
  std::array<AlarmLevel, 4> alarm_levels{};
  std::vector<double> lock_loads_kn;
  std::vector<std::uint64_t> lock_cycles;
  friend bool operator==(const StrutRecord&, const StrutRecord&) = default;
};

struct TelemetryRecord {
  Tick tick = 0;
  double time_s = 0.0;
  double ambient_c = 0.0;
  std::vector<StrutRecord> struts;
  std::vector<AlarmEvent> alarm_events;
  std::vector<std::string> tags;
  friend bool operator==(const TelemetryRecord&, const TelemetryRecord&) = default;
};

/// Column layout: strut ids and their lock counts, fixed for a run.
struct TelemetryLayout {
  struct Strut {
    std::string id;
    int n_locks = 3;
    friend bool operator==(const Strut&, const Strut&) = default;
  };
  std::vector<Strut> struts;
  friend bool operator==(const TelemetryLayout&, const TelemetryLayout&) = default;
};

class TelemetryError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct TickRange {
  Tick start = 0;
  Tick end = 0;  // exclusive
};

// --- number formatting -------------------------------------------------------

[[nodiscard]] inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

[[nodiscard]] inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw TelemetryError("bad number '" + std::string(s) + "'");
  return v;
}

template <class Int>
[[nodiscard]] Int parse_int(std::string_view s) {
  Int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw TelemetryError("bad integer '" + std::string(s) + "'");
  return v;
}

// --- CSV encoding ------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline ReadingStatus parse_status(std::string_view s) {
  for (ReadingStatus r : {ReadingStatus::ok, ReadingStatus::out_of_range, ReadingStatus::stale})
    if (to_string(r) == s) return r;
  throw TelemetryError("bad status '" + std::string(s) + "'");
}

inline AlarmLevel parse_level(std::string_view s) {
  if (auto l = parse_alarm_level(s)) return *l;
  throw TelemetryError("bad alarm level '" + std::string(s) + "'");
}

inline std::string encode_alarm_event(const AlarmEvent& e) {
  std::string s = e.strut_id;
  s += ':';
  s += to_string(e.channel);
  s += ':';
  s += to_string(e.level);
  s += e.latched ? ":1" : ":0";
  s += e.acknowledged ? ":1:" : ":0:";
  s += std::to_string(e.raised_tick);
  return s;
}

inline AlarmEvent decode_alarm_event(std::string_view s) {
  const auto f = split(s, ':');
  if (f.size() != 6) throw TelemetryError("bad alarm event '" + std::string(s) + "'");
  AlarmEvent e;
  e.strut_id = std::string(f[0]);
  auto ch = parse_alarm_channel(f[1]);
  if (!ch) throw TelemetryError("bad alarm channel");
  e.channel = *ch;
  e.level = parse_level(f[2]);
  e.latched = f[3] == "1";
  e.acknowledged = f[4] == "1";
  e.raised_tick = parse_int<Tick>(f[5]);
  return e;
}

template <class T, class F>
std::string join(const std::vector<T>& items, F&& encode) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += '|';
    out += encode(items[i]);
  }
  return out;
}

}  // namespace detail

/// A tag may not contain the CSV or list separators.
[[nodiscard]] inline bool valid_tag(std::string_view t) noexcept {
  if (t.empty()) return false;
  for (char c : t)
    if (c == ',' || c == '|' || c == '"' || c == '\n' || c == '\r') return false;
  return true;
}

[[nodiscard]] inline std::string csv_header(const TelemetryLayout& layout) {
  static constexpr const char* kPerStrut[] = {
      "true_force_kn", "measured_force_kn", "force_status", "true_disp_mm",      "measured_disp_mm",
      "disp_status",   "temp_c",            "measured_temp_c", "temp_status",    "jack_ext_mm",
      "command_mm_per_s", "mode",           "setpoint",     "error_kn",          "alarm_force",
      "alarm_displacement", "alarm_temperature", "alarm_duty"};
  std::string h = "tick,time_s,ambient_c";
  for (const auto& s : layout.struts) {
    for (const char* col : kPerStrut) h += "," + s.id + "." + col;
    for (int i = 0; i < s.n_locks; ++i) h += "," + s.id + ".lock" + std::to_string(i) + "_kn";
    for (int i = 0; i < s.n_locks; ++i) h += "," + s.id + ".lock" + std::to_string(i) + "_cycles";
  }
  h += ",alarm_events,events\n";
  return h;
}

[[nodiscard]] inline std::string csv_row(const TelemetryRecord& r) {
  std::string row = std::to_string(r.tick);
  auto num = [&](double v) {
    row += ',';
    row += format_double(v);
  };
  auto str = [&](std::string_view v) {
    row += ',';
    row += v;
  };
  num(r.time_s);
  num(r.ambient_c);
  for (const auto& s : r.struts) {
    num(s.true_force_kn);
    num(s.measured_force_kn);
    str(to_string(s.force_status));
    num(s.true_disp_mm);
    num(s.measured_disp_mm);
    str(to_string(s.disp_status));
    num(s.temp_c);
    num(s.measured_temp_c);
    str(to_string(s.temp_status));
    num(s.jack_ext_mm);
    num(s.command_mm_per_s);
    str(s.mode);
    num(s.setpoint);
    num(s.error_kn);
    for (AlarmLevel l : s.alarm_levels) str(to_string(l));
    for (double l : s.lock_loads_kn) num(l);
    for (auto c : s.lock_cycles) str(std::to_string(c));
  }
  str(detail::join(r.alarm_events, detail::encode_alarm_event));
  str(detail::join(r.tags, [](const std::string& t) { return t; }));
  row += '\n';
  return row;
}

[[nodiscard]] inline TelemetryRecord parse_csv_row(std::string_view line, const TelemetryLayout& layout) {
  const auto f = detail::split(line, ',');
  std::size_t expected = 3 + 2;
  for (const auto& s : layout.struts) expected += 18 + 2 * static_cast<std::size_t>(s.n_locks);
  if (f.size() != expected) throw TelemetryError("csv row has " + std::to_string(f.size()) + " fields, expected " +
                                                 std::to_string(expected));
  std::size_t i = 0;
  TelemetryRecord r;
  r.tick = parse_int<Tick>(f[i++]);
  r.time_s = parse_double(f[i++]);
  r.ambient_c = parse_double(f[i++]);
  for (const auto& ls : layout.struts) {
    StrutRecord s;
    s.id = ls.id;
    s.true_force_kn = parse_double(f[i++]);
    s.measured_force_kn = parse_double(f[i++]);
    s.force_status = detail::parse_status(f[i++]);
    s.true_disp_mm = parse_double(f[i++]);
    s.measured_disp_mm = parse_double(f[i++]);
    s.disp_status = detail::parse_status(f[i++]);
    s.temp_c = parse_double(f[i++]);
    s.measured_temp_c = parse_double(f[i++]);
    s.temp_status = detail::parse_status(f[i++]);
    s.jack_ext_mm = parse_double(f[i++]);
    s.command_mm_per_s = parse_double(f[i++]);
    s.mode = std::string(f[i++]);
    s.setpoint = parse_double(f[i++]);
    s.error_kn = parse_double(f[i++]);
    for (auto& l : s.alarm_levels) l = detail::parse_level(f[i++]);
    for (int k = 0; k < ls.n_locks; ++k) s.lock_loads_kn.push_back(parse_double(f[i++]));
    for (int k = 0; k < ls.n_locks; ++k) s.lock_cycles.push_back(parse_int<std::uint64_t>(f[i++]));
    r.struts.push_back(std::move(s));
  }
  if (!f[i].empty())
    for (auto e : detail::split(f[i], '|')) r.alarm_events.push_back(detail::decode_alarm_event(e));
  ++i;
  if (!f[i].empty())
    for (auto t : detail::split(f[i], '|')) r.tags.emplace_back(t);
  return r;
}

[[nodiscard]] inline std::vector<TelemetryRecord> parse_csv(std::istream& in, const TelemetryLayout& layout) {
  std::string line;
  if (!std::getline(in, line)) throw TelemetryError("empty csv");
  if (line + "\n" != csv_header(layout)) throw TelemetryError("csv header does not match layout");
  std::vector<TelemetryRecord> out;
  while (std::getline(in, line)) out.push_back(parse_csv_row(line, layout));
  return out;
}

// --- line-delimited JSON -------------------------------------------------------

[[nodiscard]] inline nlohmann::ordered_json to_json(const AlarmEvent& e) {
  nlohmann::ordered_json j;
  j["strut_id"] = e.strut_id;
  j["channel"] = to_string(e.channel);
  j["level"] = to_string(e.level);
  j["latched"] = e.latched;
  j["acknowledged"] = e.acknowledged;
  j["raised_tick"] = e.raised_tick;
  return j;
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const TelemetryRecord& r) {
  nlohmann::ordered_json j;
  j["tick"] = r.tick;
  j["time_s"] = r.time_s;
  j["ambient_c"] = r.ambient_c;
  auto& struts = j["struts"] = nlohmann::ordered_json::array();
  for (const auto& s : r.struts) {
    nlohmann::ordered_json o;
    o["id"] = s.id;
    o["true_force_kn"] = s.true_force_kn;
    o["measured_force_kn"] = s.measured_force_kn;
    o["force_status"] = to_string(s.force_status);
    o["true_disp_mm"] = s.true_disp_mm;
    o["measured_disp_mm"] = s.measured_disp_mm;
    o["disp_status"] = to_string(s.disp_status);
    o["temp_c"] = s.temp_c;
    o["measured_temp_c"] = s.measured_temp_c;
    o["temp_status"] = to_string(s.temp_status);
    o["jack_ext_mm"] = s.jack_ext_mm;
    o["command_mm_per_s"] = s.command_mm_per_s;
    o["mode"] = s.mode;
    o["setpoint"] = s.setpoint;
    o["error_kn"] = s.error_kn;
    auto& alarms = o["alarms"] = nlohmann::ordered_json::object();
    for (AlarmChannel c : kAlarmChannels) alarms[std::string(to_string(c))] = to_string(s.alarm_levels[static_cast<int>(c)]);
    o["lock_loads_kn"] = s.lock_loads_kn;
    o["lock_cycles"] = s.lock_cycles;
    struts.push_back(std::move(o));
  }
  auto& ev = j["alarm_events"] = nlohmann::ordered_json::array();
  for (const auto& e : r.alarm_events) ev.push_back(to_json(e));
  j["events"] = r.tags;
  return j;
}

// --- store -----------------------------------------------------------------------

/// Single writer, many readers. Records are immutable once appended.
class TelemetryStore {
 public:
  explicit TelemetryStore(TelemetryLayout layout = {}) : layout_(std::move(layout)) {}

  void record(TelemetryRecord rec) {
    std::unique_lock lock(mu_);
    const Tick expected = records_.empty() ? 0 : records_.back().tick + 1;
    if (rec.tick != expected)
      throw TelemetryError("record tick " + std::to_string(rec.tick) + " but expected " + std::to_string(expected));
    records_.push_back(std::move(rec));
  }

  /// Half-open [start, end) selection, optionally projected to one strut.
  [[nodiscard]] std::vector<TelemetryRecord> query(TickRange range, const std::optional<std::string>& strut_id = {}) const {
    if (range.end < range.start) throw std::invalid_argument("inverted tick range");
    std::shared_lock lock(mu_);
    std::vector<TelemetryRecord> out;
    const Tick first = std::max<Tick>(range.start, 0);
    const Tick last = std::min<Tick>(range.end, static_cast<Tick>(records_.size()));
    for (Tick t = first; t < last; ++t) {
      TelemetryRecord r = records_[static_cast<std::size_t>(t)];
      if (strut_id) project(r, *strut_id);
      out.push_back(std::move(r));
    }
    return out;
  }

  [[nodiscard]] std::size_t size() const {
    std::shared_lock lock(mu_);
    return records_.size();
  }

  [[nodiscard]] const TelemetryLayout& layout() const noexcept { return layout_; }

  void export_csv(std::ostream& out) const {
    std::shared_lock lock(mu_);
    out << csv_header(layout_);
    for (const auto& r : records_) out << csv_row(r);
    if (!out) throw std::runtime_error("telemetry export: output sink failure");
  }

  void export_jsonl(std::ostream& out) const {
    std::shared_lock lock(mu_);
    for (const auto& r : records_) out << to_json(r).dump() << '\n';
    if (!out) throw std::runtime_error("telemetry export: output sink failure");
  }

  [[nodiscard]] std::string csv() const {
    std::ostringstream ss;
    export_csv(ss);
    return ss.str();
  }

  /// Drops other struts' channels, their alarm events and their lock data.
  static void project(TelemetryRecord& r, const std::string& strut_id) {
    std::erase_if(r.struts, [&](const StrutRecord& s) { return s.id != strut_id; });
    std::erase_if(r.alarm_events, [&](const AlarmEvent& e) { return e.strut_id != strut_id; });
  }

 private:
  TelemetryLayout layout_;
  mutable std::shared_mutex mu_;
  std::vector<TelemetryRecord> records_;
};

}  // namespace strutservo
