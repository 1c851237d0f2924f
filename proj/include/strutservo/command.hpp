#pragma once

// Operator commands and their outcomes, plus the `command` / `outcome`
// wire encodings (newline-delimited JSON, "v":1).

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "strutservo/sensors.hpp"

namespace strutservo {

enum class CommandKind {
  set_force_setpoint,
  set_displacement_setpoint,
  set_mode,
  jog_jack,
  ack_alarm,
  e_stop,
  reset,
  inject_stage,
  inject_temp_ramp,
};

inline constexpr std::string_view kCommandKindNames[] = {
    "set_force_setpoint", "set_displacement_setpoint", "set_mode", "jog_jack",         "ack_alarm",
    "e_stop",             "reset",                     "inject_stage", "inject_temp_ramp",
};

[[nodiscard]] constexpr std::string_view to_string(CommandKind k) noexcept {
  return kCommandKindNames[static_cast<int>(k)];
}

[[nodiscard]] inline std::optional<CommandKind> parse_command_kind(std::string_view s) noexcept {
  for (int i = 0; i < static_cast<int>(std::size(kCommandKindNames)); ++i)
    if (kCommandKindNames[i] == s) return static_cast<CommandKind>(i);
  return std::nullopt;
}

[[nodiscard]] constexpr bool needs_strut(CommandKind k) noexcept {
  return k != CommandKind::e_stop && k != CommandKind::reset && k != CommandKind::inject_temp_ramp;
}

struct OperatorCommand {
  CommandKind kind = CommandKind::e_stop;
  std::string strut_id;
  double value = 0.0;         // setpoint, jog rate, stage increment, ramp delta
  std::string mode;           // set_mode
  std::string channel;        // ack_alarm
  std::int64_t duration_ticks = 0;  // inject_temp_ramp
  std::string client_id;
  std::int64_t client_seq = 0;
  friend bool operator==(const OperatorCommand&, const OperatorCommand&) = default;
};

struct CommandOutcome {
  std::string client_id;
  std::int64_t client_seq = 0;
  bool accepted = false;
  std::string reason;
  std::optional<Tick> applied_tick;
  friend bool operator==(const CommandOutcome&, const CommandOutcome&) = default;
};

/// A command as the engine sees it: validated, with its boundary tick.
struct AppliedCommand {
  Tick tick = 0;
  OperatorCommand command;
  friend bool operator==(const AppliedCommand&, const AppliedCommand&) = default;
};

class MalformedCommand : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Json = nlohmann::ordered_json;

[[nodiscard]] inline Json to_json(const OperatorCommand& c) {
  Json j;
  j["v"] = 1;
  j["type"] = "command";
  j["client_id"] = c.client_id;
  j["client_seq"] = c.client_seq;
  j["kind"] = to_string(c.kind);
  if (needs_strut(c.kind)) j["strut_id"] = c.strut_id;
  switch (c.kind) {
    case CommandKind::set_force_setpoint:
    case CommandKind::set_displacement_setpoint:
    case CommandKind::jog_jack:
    case CommandKind::inject_stage:
      j["value"] = c.value;
      break;
    case CommandKind::inject_temp_ramp:
      j["value"] = c.value;
      j["duration_ticks"] = c.duration_ticks;
      break;
    case CommandKind::set_mode:
      j["mode"] = c.mode;
      break;
    case CommandKind::ack_alarm:
      j["channel"] = c.channel;
      break;
    case CommandKind::e_stop:
    case CommandKind::reset:
      break;
  }
  return j;
}

/// Parses a `command` message. Unknown fields are ignored.
[[nodiscard]] inline OperatorCommand command_from_json(const Json& j) {
  auto need = [&](const char* key) -> const Json& {
    if (!j.is_object() || !j.contains(key)) throw MalformedCommand(std::string("missing field '") + key + "'");
    return j.at(key);
  };
  auto str = [&](const char* key) {
    const Json& v = need(key);
    if (!v.is_string()) throw MalformedCommand(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
  };
  auto num = [&](const char* key) {
    const Json& v = need(key);
    if (!v.is_number()) throw MalformedCommand(std::string("field '") + key + "' must be a number");
    return v.get<double>();
  };
  auto integer = [&](const char* key) {
    const Json& v = need(key);
    if (!v.is_number_integer()) throw MalformedCommand(std::string("field '") + key + "' must be an integer");
    return v.get<std::int64_t>();
  };

  OperatorCommand c;
  const auto kind = parse_command_kind(str("kind"));
  if (!kind) throw MalformedCommand("unknown command kind");
  c.kind = *kind;
  c.client_id = str("client_id");
  c.client_seq = integer("client_seq");
  if (needs_strut(c.kind)) c.strut_id = str("strut_id");
  switch (c.kind) {
    case CommandKind::set_force_setpoint:
    case CommandKind::set_displacement_setpoint:
    case CommandKind::jog_jack:
    case CommandKind::inject_stage:
      c.value = num("value");
      break;
    case CommandKind::inject_temp_ramp:
      c.value = num("value");
      c.duration_ticks = integer("duration_ticks");
      break;
    case CommandKind::set_mode:
      c.mode = str("mode");
      break;
    case CommandKind::ack_alarm:
      c.channel = str("channel");
      break;
    case CommandKind::e_stop:
    case CommandKind::reset:
      break;
  }
  return c;
}

[[nodiscard]] inline Json to_json(const CommandOutcome& o) {
  Json j;
  j["v"] = 1;
  j["type"] = "outcome";
  j["client_id"] = o.client_id;
  j["client_seq"] = o.client_seq;
  j["accepted"] = o.accepted;
  if (!o.accepted) j["reason"] = o.reason;
  if (o.applied_tick) j["applied_tick"] = *o.applied_tick;
  return j;
}

[[nodiscard]] inline CommandOutcome outcome_from_json(const Json& j) {
  CommandOutcome o;
  o.client_id = j.at("client_id").get<std::string>();
  o.client_seq = j.at("client_seq").get<std::int64_t>();
  o.accepted = j.at("accepted").get<bool>();
  if (j.contains("reason")) o.reason = j.at("reason").get<std::string>();
  if (j.contains("applied_tick")) o.applied_tick = j.at("applied_tick").get<Tick>();
  return o;
}

/// One line of a command log: the command plus the tick it was applied at.
[[nodiscard]] inline Json to_json(const AppliedCommand& a) {
  Json j = to_json(a.command);
  j["tick"] = a.tick;
  return j;
}

[[nodiscard]] inline AppliedCommand applied_from_json(const Json& j) {
  if (!j.contains("tick") || !j.at("tick").is_number_integer()) throw MalformedCommand("missing field 'tick'");
  return {j.at("tick").get<Tick>(), command_from_json(j)};
}

}  // namespace strutservo
