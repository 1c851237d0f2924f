// strutservo: run, validate and replay strut servo scenarios.
//
// Exit codes: 0 clean finish, 1 terminal structural fault, 2 invalid input,
// 3 replay output differs from --expect.

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "strutservo/gateway.hpp"
#include "strutservo/runner.hpp"
#include "strutservo/scenario.hpp"
#include "strutservo/server.hpp"

namespace fs = std::filesystem;
using namespace strutservo;

namespace {

constexpr int kExitFault = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitMismatch = 3;

std::atomic<bool> g_stop{false};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("strutservo");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%^%l%$ %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* v = std::getenv("STRUTSERVO_LOG")) {
    auto lvl = spdlog::level::from_str(v);
    // from_str maps unknown names to "off"; only honour that when asked for.
    if (lvl != spdlog::level::off || std::string_view(v) == "off") spdlog::set_level(lvl);
    else spdlog::warn("STRUTSERVO_LOG='{}' not understood, using info", v);
  }
}

std::optional<Scenario> load(const std::string& path) {
  try {
    return load_scenario_file(path);
  } catch (const ScenarioError& e) {
    std::cerr << "invalid scenario " << path << ": " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "invalid scenario " << path << ": " << e.what() << "\n";
  }
  return std::nullopt;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_summary(const RunResult& r) {
  const auto& s = r.summary;
  std::cout << s.scenario << " seed " << s.seed << ": " << to_string(s.status) << " after " << s.ticks << " ticks";
  if (!s.failure.empty()) std::cout << " (" << s.failure << ")";
  std::cout << "\n";
  for (const auto& st : s.struts) {
    std::cout << "  " << st.id << "  final F " << format_double(st.final_force_kn) << " kN, max |F-sp| "
              << format_double(st.max_abs_force_error_kn) << " kN, max |w| " << format_double(st.max_abs_wall_disp_mm)
              << " mm, settled at " << (st.settling_tick ? std::to_string(*st.settling_tick) : "-") << "\n";
  }
  if (r.dir) std::cout << "  output: " << r.dir->string() << "\n";
}

int exit_for(const RunResult& r) { return r.summary.status == RunStatus::failed ? kExitFault : 0; }

struct ServeOptions {
  std::string tcp_addr;
  std::string http_addr;
  std::string console_dir;
  std::string token;
  double linger_s = 0.0;
};

int run_command(Scenario sc, std::optional<std::uint64_t> seed, const fs::path& out, bool realtime, double speed,
                const ServeOptions& serve) {
  if (seed) sc.seed = *seed;
  if (!serve.token.empty()) sc.gateway_token = serve.token;

  RunOptions opt;
  opt.out_dir = out;
  opt.stop = &g_stop;
  const bool serving = !serve.tcp_addr.empty() || !serve.http_addr.empty();
  if (realtime || serving) opt.seconds_per_tick = sc.dt_s / speed;

  CommandQueue queue;
  opt.store = std::make_shared<TelemetryStore>(layout_of(sc));
  std::unique_ptr<GatewayHub> hub;
  std::unique_ptr<LineServer> tcp;
  std::unique_ptr<HttpServer> http;
  if (serving) {
    hub = std::make_unique<GatewayHub>(sc, queue, opt.store, sc.gateway_token);
    opt.queue = &queue;
    opt.on_tick = [&](const StateSnapshot& s, const StepResult& r) {
      hub->on_tick(s, r);
      for (const auto& t : r.record.tags)
        if (t.rfind("cmd:", 0) == 0) spdlog::info("tick {}: {}", r.record.tick, t);
    };
    try {
      if (!serve.tcp_addr.empty()) {
        tcp = std::make_unique<LineServer>(*hub);
        tcp->start(parse_endpoint(serve.tcp_addr));
        spdlog::info("gateway listening on tcp port {}", tcp->port());
      }
      if (!serve.http_addr.empty()) {
        http = std::make_unique<HttpServer>(*hub);
        if (!serve.console_dir.empty()) http->mount_static(serve.console_dir);
        http->start(parse_endpoint(serve.http_addr));
        spdlog::info("http listening on port {}", http->port());
      }
    } catch (const std::exception& e) {
      std::cerr << "cannot start gateway: " << e.what() << "\n";
      return kExitInvalid;
    }
  }

  spdlog::debug("running {} for {} ticks, seed {}", sc.name, sc.duration_ticks, sc.seed);
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r = run(sc, opt);
  spdlog::debug("run took {} ms",
                std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count());
  print_summary(r);

  if (serving && serve.linger_s > 0) {
    spdlog::info("run over, serving history for {} s", serve.linger_s);
    const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(serve.linger_s);
    while (!g_stop && std::chrono::steady_clock::now() < until) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  if (tcp) tcp->stop();
  if (http) http->stop();
  return exit_for(r);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });

  CLI::App app{"Steel strut axial-force servo twin"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs";
  bool realtime = false;
  double speed = 1.0;
  ServeOptions serve;

  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write <out>/<name>-<seed>/");
  run_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
  run_cmd->add_option("--seed", seed, "Override the scenario seed");
  run_cmd->add_option("--out", out_dir, "Output root directory")->capture_default_str();
  run_cmd->add_flag("--realtime", realtime, "Pace ticks at dt_s of wall clock");
  run_cmd->add_option("--speed", speed, "Pacing multiplier for --realtime/--serve")->check(CLI::PositiveNumber);
  run_cmd->add_option("--serve", serve.tcp_addr, "Start the command/state gateway on host:port (implies pacing)");
  run_cmd->add_option("--http", serve.http_addr, "HTTP history and console endpoint on host:port");
  run_cmd->add_option("--console", serve.console_dir, "Static console directory served over --http");
  run_cmd->add_option("--token", serve.token, "Gateway token (overrides the scenario's)");
  run_cmd->add_option("--linger", serve.linger_s, "Keep serving this many seconds after the run ends");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a scenario file and exit");
  validate_cmd->add_option("scenario", validate_path, "Scenario file")->required();

  std::string replay_scenario, replay_log, expect;
  std::optional<std::uint64_t> replay_seed;
  std::string replay_out = "replays";
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a scenario under a recorded command log");
  replay_cmd->add_option("scenario", replay_scenario, "Scenario file")->required();
  replay_cmd->add_option("command-log", replay_log, "commands.log from an earlier run")->required();
  replay_cmd->add_option("--seed", replay_seed, "Seed of the recorded run");
  replay_cmd->add_option("--out", replay_out, "Output root directory")->capture_default_str();
  replay_cmd->add_option("--expect", expect, "run.csv to compare byte-for-byte");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitInvalid;
  }

  if (*validate_cmd) {
    auto sc = load(validate_path);
    if (!sc) return kExitInvalid;
    std::cout << "ok: " << sc->name << ", " << sc->struts.size() << " strut(s), " << sc->duration_ticks << " ticks of "
              << format_double(sc->dt_s) << " s\n";
    return 0;
  }

  if (*run_cmd) {
    auto sc = load(scenario_path);
    if (!sc) return kExitInvalid;
    return run_command(std::move(*sc), seed, out_dir, realtime, speed, serve);
  }

  // replay
  auto sc = load(replay_scenario);
  if (!sc) return kExitInvalid;
  if (replay_seed) sc->seed = *replay_seed;
  std::ifstream log_in(replay_log, std::ios::binary);
  if (!log_in) {
    std::cerr << "cannot open command log " << replay_log << "\n";
    return kExitInvalid;
  }
  RunOptions opt;
  opt.out_dir = replay_out;
  try {
    opt.replay_log = read_command_log(log_in);
  } catch (const std::exception& e) {
    std::cerr << "invalid command log: " << e.what() << "\n";
    return kExitInvalid;
  }
  RunResult r = run(*sc, opt);
  print_summary(r);
  if (!expect.empty()) {
    const bool same = slurp(*r.dir / "run.csv") == slurp(expect);
    std::cout << (same ? "replay matches " : "replay DIFFERS from ") << expect << "\n";
    if (!same) return kExitMismatch;
  }
  return exit_for(r);
}
