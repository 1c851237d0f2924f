#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(STRUTSERVO_CLI) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

struct TempDir {
  fs::path path = fs::temp_directory_path() / ("strutservo-cli-" + std::to_string(::getpid()) + "-" +
                                               std::to_string(std::rand()));
  TempDir() { fs::create_directories(path); }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kScenarios = STRUTSERVO_SCENARIO_DIR;

}  // namespace

TEST(Cli, ValidateAcceptsGoodAndRejectsBadFiles) {
  TempDir t;
  EXPECT_EQ(cli("validate " + kScenarios + "/excavation.json"), 0);
  EXPECT_EQ(cli("validate " + t.write("bad.json", R"({"struts":[{"id":"S1","stiffness":3}]})").string()), 2);
  EXPECT_EQ(cli("validate " + (t.path / "missing.json").string()), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
}

TEST(Cli, RunWritesArtifactsAndReplayMatches) {
  TempDir t;
  ASSERT_EQ(cli("run " + kScenarios + "/minimal.json --seed 9 --out " + t.path.string()), 0);
  const auto dir = t.path / "minimal-9";
  for (const char* f : {"run.csv", "events.log", "commands.log", "summary.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(cli("replay " + kScenarios + "/minimal.json " + (dir / "commands.log").string() + " --seed 9 --out " +
                (t.path / "r").string() + " --expect " + (dir / "run.csv").string()),
            0);
  EXPECT_EQ(slurp(t.path / "r" / "minimal-9" / "run.csv"), slurp(dir / "run.csv"));
  // A different seed cannot reproduce the recording.
  EXPECT_EQ(cli("replay " + kScenarios + "/minimal.json " + (dir / "commands.log").string() + " --seed 10 --out " +
                (t.path / "r").string() + " --expect " + (dir / "run.csv").string()),
            3);
}

TEST(Cli, TerminalFaultExitsNonzero) {
  TempDir t;
  const auto sc = t.write("fault.json", R"({"name":"fault","duration_ticks":30,
      "struts":[{"id":"S1","locks":{"n_locks":1}}],"lock_faults":[{"tick":5,"strut":"S1","lock":0}]})");
  EXPECT_EQ(cli("run " + sc.string() + " --out " + t.path.string()), 1);
  EXPECT_NE(slurp(t.path / "fault-1" / "summary.json").find("\"failed\""), std::string::npos);
}
