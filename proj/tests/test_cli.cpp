#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

// End-to-end checks against the installed binary: every subcommand and
// every documented exit code, driven exactly as a user would.

std::string cli_bin() {
  const char* p = std::getenv("CERTGATE_BIN");
  REQUIRE(p != nullptr);
  return p;
}

std::string config_path(const std::string& name) {
  return CERTGATE_CONFIG_DIR "/"s + name;
}

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

// Runs `cmd` through the shell with stdout and stderr folded into one
// capture file; callers assert on the exit code and the combined text.
CmdResult run_cmd(const std::string& cmd) {
  static int counter = 0;
  const fs::path log =
      fs::temp_directory_path() /
      ("certgate_cli_" + std::to_string(::getpid()) + "_" +
       std::to_string(counter++) + ".log");
  const std::string full = cmd + " > " + log.string() + " 2>&1";
  const int raw = std::system(full.c_str());
  CmdResult r;
  if (raw != -1 && WIFEXITED(raw)) r.exit_code = WEXITSTATUS(raw);
  std::ifstream in(log, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  r.output = buf.str();
  fs::remove(log);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() /
                   (name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  REQUIRE(out.good());
}

}  // namespace

TEST_CASE("help and bad usage") {
  auto help = run_cmd(cli_bin() + " --help");
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("run") != std::string::npos);
  CHECK(help.output.find("replay") != std::string::npos);
  CHECK(help.output.find("validate") != std::string::npos);
  CHECK(help.output.find("report") != std::string::npos);

  CHECK(run_cmd(cli_bin()).exit_code != 0);
  CHECK(run_cmd(cli_bin() + " frobnicate").exit_code != 0);
  CHECK(run_cmd(cli_bin() + " run").exit_code != 0);
}

TEST_CASE("run rejects unreadable and malformed configs") {
  auto missing = run_cmd(cli_bin() + " run /nonexistent/nope.json");
  CHECK(missing.exit_code == 1);
  CHECK(missing.output.find("error:") != std::string::npos);

  const auto dir = fresh_dir("certgate_cli_badcfg");
  const auto bad = dir / "bad.json";
  spit(bad, "{\"name\": }\n");
  auto malformed = run_cmd(cli_bin() + " run " + bad.string());
  CHECK(malformed.exit_code == 1);
  CHECK(malformed.output.find("error:") != std::string::npos);
  CHECK(malformed.output.find("bad.json") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("run, replay, tamper, report round trip") {
  const auto out_root = fresh_dir("certgate_cli_run");

  auto run = run_cmd(cli_bin() + " run " + config_path("offset_cths.json") +
                     " --out " + out_root.string());
  REQUIRE(run.exit_code == 0);
  CHECK(run.output.find("commits: 1") != std::string::npos);

  // The first output line is "wrote <dir>"; everything downstream keys
  // off that directory rather than assuming its layout.
  REQUIRE(run.output.rfind("wrote ", 0) == 0);
  const auto eol = run.output.find('\n');
  REQUIRE(eol != std::string::npos);
  const fs::path rundir = run.output.substr(6, eol - 6);
  REQUIRE(fs::exists(rundir / "transcript.jsonl"));
  REQUIRE(fs::exists(rundir / "summary.csv"));
  REQUIRE(fs::exists(rundir / "final.json"));

  const auto transcript = rundir / "transcript.jsonl";
  auto replay = run_cmd(cli_bin() + " replay " + transcript.string());
  CHECK(replay.exit_code == 0);
  CHECK(replay.output.find("replay ok") != std::string::npos);

  // Flipping the recorded decision on the committed confirmation must
  // surface as a divergence, not a silent pass.
  auto text = slurp(transcript);
  const auto pos = text.find("\"decision\":\"accept\"");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 19, "\"decision\":\"reject\"");
  const auto tampered = out_root / "tampered.jsonl";
  spit(tampered, text);
  auto diverged = run_cmd(cli_bin() + " replay " + tampered.string());
  CHECK(diverged.exit_code == 3);
  CHECK(diverged.output.find("divergence") != std::string::npos);

  auto not_json = run_cmd(cli_bin() + " replay " + config_path("offset_cths.json"));
  CHECK(not_json.exit_code == 3);

  auto report = run_cmd(cli_bin() + " report " + rundir.string());
  CHECK(report.exit_code == 0);
  CHECK(report.output.find("run: offset_cths") != std::string::npos);
  CHECK(report.output.find("schedule=cths") != std::string::npos);
  CHECK(report.output.find("commits: 1") != std::string::npos);
  CHECK(report.output.find("confirm accept") != std::string::npos);

  fs::remove_all(out_root);
}

TEST_CASE("output root falls back to the environment variable") {
  const auto out_root = fresh_dir("certgate_cli_envroot");
  auto run = run_cmd("CERTGATE_OUTPUT_ROOT=" + out_root.string() + " " +
                     cli_bin() + " run " + config_path("offset_harmonic.json"));
  REQUIRE(run.exit_code == 0);
  CHECK(run.output.find("commits: 0") != std::string::npos);
  CHECK(fs::exists(out_root / "offset_harmonic" / "transcript.jsonl"));
  fs::remove_all(out_root);
}

TEST_CASE("validate subcommand") {
  auto too_few = run_cmd(cli_bin() + " validate " +
                         config_path("power_hoeffding.json") + " --trials 50");
  CHECK(too_few.exit_code == 1);
  CHECK(too_few.output.find("error:") != std::string::npos);

  auto no_block = run_cmd(cli_bin() + " validate " +
                          config_path("offset_harmonic.json") +
                          " --trials 200");
  CHECK(no_block.exit_code == 1);
  CHECK(no_block.output.find("validate") != std::string::npos);

  auto pass = run_cmd(cli_bin() + " validate " +
                      config_path("power_hoeffding.json") +
                      " --trials 120 --threads 4");
  CHECK(pass.exit_code == 0);
  CHECK(pass.output.find("role=alternative") != std::string::npos);
  CHECK(pass.output.find("PASS") != std::string::npos);
}
