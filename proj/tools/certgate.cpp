// Command line front end for risk-gated configuration search.
//
// Exit codes:
//   0  success (including --help)
//   1  usage or configuration errors
//   2  validation failure (observed rates outside the declared bounds)
//   3  replay divergence or unreadable transcript

#include <cstddef>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "certgate/experiment.hpp"

namespace {

int do_run(const std::string& config_path, const std::string& out_root) {
  const auto cfg = certgate::ExperimentConfig::load(config_path);
  auto [result, paths] = certgate::run_experiment(cfg, out_root);
  std::cout << "wrote " << paths.dir.string() << "\n"
            << "rounds: " << cfg.gate.total_rounds << "\n"
            << "entries: " << result.registry.entries.size() << "\n"
            << "commits: " << result.registry.commits() << "\n"
            << "incumbent: " << result.incumbent.id << "\n"
            << "budget spent: " << certgate::format_real(result.budget.spent)
            << "\n";
  return 0;
}

int do_replay(const std::string& transcript_path) {
  const auto r = certgate::replay_file(transcript_path);
  if (!r.ok) {
    std::cerr << "replay divergence: " << r.message << "\n";
    return 3;
  }
  std::cout << "replay ok: " << transcript_path << "\n";
  return 0;
}

int do_validate(const std::string& config_path, std::size_t trials,
                std::size_t threads) {
  const auto cfg = certgate::ExperimentConfig::load(config_path);
  const auto report = certgate::validate_experiment(cfg, trials, threads);
  std::cout << "validate " << report.name << ": role=" << report.role
            << " trials=" << report.trials
            << " accepts=" << report.accept_runs
            << " rate=" << certgate::format_real(report.rate);
  if (report.role == "null") {
    std::cout << " bound=" << certgate::format_real(report.bound);
  } else {
    std::cout << " power_floor="
              << certgate::format_real(report.power_floor);
  }
  std::cout << " -> " << (report.pass ? "PASS" : "FAIL") << "\n";
  return report.pass ? 0 : 2;
}

int do_report(const std::string& rundir) {
  std::cout << certgate::report_run(rundir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "certgate: statistically certified configuration edits.\n"
      "Runs a screen-then-confirm gate over proposed configuration\n"
      "changes; every accepted edit carries a certificate priced\n"
      "against a global error budget, and every run leaves a byte-\n"
      "replayable transcript."};
  app.require_subcommand(1);

  std::string run_config;
  std::string out_root;
  auto* run = app.add_subcommand(
      "run", "Run an experiment and record its transcript");
  run->add_option("config", run_config, "Experiment config JSON file")
      ->required();
  run->add_option("--out", out_root,
                  "Output root (default: $CERTGATE_OUTPUT_ROOT or ./runs)");

  std::string replay_path;
  auto* replay = app.add_subcommand(
      "replay", "Recompute a recorded transcript and compare bytes");
  replay->add_option("transcript", replay_path, "transcript.jsonl file")
      ->required();

  std::string validate_config;
  std::size_t trials = 0;
  std::size_t threads = 0;
  auto* validate = app.add_subcommand(
      "validate", "Estimate run-level acceptance rates over many trials");
  validate->add_option("config", validate_config,
                       "Experiment config JSON file (needs a validate block)")
      ->required();
  validate->add_option("--trials", trials, "Number of independent trials")
      ->required();
  validate->add_option("--threads", threads,
                       "Worker threads (default: hardware)");

  std::string report_dir;
  auto* report =
      app.add_subcommand("report", "Summarize a recorded run directory");
  report->add_option("rundir", report_dir, "Directory written by 'run'")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return do_run(run_config, out_root);
    if (replay->parsed()) return do_replay(replay_path);
    if (validate->parsed()) {
      return do_validate(validate_config, trials, threads);
    }
    if (report->parsed()) return do_report(report_dir);
  } catch (const certgate::ReplayError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const certgate::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
