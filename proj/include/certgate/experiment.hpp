#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "certgate/cmaes.hpp"
#include "certgate/errors.hpp"
#include "certgate/gate.hpp"
#include "certgate/harness.hpp"
#include "certgate/propose.hpp"
#include "certgate/transcript.hpp"

namespace certgate {

// Experiment descriptions tie the pieces together: a gate setup, an
// evaluation harness, a proposer, and a baseline configuration, all
// loaded from one JSON file. The loaded JSON is kept verbatim and
// embedded in the transcript header, which is what makes a transcript
// self-contained: replay rebuilds the whole experiment from the header
// alone and never needs the original file.

namespace detail {

inline std::string join_path(const std::string& scope, const char* key) {
  return scope.empty() ? std::string(key) : scope + "." + key;
}

inline const nlohmann::json& need(const nlohmann::json& obj,
                                  const std::string& scope, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ConfigError("config key '" + join_path(scope, key) + "' is missing");
  }
  return obj.at(key);
}

inline std::string need_string(const nlohmann::json& obj,
                               const std::string& scope, const char* key) {
  const auto& v = need(obj, scope, key);
  if (!v.is_string()) {
    throw ConfigError("config key '" + join_path(scope, key) +
                      "': expected a string");
  }
  return v.get<std::string>();
}

inline double need_real(const nlohmann::json& obj, const std::string& scope,
                        const char* key) {
  const auto& v = need(obj, scope, key);
  if (!v.is_number()) {
    throw ConfigError("config key '" + join_path(scope, key) +
                      "': expected a number");
  }
  return v.get<double>();
}

inline std::size_t need_count(const nlohmann::json& obj,
                              const std::string& scope, const char* key) {
  const auto& v = need(obj, scope, key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw ConfigError("config key '" + join_path(scope, key) +
                      "': expected a nonnegative integer");
  }
  return static_cast<std::size_t>(v.get<std::int64_t>());
}

inline double opt_real(const nlohmann::json& obj, const std::string& scope,
                       const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  return need_real(obj, scope, key);
}

inline std::size_t opt_count(const nlohmann::json& obj,
                             const std::string& scope, const char* key,
                             std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  return need_count(obj, scope, key);
}

inline bool opt_bool(const nlohmann::json& obj, const std::string& scope,
                     const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) {
    throw ConfigError("config key '" + join_path(scope, key) +
                      "': expected a boolean");
  }
  return v.get<bool>();
}

inline ParamValue param_from_json(const nlohmann::json& v,
                                  const std::string& where) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) return v.get<double>();
  if (v.is_string()) return v.get<std::string>();
  throw ConfigError("config key '" + where +
                    "': parameter values must be numbers or strings");
}

inline Configuration config_from_json(const nlohmann::json& obj,
                                      const std::string& scope) {
  if (!obj.is_object()) {
    throw ConfigError("config key '" + scope +
                      "': expected an object of parameters");
  }
  std::map<std::string, ParamValue> params;
  for (const auto& [key, value] : obj.items()) {
    params[key] = param_from_json(value, scope + "." + key);
  }
  if (params.empty()) {
    throw ConfigError("config key '" + scope + "': no parameters");
  }
  return Configuration::make(std::move(params));
}

inline std::size_t line_of_byte(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') line += 1;
  }
  return line;
}

}  // namespace detail

struct HarnessSpec {
  std::string type;  // "synthetic" | "cmaes"
  SyntheticSpec synthetic;
  std::size_t dim = 0;
  std::size_t budget_evals = 0;
  double delta_lo = -1.0;
  double delta_hi = 1.0;
  std::uint64_t salt = 0;
};

struct ProposerSpec {
  ProposerKind kind = ProposerKind::preset;
  std::vector<Configuration> presets;
  ParamSpace space;
  std::size_t per_round = 1;
};

struct ValidateSpec {
  std::string role = "null";  // "null" | "alternative"
  double power_floor = 0.8;
};

struct ExperimentConfig {
  std::string name;
  GateConfig gate;
  HarnessSpec harness;
  ProposerSpec proposer;
  Configuration baseline;
  std::uint64_t run_seed = 0;
  std::optional<ValidateSpec> validate;
  nlohmann::json raw;

  static ExperimentConfig from_json(const nlohmann::json& root) {
    if (!root.is_object()) {
      throw ConfigError("config root: expected a JSON object");
    }
    ExperimentConfig cfg;
    cfg.raw = root;
    cfg.name = detail::need_string(root, "", "name");
    if (cfg.name.empty()) {
      throw ConfigError("config key 'name': must not be empty");
    }

    const auto& g = detail::need(root, "", "gate");
    cfg.gate.mode = certify_mode_from(detail::need_string(g, "gate", "mode"));
    cfg.gate.schedule =
        schedule_kind_from(detail::need_string(g, "gate", "schedule"));
    cfg.gate.global_delta = detail::need_real(g, "gate", "global_delta");
    cfg.gate.horizon = detail::need_count(g, "gate", "horizon");
    cfg.gate.total_rounds = detail::need_count(g, "gate", "total_rounds");
    cfg.gate.screen_seeds = detail::need_count(g, "gate", "screen_seeds");
    cfg.gate.confirm_seeds = detail::need_count(g, "gate", "confirm_seeds");
    cfg.gate.screen_threshold =
        detail::need_real(g, "gate", "screen_threshold");
    cfg.gate.proposal_period =
        detail::opt_count(g, "gate", "proposal_period", 1);
    cfg.gate.stagnation_window =
        detail::opt_count(g, "gate", "stagnation_window", 0);
    cfg.gate.stagnation_epsilon =
        detail::opt_real(g, "gate", "stagnation_epsilon", 0.0);
    cfg.gate.wealth_reset_on_commit =
        detail::opt_bool(g, "gate", "wealth_reset_on_commit", false);
    cfg.gate.r_lo = detail::need_real(g, "gate", "r_lo");
    cfg.gate.r_hi = detail::need_real(g, "gate", "r_hi");
    cfg.gate.max_candidates =
        detail::opt_count(g, "gate", "max_candidates", 1);
    try {
      cfg.gate.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("config key 'gate': ") + e.what());
    }

    const auto& h = detail::need(root, "", "harness");
    cfg.harness.type = detail::need_string(h, "harness", "type");
    cfg.harness.salt = detail::opt_count(h, "harness", "salt", 0);
    cfg.harness.delta_lo = detail::need_real(h, "harness", "delta_lo");
    cfg.harness.delta_hi = detail::need_real(h, "harness", "delta_hi");
    if (cfg.harness.type == "synthetic") {
      SyntheticSpec& spec = cfg.harness.synthetic;
      spec.family = synthetic_family_from(
          detail::need_string(h, "harness", "family"));
      spec.base_mean = detail::need_real(h, "harness", "base_mean");
      spec.base_sd = detail::need_real(h, "harness", "base_sd");
      spec.seed_corr = detail::opt_real(h, "harness", "seed_corr", 0.75);
      spec.confirm_offset =
          detail::opt_real(h, "harness", "confirm_offset", 0.0);
      spec.delta_lo = cfg.harness.delta_lo;
      spec.delta_hi = cfg.harness.delta_hi;
      if (h.contains("effects")) {
        const auto& eff = h.at("effects");
        if (!eff.is_object()) {
          throw ConfigError(
              "config key 'harness.effects': expected an object");
        }
        for (const auto& [key, value] : eff.items()) {
          if (!value.is_number()) {
            throw ConfigError("config key 'harness.effects." + key +
                              "': expected a number");
          }
          spec.proposal_effect[key] = value.get<double>();
        }
      }
      try {
        spec.validate();
      } catch (const Error& e) {
        throw ConfigError(std::string("config key 'harness': ") + e.what());
      }
    } else if (cfg.harness.type == "cmaes") {
      cfg.harness.dim = detail::need_count(h, "harness", "dim");
      cfg.harness.budget_evals =
          detail::need_count(h, "harness", "budget_evals");
      if (cfg.harness.dim == 0) {
        throw ConfigError("config key 'harness.dim': must be >= 1");
      }
    } else {
      throw ConfigError("config key 'harness.type': unknown type '" +
                        cfg.harness.type + "'");
    }
    if (cfg.harness.delta_lo != cfg.gate.r_lo ||
        cfg.harness.delta_hi != cfg.gate.r_hi) {
      throw ConfigError(
          "config: harness delta bounds must equal gate.r_lo / gate.r_hi");
    }

    const auto& p = detail::need(root, "", "proposer");
    cfg.proposer.kind =
        proposer_kind_from(detail::need_string(p, "proposer", "kind"));
    cfg.proposer.per_round =
        detail::opt_count(p, "proposer", "candidates_per_round", 1);
    if (cfg.proposer.kind == ProposerKind::preset) {
      const auto& presets = detail::need(p, "proposer", "presets");
      if (!presets.is_array() || presets.empty()) {
        throw ConfigError(
            "config key 'proposer.presets': expected a nonempty array");
      }
      for (std::size_t i = 0; i < presets.size(); ++i) {
        cfg.proposer.presets.push_back(detail::config_from_json(
            presets[i], "proposer.presets[" + std::to_string(i) + "]"));
      }
    } else {
      const auto& space = detail::need(p, "proposer", "space");
      if (!space.is_object() || space.empty()) {
        throw ConfigError(
            "config key 'proposer.space': expected a nonempty object");
      }
      for (const auto& [pname, dom] : space.items()) {
        const std::string scope = "proposer.space." + pname;
        const std::string type = detail::need_string(dom, scope, "type");
        if (type == "continuous") {
          ContinuousDomain d;
          d.lo = detail::need_real(dom, scope, "lo");
          d.hi = detail::need_real(dom, scope, "hi");
          d.log_scale = detail::opt_bool(dom, scope, "log_scale", false);
          d.mutation_scale =
              detail::opt_real(dom, scope, "mutation_scale", 0.0);
          cfg.proposer.space.domains[pname] = d;
        } else if (type == "int") {
          IntDomain d;
          d.lo = static_cast<std::int64_t>(
              detail::need_real(dom, scope, "lo"));
          d.hi = static_cast<std::int64_t>(
              detail::need_real(dom, scope, "hi"));
          cfg.proposer.space.domains[pname] = d;
        } else if (type == "categorical") {
          const auto& values = detail::need(dom, scope, "values");
          if (!values.is_array() || values.empty()) {
            throw ConfigError("config key '" + scope +
                              ".values': expected a nonempty array");
          }
          CategoricalDomain d;
          for (const auto& v : values) {
            if (!v.is_string()) {
              throw ConfigError("config key '" + scope +
                                ".values': entries must be strings");
            }
            d.values.push_back(v.get<std::string>());
          }
          cfg.proposer.space.domains[pname] = d;
        } else {
          throw ConfigError("config key '" + scope + ".type': unknown type '" +
                            type + "'");
        }
      }
      try {
        cfg.proposer.space.validate();
      } catch (const Error& e) {
        throw ConfigError(std::string("config key 'proposer.space': ") +
                          e.what());
      }
    }

    cfg.baseline =
        detail::config_from_json(detail::need(root, "", "baseline"),
                                 "baseline");
    cfg.run_seed = detail::opt_count(root, "", "run_seed", 0);

    if (root.contains("validate")) {
      const auto& v = root.at("validate");
      ValidateSpec vs;
      vs.role = detail::need_string(v, "validate", "role");
      if (vs.role != "null" && vs.role != "alternative") {
        throw ConfigError(
            "config key 'validate.role': expected 'null' or 'alternative'");
      }
      vs.power_floor = detail::opt_real(v, "validate", "power_floor", 0.8);
      if (!(vs.power_floor > 0.0 && vs.power_floor <= 1.0)) {
        throw ConfigError(
            "config key 'validate.power_floor': expected a value in (0, 1]");
      }
      cfg.validate = vs;
    }
    return cfg;
  }

  // Loads and parses a config file; parse failures are reported with
  // the file name and line, semantic failures with the offending key.
  static ExperimentConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    nlohmann::json root;
    try {
      root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path + ":" +
                        std::to_string(detail::line_of_byte(text, e.byte)) +
                        ": " + e.what());
    }
    try {
      return from_json(root);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
};

inline std::unique_ptr<Harness> build_harness(const HarnessSpec& spec,
                                              const Configuration& baseline,
                                              std::uint64_t salt) {
  if (spec.type == "synthetic") {
    return std::make_unique<SyntheticHarness>(spec.synthetic, baseline.id,
                                              salt);
  }
  return std::make_unique<CmaesHarness>(spec.dim, spec.budget_evals,
                                        spec.delta_lo, spec.delta_hi, salt);
}

inline std::unique_ptr<Proposer> build_proposer(const ProposerSpec& spec) {
  if (spec.kind == ProposerKind::preset) {
    return std::make_unique<PresetProposer>(spec.presets);
  }
  return std::make_unique<MutateProposer>(spec.space, spec.per_round);
}

inline std::string header_line(const ExperimentConfig& cfg) {
  return JsonBuilder{}
      .string("kind", "header")
      .integer("v", kTranscriptVersion)
      .string("name", cfg.name)
      .raw("config", cfg.raw.dump())
      .render();
}

// Runs the experiment and returns the transcript lines alongside the
// result. This is the single source of transcript bytes: the run
// command writes them to disk, replay regenerates them for comparison.
inline std::pair<GateResult, std::vector<std::string>> run_to_lines(
    const ExperimentConfig& cfg) {
  auto harness = build_harness(cfg.harness, cfg.baseline, cfg.harness.salt);
  auto proposer = build_proposer(cfg.proposer);
  std::vector<std::string> lines;
  lines.push_back(header_line(cfg));
  GateResult result = run_outer_loop(
      *harness, *proposer, cfg.gate, cfg.baseline, cfg.run_seed,
      [&](const RegistryEntry& e) { lines.push_back(entry_line(e)); });
  lines.push_back(final_line(result));
  return {std::move(result), std::move(lines)};
}

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path transcript;
  std::filesystem::path summary;
  std::filesystem::path final_json;
};

// Output root resolution: explicit override, then CERTGATE_OUTPUT_ROOT,
// then ./runs.
inline std::filesystem::path output_root(const std::string& override_root) {
  if (!override_root.empty()) return override_root;
  if (const char* env = std::getenv("CERTGATE_OUTPUT_ROOT")) {
    if (*env != '\0') return env;
  }
  return "runs";
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  return out + "\"";
}

inline std::string summary_csv(const GateResult& result) {
  std::string out =
      "entry,kind,round,proposal,decision,mean,lcb,delta_spent,"
      "wealth_after,budget_exhausted,note\n";
  for (std::size_t i = 0; i < result.registry.entries.size(); ++i) {
    const auto& e = result.registry.entries[i];
    out += std::to_string(i) + "," + to_string(e.kind) + "," +
           std::to_string(e.round) + "," + e.proposal.id + "," + e.decision +
           ",";
    out += e.deltas.has_value() ? format_real(e.mean) : "";
    out += ",";
    out += e.certificate.has_value() ? format_real(e.certificate->lcb) : "";
    out += ",";
    out +=
        e.certificate.has_value() ? format_real(e.certificate->delta_spent)
                                  : "";
    out += ",";
    out += e.certificate.has_value()
               ? format_real(e.certificate->wealth_after)
               : "";
    out += ",";
    out += e.budget_exhausted ? "true" : "false";
    out += ",";
    out += e.note.empty() ? "" : csv_quote(e.note);
    out += "\n";
  }
  return out;
}

inline std::string final_json_text(const ExperimentConfig& cfg,
                                   const GateResult& result) {
  return JsonBuilder{}
      .string("name", cfg.name)
      .string("incumbent", result.incumbent.id)
      .raw("incumbent_config", config_json(result.incumbent))
      .count("commits", result.registry.commits())
      .count("rounds", cfg.gate.total_rounds)
      .count("entries", result.registry.entries.size())
      .real("budget_spent", result.budget.spent)
      .real("wealth", result.wealth.wealth())
      .render();
}

// Runs an experiment and persists transcript.jsonl, summary.csv, and
// final.json under a fresh directory named after the experiment.
inline std::pair<GateResult, RunPaths> run_experiment(
    const ExperimentConfig& cfg, const std::string& override_root = "") {
  auto [result, lines] = run_to_lines(cfg);

  const auto root = output_root(override_root);
  std::filesystem::create_directories(root);
  auto dir = root / std::filesystem::path(cfg.name);
  for (int suffix = 2; std::filesystem::exists(dir); ++suffix) {
    dir = root / std::filesystem::path(cfg.name + "-" +
                                       std::to_string(suffix));
  }
  std::filesystem::create_directories(dir);

  RunPaths paths;
  paths.dir = dir;
  paths.transcript = dir / "transcript.jsonl";
  paths.summary = dir / "summary.csv";
  paths.final_json = dir / "final.json";

  {
    std::ofstream out(paths.transcript, std::ios::binary);
    if (!out) {
      throw ConfigError("cannot write " + paths.transcript.string());
    }
    for (const auto& line : lines) out << line << "\n";
  }
  {
    std::ofstream out(paths.summary, std::ios::binary);
    out << summary_csv(result);
  }
  {
    std::ofstream out(paths.final_json, std::ios::binary);
    out << final_json_text(cfg, result) << "\n";
  }
  return {std::move(result), std::move(paths)};
}

// Replays a recorded transcript: rebuilds the experiment from the
// embedded header config, reruns it, and byte-compares every line.
inline ReplayResult replay_transcript(std::istream& in) {
  const auto recorded = parse_transcript(in);
  const auto& head = recorded.front().value;
  if (!head.contains("config")) {
    throw ReplayError("transcript header: missing embedded config");
  }
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::from_json(head.at("config"));
  } catch (const ConfigError& e) {
    throw ReplayError(std::string("transcript header: ") + e.what());
  }
  auto [result, recomputed] = run_to_lines(cfg);
  (void)result;
  return compare_lines(recorded, recomputed);
}

inline ReplayResult replay_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReplayError(path + ": cannot open transcript");
  return replay_transcript(in);
}

struct ValidateReport {
  std::string name;
  std::string role;
  std::size_t trials = 0;
  std::size_t accept_runs = 0;
  double rate = 0.0;
  double global_delta = 0.0;
  double bound = 0.0;        // null role: delta + 3 binomial sd
  double power_floor = 0.0;  // alternative role
  bool pass = false;
};

// Monte Carlo check of the run-level acceptance rate over independent
// trials. A "null" config (no real improvements) must accept at most
// delta plus three binomial standard errors of slack; an "alternative"
// config must accept at least its declared power floor. Fewer than 100
// trials cannot resolve rates near typical deltas, so that is refused.
inline ValidateReport validate_experiment(const ExperimentConfig& cfg,
                                          std::size_t trials,
                                          std::size_t threads = 0) {
  if (!cfg.validate.has_value()) {
    throw ConfigError("config has no 'validate' block");
  }
  if (trials < 100) {
    throw InvalidArgument(
        "validation requires at least 100 trials to resolve the rate");
  }
  if (threads == 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    threads = hw == 0 ? 1 : std::min<unsigned>(hw, 16);
  }

  std::vector<unsigned char> accepted(trials, 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= trials) return;
      // Distinct master seeds per trial: fresh harness noise and a
      // fresh proposer stream, deterministically derived from i.
      ExperimentConfig trial = cfg;
      trial.harness.salt = mix_key(cfg.harness.salt, 0x7472014c + i);
      trial.run_seed = mix_key(cfg.run_seed, 0x5eed + i);
      auto harness =
          build_harness(trial.harness, trial.baseline, trial.harness.salt);
      auto proposer = build_proposer(trial.proposer);
      GateResult result = run_outer_loop(*harness, *proposer, trial.gate,
                                         trial.baseline, trial.run_seed);
      accepted[i] = result.registry.commits() > 0 ? 1 : 0;
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t + 1 < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ValidateReport report;
  report.name = cfg.name;
  report.role = cfg.validate->role;
  report.trials = trials;
  for (auto a : accepted) report.accept_runs += a;
  report.rate =
      static_cast<double>(report.accept_runs) / static_cast<double>(trials);
  report.global_delta = cfg.gate.global_delta;
  const double d = cfg.gate.global_delta;
  report.bound =
      d + 3.0 * std::sqrt(d * (1.0 - d) / static_cast<double>(trials));
  report.power_floor = cfg.validate->power_floor;
  report.pass = report.role == "null" ? report.rate <= report.bound
                                      : report.rate >= report.power_floor;
  return report;
}

// Human-readable digest of a recorded run directory.
inline std::string report_run(const std::string& rundir) {
  const auto path = std::filesystem::path(rundir) / "transcript.jsonl";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open transcript");
  const auto lines = parse_transcript(in);

  std::ostringstream out;
  const auto& head = lines.front().value;
  out << "run: " << head.value("name", "?") << "\n";
  if (head.contains("config") && head.at("config").contains("gate")) {
    const auto& g = head.at("config").at("gate");
    out << "gate: mode=" << g.value("mode", "?")
        << " schedule=" << g.value("schedule", "?")
        << " global_delta=" << g.value("global_delta", 0.0)
        << " rounds=" << g.value("total_rounds", 0) << "\n";
  }
  std::size_t screens = 0;
  std::size_t confirms = 0;
  std::size_t aborts = 0;
  for (const auto& line : lines) {
    const std::string kind = line.value.value("kind", "");
    if (kind == "screen") {
      screens += 1;
    } else if (kind == "confirm") {
      confirms += 1;
      const auto& e = line.value;
      out << "round " << e.value("round", 0) << ": confirm "
          << e.value("decision", "?");
      if (e.contains("certificate")) {
        const auto& c = e.at("certificate");
        out << " (mean=" << c.value("mean", 0.0)
            << " lcb=" << c.value("lcb", 0.0)
            << " delta_spent=" << c.value("delta_spent", 0.0)
            << " wealth=" << c.value("wealth_after", 0.0) << ")";
      }
      out << "\n";
    } else if (kind == "abort") {
      aborts += 1;
    } else if (kind == "final") {
      out << "final incumbent: " << line.value.value("incumbent", "?") << "\n"
          << "commits: " << line.value.value("commits", 0) << "\n"
          << "budget spent: " << line.value.value("budget_spent", 0.0) << "\n"
          << "wealth: " << line.value.value("wealth", 0.0) << "\n";
    }
  }
  out << "entries: " << screens << " screen, " << confirms << " confirm, "
      << aborts << " abort\n";
  return out.str();
}

}  // namespace certgate
