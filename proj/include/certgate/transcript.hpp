#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "certgate/canonical.hpp"
#include "certgate/config.hpp"
#include "certgate/errors.hpp"
#include "certgate/gate.hpp"

namespace certgate {

// Run transcripts are JSON Lines with a fixed, canonical encoding:
// object keys in ascending order, reals printed with exactly enough
// digits to round-trip, no whitespace. Writing is done by this module
// alone, so a recomputed run can be checked against a recorded one by
// comparing bytes; any mismatch is a real divergence, not formatting.

inline constexpr int kTranscriptVersion = 1;

// Object builder rendering keys in sorted order. Values are stored
// pre-rendered, which lets objects nest without an AST.
class JsonBuilder {
 public:
  JsonBuilder& raw(const std::string& key, std::string rendered) {
    fields_[key] = std::move(rendered);
    return *this;
  }
  JsonBuilder& string(const std::string& key, const std::string& value) {
    return raw(key, json_quote(value));
  }
  JsonBuilder& real(const std::string& key, double value) {
    return raw(key, format_real(value));
  }
  JsonBuilder& integer(const std::string& key, std::int64_t value) {
    return raw(key, format_int(value));
  }
  JsonBuilder& count(const std::string& key, std::size_t value) {
    return raw(key, std::to_string(value));
  }
  JsonBuilder& boolean(const std::string& key, bool value) {
    return raw(key, value ? "true" : "false");
  }

  std::string render() const {
    std::string out = "{";
    bool first = true;
    for (const auto& [key, value] : fields_) {
      if (!first) out += ",";
      first = false;
      out += json_quote(key) + ":" + value;
    }
    out += "}";
    return out;
  }

 private:
  std::map<std::string, std::string> fields_;
};

inline std::string json_array_reals(const std::vector<double>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i != 0) out += ",";
    out += format_real(values[i]);
  }
  return out + "]";
}

inline std::string json_array_ints(const std::vector<std::int64_t>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i != 0) out += ",";
    out += format_int(values[i]);
  }
  return out + "]";
}

inline std::string json_array_strings(const std::vector<std::string>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i != 0) out += ",";
    out += json_quote(values[i]);
  }
  return out + "]";
}

inline std::string param_json(const ParamValue& value) {
  if (const auto* i = std::get_if<std::int64_t>(&value)) {
    return format_int(*i);
  }
  if (const auto* d = std::get_if<double>(&value)) return format_real(*d);
  return json_quote(std::get<std::string>(value));
}

inline std::string config_json(const Configuration& config) {
  std::string params = "{";
  bool first = true;
  for (const auto& [name, value] : config.params) {
    if (!first) params += ",";
    first = false;
    params += json_quote(name) + ":" + param_json(value);
  }
  params += "}";
  return JsonBuilder{}
      .string("id", config.id)
      .raw("params", params)
      .render();
}

inline std::string certificate_json(const Certificate& cert) {
  return JsonBuilder{}
      .string("mode", to_string(cert.mode))
      .count("n", cert.n)
      .real("mean", cert.mean)
      .real("lcb", cert.lcb)
      .real("delta_spent", cert.delta_spent)
      .real("wealth_before", cert.wealth_before)
      .real("wealth_after", cert.wealth_after)
      .real("threshold", cert.threshold)
      .string("decision", to_string(cert.decision))
      .render();
}

inline std::string ledger_entry_json(const LedgerEntry& entry) {
  return JsonBuilder{}
      .string("event", to_string(entry.event))
      .count("round", entry.round)
      .count("confirm", entry.confirm)
      .real("amount", entry.amount)
      .render();
}

// One registry entry as one transcript line (without the newline).
inline std::string entry_line(const RegistryEntry& entry) {
  JsonBuilder b;
  b.string("kind", to_string(entry.kind));
  b.count("round", entry.round);
  b.raw("proposal", config_json(entry.proposal));
  b.string("decision", entry.decision);
  if (entry.deltas.has_value()) {
    b.raw("deltas", json_array_reals(entry.deltas->values));
    b.raw("seed_ids", json_array_ints(entry.deltas->seed_ids));
    b.real("mean", entry.mean);
  }
  if (entry.certificate.has_value()) {
    b.raw("certificate", certificate_json(*entry.certificate));
  }
  if (entry.budget_event.has_value()) {
    b.raw("budget_event", ledger_entry_json(*entry.budget_event));
  }
  if (entry.budget_exhausted) b.boolean("budget_exhausted", true);
  if (!entry.note.empty()) b.string("note", entry.note);
  return b.render();
}

// Closing line summarizing the run outcome.
inline std::string final_line(const GateResult& result) {
  return JsonBuilder{}
      .string("kind", "final")
      .string("incumbent", result.incumbent.id)
      .count("commits", result.registry.commits())
      .real("budget_spent", result.budget.spent)
      .real("wealth", result.wealth.wealth())
      .raw("trajectory", json_array_strings(result.trajectory))
      .render();
}

// A parsed transcript line: 1-based line number, raw bytes, and the
// decoded JSON value.
struct TranscriptLine {
  std::size_t number = 0;
  std::string text;
  nlohmann::json value;
};

// Reads a whole transcript. Every line must be a JSON object; the
// first must declare kind "header" with a supported version.
inline std::vector<TranscriptLine> parse_transcript(std::istream& in) {
  std::vector<TranscriptLine> lines;
  std::string text;
  std::size_t number = 0;
  while (std::getline(in, text)) {
    number += 1;
    if (text.empty()) continue;
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded() || !value.is_object()) {
      throw ReplayError("transcript line " + std::to_string(number) +
                        ": not a JSON object");
    }
    lines.push_back({number, text, std::move(value)});
  }
  if (lines.empty()) {
    throw ReplayError("transcript is empty: no header entry");
  }
  const auto& head = lines.front().value;
  if (head.value("kind", "") != "header") {
    throw ReplayError("transcript line " +
                      std::to_string(lines.front().number) +
                      ": expected a header entry first");
  }
  if (head.value("v", -1) != kTranscriptVersion) {
    throw ReplayError("transcript header: unsupported version");
  }
  return lines;
}

struct ReplayResult {
  bool ok = true;
  std::size_t divergence_line = 0;  // 1-based; 0 when ok
  std::string message;
};

// Byte-compares a recomputed transcript against the recorded one.
// Returns the first divergence; identical bytes mean the recorded run
// is exactly reproducible, decisions, doubles, and all.
inline ReplayResult compare_lines(const std::vector<TranscriptLine>& recorded,
                                  const std::vector<std::string>& recomputed) {
  const std::size_t n = std::min(recorded.size(), recomputed.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (recorded[i].text != recomputed[i]) {
      return {false, recorded[i].number,
              "line " + std::to_string(recorded[i].number) +
                  " diverges\n  recorded:   " + recorded[i].text +
                  "\n  recomputed: " + recomputed[i]};
    }
  }
  if (recorded.size() > recomputed.size()) {
    return {false, recorded[n].number,
            "recorded transcript has " +
                std::to_string(recorded.size() - recomputed.size()) +
                " extra line(s) starting at line " +
                std::to_string(recorded[n].number)};
  }
  if (recomputed.size() > recorded.size()) {
    return {false, recorded.empty() ? 1 : recorded.back().number,
            "recomputation produced " +
                std::to_string(recomputed.size() - recorded.size()) +
                " line(s) past the recorded end"};
  }
  return {};
}

}  // namespace certgate
