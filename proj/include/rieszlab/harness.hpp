#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rieszlab/analysis.hpp"

namespace riesz {

/// Flat key = value experiment configuration. Values stay raw strings and
/// are typed on access; every key used by an experiment has a default, so a
/// config needs only `experiment = <id>` plus overrides.
struct ExperimentConfig {
  std::string experiment;
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  double num(const std::string& key, double def) const;
  std::vector<double> list(const std::string& key,
                           const std::vector<double>& def) const;
  std::string str(const std::string& key, const std::string& def) const;
};

// Parses `key = value` lines; '#' starts a comment; blank lines ignored.
// The `experiment` key is mandatory.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Throws std::invalid_argument describing the first problem (unknown
// experiment id, unparseable field spec, empty list, malformed number).
void validate(const ExperimentConfig& cfg);

struct Verdict {
  std::string name;
  std::string relation;  // human-readable, e.g. "measured <= threshold"
  double threshold = 0.0;
  double measured = 0.0;
  bool pass = false;
};

struct SampleRow {
  std::string field_id;
  int n = 0;
  std::optional<double> L, h, p, t, r;
  std::string quantity;
  double value = 0.0;
  std::optional<double> witness_norm;   // sup-norm of the norm-estimate witness
  std::optional<long long> solver_iters;
};

struct ExperimentReport {
  std::string id;
  std::vector<SampleRow> rows;
  std::vector<Verdict> verdicts;
  std::vector<std::string> errors;  // per-sample failures (degrade, not abort)
  double wall_seconds = 0.0;
  long long total_solves = 0;

  bool passed() const;
};

// Stable-ordered experiment id list.
const std::vector<std::string>& registry();

// Executes the experiment and writes <out_dir>/<id>.csv and <id>.json.
// Column order is fixed: experiment, field_id, n, L, h, p, t, r, quantity,
// value, witness_norm, solver_iters; absent dimensions are empty fields.
// Single-threaded runs with an identical config are bit-reproducible.
ExperimentReport run(const ExperimentConfig& cfg, const std::string& out_dir);

// Serialization helpers (exposed for tests).
std::string report_csv(const ExperimentReport& rep);
std::string report_json(const ExperimentReport& rep, const ExperimentConfig& cfg);

}  // namespace riesz
