#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "ergo/baselines.hpp"
#include "ergo/dein.hpp"
#include "ergo/optimize.hpp"
#include "ergo/target.hpp"

namespace ergo {

/// Configuration file problem; mapped to exit code 2 by the CLI. The message
/// names the offending key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr int kSchemaVersion = 1;

struct TargetConfig {
  std::string name;
  TargetParams params;
};

struct GroundTruthConfig {
  std::string method = "analytic";  // "analytic" | "hmc" | "none"
  HmcConfig hmc;
  int n_kept = 2000;
};

struct DiagnosticsConfig {
  int n_eval = 20000;
  int mmd_permutations = 200;
  GroundTruthConfig ground_truth;
};

struct OutputConfig {
  std::string report_path = "report.json";
  std::optional<std::string> samples_path;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  TargetConfig target;
  ModelSpec model;
  TrainConfig train;
  DiagnosticsConfig diagnostics;
  OutputConfig output;
};

/// Strict parse: unknown keys anywhere in the tree are rejected with the
/// full key path; so are type mismatches and out-of-range values.
ExperimentConfig parse_config(const nlohmann::json& j);

/// Reads and parses a config file; file-system problems also raise
/// ConfigError.
ExperimentConfig load_config(const std::string& path);

/// Round-trippable echo of a parsed config (defaults made explicit).
nlohmann::json config_to_json(const ExperimentConfig& cfg);

}  // namespace ergo
