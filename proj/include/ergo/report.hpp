#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ergo/baselines.hpp"
#include "ergo/config.hpp"
#include "ergo/diagnostics.hpp"
#include "ergo/loss.hpp"
#include "ergo/optimize.hpp"

namespace ergo {

/// Unreadable/unwritable artifact path; mapped to exit code 5 by the CLI.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

extern const char* kToolVersion;

/// Everything one experiment produces. Serializes to JSON; in reproducible
/// mode two runs of the same config differ only in env.timestamp.
struct RunReport {
  nlohmann::json config_echo;
  std::vector<IterRecord> trace;
  ParamMap final_params;
  PreconditionResult precondition;
  DiagnosticsReport diagnostics;
  std::optional<nlohmann::json> baseline;

  struct Env {
    std::string tool_version = kToolVersion;
    std::uint64_t seed = 0;
    std::string timestamp;
  } env;
};

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

void write_report(const RunReport& report, const std::string& path);
RunReport read_report(const std::string& path);

/// CSV sample dump: header z0..z{d-1}, one row per sample, 17 significant
/// digits, locale-independent. Throws on an unwritable path.
void dump_samples_csv(const Mat& samples, const std::string& path);

/// Reads a dump back (used by round-trip checks and `sample --from-report`).
Mat load_samples_csv(const std::string& path);

std::string iso8601_utc_now();

}  // namespace ergo
