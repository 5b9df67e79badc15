#include "ergo/report.hpp"

#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

namespace ergo {

const char* kToolVersion = "0.1.0";

namespace {

using nlohmann::json;

json opt_to_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}
json opt_to_json(const std::optional<bool>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> opt_from_json(const json& j, const std::string& key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

const char* precondition_str(PreconditionResult::Status s) {
  switch (s) {
    case PreconditionResult::Status::kPassed: return "passed";
    case PreconditionResult::Status::kFailed: return "failed";
    default: return "unverified";
  }
}

PreconditionResult::Status precondition_from_str(const std::string& s) {
  if (s == "passed") return PreconditionResult::Status::kPassed;
  if (s == "failed") return PreconditionResult::Status::kFailed;
  return PreconditionResult::Status::kUnverified;
}

// shortest round-trip decimal form, independent of locale
std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace

json report_to_json(const RunReport& report) {
  json j;
  j["config"] = report.config_echo;

  j["trace"] = json::array();
  for (const IterRecord& rec : report.trace) {
    // rejected steps carry a NaN grad_norm, which JSON cannot represent
    json grad_norm = std::isfinite(rec.grad_norm) ? json(rec.grad_norm) : json(nullptr);
    j["trace"].push_back({{"iter", rec.iter},
                          {"objective", rec.objective},
                          {"total", rec.total},
                          {"std_error", rec.std_error},
                          {"n_divergent", rec.n_divergent},
                          {"grad_norm", grad_norm}});
  }

  j["final_params"] = json::object();
  for (const auto& [name, value] : report.final_params) {
    j["final_params"][name] =
        std::vector<double>(value.data(), value.data() + value.size());
  }

  auto& pre = j["precondition"];
  pre["status"] = precondition_str(report.precondition.status);
  pre["q0_logp"] = report.precondition.q0_logp;
  pre["q0_std_error"] = report.precondition.q0_std_error;
  pre["target_logp"] = opt_to_json(report.precondition.target_logp);
  pre["n_samples"] = report.precondition.n_samples;

  auto& d = j["diagnostics"];
  d["mean_error"] = opt_to_json(report.diagnostics.mean_error);
  d["cov_error"] = opt_to_json(report.diagnostics.cov_error);
  d["mmd2"] = opt_to_json(report.diagnostics.mmd2);
  d["mmd2_bandwidth"] = opt_to_json(report.diagnostics.mmd2_bandwidth);
  d["mmd2_null_99"] = opt_to_json(report.diagnostics.mmd2_null_99);
  d["lag1_autocorr"] = opt_to_json(report.diagnostics.lag1_autocorr);
  d["ks_stat"] = opt_to_json(report.diagnostics.ks_stat);
  d["ks_pass_at_01"] = opt_to_json(report.diagnostics.ks_pass_at_01);
  d["expected_logp_gap"] = opt_to_json(report.diagnostics.expected_logp_gap);
  d["entropy_q0"] = opt_to_json(report.diagnostics.entropy_q0);
  d["entropy_target"] = opt_to_json(report.diagnostics.entropy_target);
  d["hvp_approximate"] = opt_to_json(report.diagnostics.hvp_approximate);

  j["baseline"] = report.baseline ? *report.baseline : json(nullptr);

  j["env"]["tool_version"] = report.env.tool_version;
  j["env"]["seed"] = report.env.seed;
  j["env"]["timestamp"] = report.env.timestamp;
  return j;
}

RunReport report_from_json(const json& j) {
  RunReport report;
  report.config_echo = j.at("config");

  for (const json& rec : j.at("trace")) {
    IterRecord r;
    r.iter = rec.at("iter").get<int>();
    r.objective = rec.at("objective").get<double>();
    r.total = rec.at("total").get<double>();
    r.std_error = rec.at("std_error").get<double>();
    r.n_divergent = rec.at("n_divergent").get<int>();
    r.grad_norm = rec.at("grad_norm").is_null()
                      ? std::numeric_limits<double>::quiet_NaN()
                      : rec.at("grad_norm").get<double>();
    report.trace.push_back(r);
  }

  for (auto it = j.at("final_params").begin(); it != j.at("final_params").end();
       ++it) {
    auto raw = it.value().get<std::vector<double>>();
    report.final_params[it.key()] =
        Eigen::Map<const Vec>(raw.data(), static_cast<Eigen::Index>(raw.size()));
  }

  const json& pre = j.at("precondition");
  report.precondition.status =
      precondition_from_str(pre.at("status").get<std::string>());
  report.precondition.q0_logp = pre.at("q0_logp").get<double>();
  report.precondition.q0_std_error = pre.at("q0_std_error").get<double>();
  report.precondition.target_logp = opt_from_json<double>(pre, "target_logp");
  report.precondition.n_samples = pre.at("n_samples").get<int>();

  const json& d = j.at("diagnostics");
  report.diagnostics.mean_error = opt_from_json<double>(d, "mean_error");
  report.diagnostics.cov_error = opt_from_json<double>(d, "cov_error");
  report.diagnostics.mmd2 = opt_from_json<double>(d, "mmd2");
  report.diagnostics.mmd2_bandwidth = opt_from_json<double>(d, "mmd2_bandwidth");
  report.diagnostics.mmd2_null_99 = opt_from_json<double>(d, "mmd2_null_99");
  report.diagnostics.lag1_autocorr = opt_from_json<double>(d, "lag1_autocorr");
  report.diagnostics.ks_stat = opt_from_json<double>(d, "ks_stat");
  report.diagnostics.ks_pass_at_01 = opt_from_json<bool>(d, "ks_pass_at_01");
  report.diagnostics.expected_logp_gap =
      opt_from_json<double>(d, "expected_logp_gap");
  report.diagnostics.entropy_q0 = opt_from_json<double>(d, "entropy_q0");
  report.diagnostics.entropy_target = opt_from_json<double>(d, "entropy_target");
  report.diagnostics.hvp_approximate = opt_from_json<bool>(d, "hvp_approximate");

  if (!j.at("baseline").is_null()) report.baseline = j.at("baseline");

  report.env.tool_version = j.at("env").at("tool_version").get<std::string>();
  report.env.seed = j.at("env").at("seed").get<std::uint64_t>();
  report.env.timestamp = j.at("env").at("timestamp").get<std::string>();
  return report;
}

void write_report(const RunReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report to '" + path + "'");
  out << report_to_json(report).dump(2) << "\n";
  if (!out) throw IoError("write failed for '" + path + "'");
}

RunReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read report '" + path + "'");
  json j;
  in >> j;
  return report_from_json(j);
}

void dump_samples_csv(const Mat& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write samples to '" + path + "'");
  for (int j = 0; j < samples.cols(); ++j) {
    out << (j ? "," : "") << "z" << j;
  }
  out << "\n";
  for (int i = 0; i < samples.rows(); ++i) {
    for (int j = 0; j < samples.cols(); ++j) {
      if (j) out << ",";
      out << format_double(samples(i, j));
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

Mat load_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read samples '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv: " + path);
  int cols = 1;
  for (char c : line) cols += (c == ',');

  std::vector<double> values;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    int got = 0;
    while (std::getline(row, cell, ',')) {
      double v = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc()) {
        throw std::runtime_error("bad csv cell '" + cell + "' in " + path);
      }
      values.push_back(v);
      ++got;
    }
    if (got != cols) throw std::runtime_error("ragged csv row in " + path);
    ++rows;
  }
  Mat out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) out(i, j) = values[size_t(i) * cols + j];
  }
  return out;
}

std::string iso8601_utc_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace ergo
