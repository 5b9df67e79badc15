#include "ergo/config.hpp"

#include <fstream>
#include <set>

namespace ergo {

namespace {

using nlohmann::json;

// Wraps one JSON object and rejects keys that were never consumed, naming
// them by full path.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError("config: '" + path_ + "' must be an object");
    }
  }

  bool has(const std::string& key) {
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const json& get(const std::string& key) {
    consumed_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  T value(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    consumed_.insert(key);
    const json& v = j_.at(key);
    if (v.is_null()) return fallback;
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: bad type for '" + join(key) + "'");
    }
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) {
      throw ConfigError("config: missing required key '" + join(key) + "'");
    }
    consumed_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: bad type for '" + join(key) + "'");
    }
  }

  StrictObject child(const std::string& key) {
    consumed_.insert(key);
    return StrictObject(j_.at(key), join(key));
  }

  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!consumed_.count(it.key())) {
        throw ConfigError("config: unknown key '" + join(it.key()) + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> consumed_;
};

std::optional<Vec> opt_vec(StrictObject& obj, const std::string& key) {
  if (!obj.has(key)) {
    obj.value<json>(key, json());  // consume an explicit null
    return std::nullopt;
  }
  auto raw = obj.require<std::vector<double>>(key);
  return Eigen::Map<const Vec>(raw.data(), static_cast<Eigen::Index>(raw.size()));
}

TargetConfig parse_target(StrictObject obj) {
  TargetConfig cfg;
  cfg.name = obj.require<std::string>("name");
  if (obj.has("params")) {
    // free-form at this level; make_target rejects unknown parameter names
    const json& raw = obj.get("params");
    if (!raw.is_object()) throw ConfigError("config: target.params must be an object");
    for (auto it = raw.begin(); it != raw.end(); ++it) {
      const json& v = it.value();
      std::vector<double> arr;
      if (v.is_number()) {
        arr.push_back(v.get<double>());
      } else if (v.is_array()) {
        arr = v.get<std::vector<double>>();
      } else {
        throw ConfigError("config: target.params." + it.key() +
                          " must be a number or array");
      }
      cfg.params[it.key()] = std::move(arr);
    }
  } else {
    obj.value<json>("params", json());
  }
  obj.finish();
  return cfg;
}

ModelSpec parse_model(StrictObject obj) {
  ModelSpec spec;
  spec.depth = obj.value<int>("depth", spec.depth);
  spec.leaps = obj.value<int>("leaps", spec.leaps);
  spec.init_step = obj.value<double>("init_step", spec.init_step);
  spec.init_mean = opt_vec(obj, "init_mean");
  spec.init_log_std = opt_vec(obj, "init_log_std");
  spec.trainable_init = obj.value<bool>("trainable_init", spec.trainable_init);
  obj.finish();
  if (spec.depth < 0) throw ConfigError("config: model.depth must be >= 0");
  if (spec.leaps < 1) throw ConfigError("config: model.leaps must be >= 1");
  if (spec.init_step <= 0.0) {
    throw ConfigError("config: model.init_step must be positive");
  }
  return spec;
}

TrainConfig parse_train(StrictObject obj) {
  TrainConfig cfg;
  cfg.iterations = obj.value<int>("iterations", cfg.iterations);
  cfg.batch_size = obj.value<int>("batch_size", cfg.batch_size);
  cfg.seed = obj.value<std::uint64_t>("seed", cfg.seed);
  if (obj.has("grad_clip")) {
    cfg.grad_clip = obj.require<double>("grad_clip");
  } else {
    obj.value<json>("grad_clip", json());
  }
  std::string mode = obj.value<std::string>("mode", "objective");
  if (mode == "objective") {
    cfg.mode = LossMode::kObjective;
  } else if (mode == "total") {
    cfg.mode = LossMode::kTotal;
  } else {
    throw ConfigError("config: train.mode must be 'objective' or 'total'");
  }
  cfg.reproducible_reduction =
      obj.value<bool>("reproducible_reduction", cfg.reproducible_reduction);
  cfg.adam.learning_rate =
      obj.value<double>("learning_rate", cfg.adam.learning_rate);
  cfg.adam.beta1 = obj.value<double>("beta1", cfg.adam.beta1);
  cfg.adam.beta2 = obj.value<double>("beta2", cfg.adam.beta2);
  cfg.adam.epsilon = obj.value<double>("epsilon", cfg.adam.epsilon);
  cfg.lr_decay = obj.value<std::string>("lr_decay", cfg.lr_decay);
  cfg.override_precondition =
      obj.value<bool>("override_precondition", cfg.override_precondition);
  cfg.precondition_n = obj.value<int>("precondition_n", cfg.precondition_n);
  obj.finish();

  if (cfg.iterations < 0) throw ConfigError("config: train.iterations must be >= 0");
  if (cfg.batch_size < 16) throw ConfigError("config: train.batch_size must be >= 16");
  if (cfg.grad_clip && *cfg.grad_clip <= 0.0) {
    throw ConfigError("config: train.grad_clip must be positive");
  }
  if (cfg.lr_decay != "none" && cfg.lr_decay != "rsqrt") {
    throw ConfigError("config: train.lr_decay must be 'none' or 'rsqrt'");
  }
  return cfg;
}

GroundTruthConfig parse_ground_truth(StrictObject obj) {
  GroundTruthConfig cfg;
  cfg.method = obj.value<std::string>("method", cfg.method);
  if (cfg.method != "analytic" && cfg.method != "hmc" && cfg.method != "none") {
    throw ConfigError(
        "config: diagnostics.ground_truth.method must be 'analytic', 'hmc' or 'none'");
  }
  if (obj.has("params")) {
    StrictObject params = obj.child("params");
    cfg.hmc.step = params.value<double>("step", cfg.hmc.step);
    cfg.hmc.leaps = params.value<int>("leaps", cfg.hmc.leaps);
    cfg.hmc.burn_in = params.value<int>("burn_in", cfg.hmc.burn_in);
    cfg.hmc.thin = params.value<int>("thin", cfg.hmc.thin);
    cfg.hmc.seed = params.value<std::uint64_t>("seed", cfg.hmc.seed);
    cfg.n_kept = params.value<int>("n_kept", cfg.n_kept);
    params.finish();
  } else {
    obj.value<json>("params", json());
  }
  obj.finish();
  if (cfg.hmc.step <= 0.0 || cfg.hmc.leaps < 1 || cfg.hmc.burn_in < 0 ||
      cfg.hmc.thin < 1 || cfg.n_kept < 2) {
    throw ConfigError("config: invalid diagnostics.ground_truth.params");
  }
  return cfg;
}

DiagnosticsConfig parse_diagnostics(StrictObject obj) {
  DiagnosticsConfig cfg;
  cfg.n_eval = obj.value<int>("n_eval", cfg.n_eval);
  cfg.mmd_permutations = obj.value<int>("mmd_permutations", cfg.mmd_permutations);
  if (obj.has("ground_truth")) {
    cfg.ground_truth = parse_ground_truth(obj.child("ground_truth"));
  } else {
    obj.value<json>("ground_truth", json());
  }
  obj.finish();
  if (cfg.n_eval < 2) throw ConfigError("config: diagnostics.n_eval must be >= 2");
  if (cfg.mmd_permutations < 20) {
    throw ConfigError("config: diagnostics.mmd_permutations must be >= 20");
  }
  return cfg;
}

OutputConfig parse_output(StrictObject obj) {
  OutputConfig cfg;
  cfg.report_path = obj.value<std::string>("report_path", cfg.report_path);
  if (obj.has("samples_path")) {
    cfg.samples_path = obj.require<std::string>("samples_path");
  } else {
    obj.value<json>("samples_path", json());
  }
  obj.finish();
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j) {
  StrictObject root(j, "");
  ExperimentConfig cfg;
  cfg.schema_version = root.require<int>("schema_version");
  if (cfg.schema_version != kSchemaVersion) {
    throw ConfigError("config: unsupported schema_version " +
                      std::to_string(cfg.schema_version) + " (tool supports " +
                      std::to_string(kSchemaVersion) + ")");
  }
  if (!root.has("target")) throw ConfigError("config: missing required key 'target'");
  cfg.target = parse_target(root.child("target"));
  if (root.has("model")) cfg.model = parse_model(root.child("model"));
  if (root.has("train")) cfg.train = parse_train(root.child("train"));
  if (root.has("diagnostics")) {
    cfg.diagnostics = parse_diagnostics(root.child("diagnostics"));
  }
  if (root.has("output")) cfg.output = parse_output(root.child("output"));
  root.finish();

  // fail early on a malformed target spec
  make_target(cfg.target.name, cfg.target.params);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: parse error in '" + path + "': " + e.what());
  }
  return parse_config(j);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = cfg.schema_version;
  j["target"]["name"] = cfg.target.name;
  j["target"]["params"] = nlohmann::json::object();
  for (const auto& [key, values] : cfg.target.params) {
    j["target"]["params"][key] = values;
  }
  auto& model = j["model"];
  model["depth"] = cfg.model.depth;
  model["leaps"] = cfg.model.leaps;
  model["init_step"] = cfg.model.init_step;
  model["init_mean"] = nullptr;
  model["init_log_std"] = nullptr;
  if (cfg.model.init_mean) {
    model["init_mean"] = std::vector<double>(
        cfg.model.init_mean->data(),
        cfg.model.init_mean->data() + cfg.model.init_mean->size());
  }
  if (cfg.model.init_log_std) {
    model["init_log_std"] = std::vector<double>(
        cfg.model.init_log_std->data(),
        cfg.model.init_log_std->data() + cfg.model.init_log_std->size());
  }
  model["trainable_init"] = cfg.model.trainable_init;

  auto& train = j["train"];
  train["iterations"] = cfg.train.iterations;
  train["batch_size"] = cfg.train.batch_size;
  train["seed"] = cfg.train.seed;
  train["grad_clip"] = nullptr;
  if (cfg.train.grad_clip) train["grad_clip"] = *cfg.train.grad_clip;
  train["mode"] = cfg.train.mode == LossMode::kObjective ? "objective" : "total";
  train["reproducible_reduction"] = cfg.train.reproducible_reduction;
  train["learning_rate"] = cfg.train.adam.learning_rate;
  train["beta1"] = cfg.train.adam.beta1;
  train["beta2"] = cfg.train.adam.beta2;
  train["epsilon"] = cfg.train.adam.epsilon;
  train["lr_decay"] = cfg.train.lr_decay;
  train["override_precondition"] = cfg.train.override_precondition;
  train["precondition_n"] = cfg.train.precondition_n;

  auto& diag = j["diagnostics"];
  diag["n_eval"] = cfg.diagnostics.n_eval;
  diag["mmd_permutations"] = cfg.diagnostics.mmd_permutations;
  diag["ground_truth"]["method"] = cfg.diagnostics.ground_truth.method;
  auto& gt = diag["ground_truth"]["params"];
  gt["step"] = cfg.diagnostics.ground_truth.hmc.step;
  gt["leaps"] = cfg.diagnostics.ground_truth.hmc.leaps;
  gt["burn_in"] = cfg.diagnostics.ground_truth.hmc.burn_in;
  gt["thin"] = cfg.diagnostics.ground_truth.hmc.thin;
  gt["seed"] = cfg.diagnostics.ground_truth.hmc.seed;
  gt["n_kept"] = cfg.diagnostics.ground_truth.n_kept;

  j["output"]["report_path"] = cfg.output.report_path;
  j["output"]["samples_path"] = nullptr;
  if (cfg.output.samples_path) j["output"]["samples_path"] = *cfg.output.samples_path;
  return j;
}

}  // namespace ergo
