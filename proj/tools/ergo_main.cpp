// Command-line front end: config-driven experiments, the fast invariant
// suite, sample dumps, baseline runs and depth sweeps.
//
// Exit codes: 0 success, 1 check failure, 2 invalid config, 3 training
// failure, 4 strict diagnostics failure, 5 unwritable path.

#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>

#include "ergo/baselines.hpp"
#include "ergo/check.hpp"
#include "ergo/config.hpp"
#include "ergo/dein.hpp"
#include "ergo/diagnostics.hpp"
#include "ergo/loss.hpp"
#include "ergo/optimize.hpp"
#include "ergo/report.hpp"

namespace {

using nlohmann::json;

constexpr std::uint64_t kEvalStream = 0x6576616c;
constexpr std::uint64_t kSampleStream = 0x73616d70;

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  bool strict = false;
  std::optional<std::string> out;
};

void print_error(const std::string& type, const std::string& message) {
  json record;
  record["error"]["type"] = type;
  record["error"]["message"] = message;
  std::cout << record.dump(2) << std::endl;
}

ergo::ExperimentConfig load_with_overrides(const std::string& path,
                                           const GlobalFlags& flags) {
  ergo::ExperimentConfig cfg = ergo::load_config(path);
  if (flags.seed) cfg.train.seed = *flags.seed;
  if (flags.out) cfg.output.report_path = *flags.out;
  return cfg;
}

// Reference sample for the MMD block, per the config's ground-truth method.
std::optional<ergo::Mat> ground_truth_sample(
    const ergo::ExperimentConfig& cfg, const ergo::TargetDensity& target) {
  const auto& gt = cfg.diagnostics.ground_truth;
  if (gt.method != "hmc") return std::nullopt;
  ergo::HmcConfig chain_cfg = gt.hmc;
  if (chain_cfg.seed == 0) chain_cfg.seed = ergo::mix64(cfg.train.seed, 0x6774);
  ergo::HmcChain chain = ergo::hmc_sample(target, gt.n_kept, chain_cfg);
  return chain.states;
}

// Thresholds enforced by --strict, mirrored in the README.
bool diagnostics_pass(const ergo::DiagnosticsReport& d) {
  bool ok = true;
  if (d.mean_error) ok &= *d.mean_error < 0.05;
  if (d.cov_error) ok &= *d.cov_error < 0.1;
  if (d.expected_logp_gap) ok &= std::abs(*d.expected_logp_gap) < 0.05;
  if (d.lag1_autocorr) ok &= std::abs(*d.lag1_autocorr) < 0.02;
  if (d.mmd2 && d.mmd2_null_99) ok &= *d.mmd2 < *d.mmd2_null_99;
  return ok;
}

int cmd_run(const std::string& config_path, const GlobalFlags& flags) {
  ergo::ExperimentConfig cfg = load_with_overrides(config_path, flags);
  ergo::TargetDensity target =
      ergo::make_target(cfg.target.name, cfg.target.params);
  ergo::DeinModel model = ergo::build_model(cfg.model, target);

  ergo::TrainResult trained = ergo::train(model, target, cfg.train);

  ergo::NoiseBatch eval_noise =
      ergo::sample_noise(trained.model, cfg.diagnostics.n_eval,
                         ergo::mix64(cfg.train.seed, kEvalStream));
  ergo::PushForward pushed =
      ergo::push_forward(trained.model, eval_noise, target, false);

  ergo::DiagnosticsOptions options;
  options.ground_truth = ground_truth_sample(cfg, target);
  options.mmd_permutations = cfg.diagnostics.mmd_permutations;
  options.seed = cfg.train.seed;
  options.entropy_q0 = ergo::diag_gaussian_entropy(trained.model.init.log_std);
  ergo::DiagnosticsReport diag =
      ergo::compute_diagnostics(pushed.samples, target, options);
  diag.hvp_approximate = !target.has_analytic_hvp();

  ergo::RunReport report;
  report.config_echo = ergo::config_to_json(cfg);
  report.trace = trained.trace;
  report.final_params = ergo::trainable_params(trained.model);
  report.precondition = trained.precondition;
  report.diagnostics = diag;
  report.env.seed = cfg.train.seed;
  report.env.timestamp = ergo::iso8601_utc_now();
  ergo::write_report(report, cfg.output.report_path);

  if (cfg.output.samples_path) {
    ergo::dump_samples_csv(pushed.samples, *cfg.output.samples_path);
  }
  std::cout << "report written to " << cfg.output.report_path << std::endl;

  if (flags.strict && !diagnostics_pass(diag)) {
    print_error("diagnostics", "strict diagnostics thresholds failed");
    return 4;
  }
  return 0;
}

int cmd_check() {
  ergo::CheckReport report = ergo::run_check();
  for (const auto& line : report.lines) {
    std::cout << (line.passed ? "[PASS] " : "[FAIL] ") << line.name << ": "
              << line.detail << "\n";
  }
  // timing goes to stderr so repeated invocations print identical tables
  std::cout << (report.all_passed ? "all checks passed" : "CHECK FAILED")
            << std::endl;
  std::cerr << "check finished in " << report.seconds << " s" << std::endl;
  return report.all_passed ? 0 : 1;
}

int cmd_sample(const std::string& config_path, int n,
               const std::string& from_report, const GlobalFlags& flags) {
  ergo::ExperimentConfig cfg = load_with_overrides(config_path, flags);
  ergo::TargetDensity target =
      ergo::make_target(cfg.target.name, cfg.target.params);
  ergo::DeinModel model = ergo::build_model(cfg.model, target);
  if (!from_report.empty()) {
    ergo::RunReport report = ergo::read_report(from_report);
    ergo::set_trainable_params(model, report.final_params);
  }
  std::uint64_t seed = flags.seed ? *flags.seed : cfg.train.seed;
  ergo::NoiseBatch noise =
      ergo::sample_noise(model, n, ergo::mix64(seed, kSampleStream));
  ergo::PushForward pushed = ergo::push_forward(model, noise, target, false);

  std::string path = flags.out ? *flags.out
                               : cfg.output.samples_path.value_or("samples.csv");
  ergo::dump_samples_csv(pushed.samples, path);
  std::cout << "wrote " << n << " samples to " << path << std::endl;
  return 0;
}

int cmd_baseline_hmc(const std::string& config_path, int n_override, bool tune,
                     const GlobalFlags& flags) {
  ergo::ExperimentConfig cfg = load_with_overrides(config_path, flags);
  ergo::TargetDensity target =
      ergo::make_target(cfg.target.name, cfg.target.params);

  ergo::HmcConfig chain_cfg = cfg.diagnostics.ground_truth.hmc;
  if (flags.seed) chain_cfg.seed = *flags.seed;
  int n_kept = n_override > 0 ? n_override : cfg.diagnostics.ground_truth.n_kept;

  json baseline;
  baseline["method"] = "hmc";
  if (tune) {
    // jump-distance criterion on a short probe chain per grid point
    std::vector<double> grid;
    for (double s = 0.05; s <= 0.61; s += 0.05) grid.push_back(s);
    ergo::EsjdTuning tuning = ergo::tune_hmc_step_esjd(
        target, grid, chain_cfg.leaps, 2000, chain_cfg.seed);
    chain_cfg.step = tuning.best_step;
    baseline["esjd_tuning"]["criterion"] = "expected squared jump distance";
    baseline["esjd_tuning"]["leaps"] = tuning.leaps;
    baseline["esjd_tuning"]["best_step"] = tuning.best_step;
    baseline["esjd_tuning"]["grid"] = json::array();
    for (auto [step, esjd] : tuning.grid) {
      baseline["esjd_tuning"]["grid"].push_back({{"step", step}, {"esjd", esjd}});
    }
  }

  ergo::HmcChain chain = ergo::hmc_sample(target, n_kept, chain_cfg);
  baseline["acceptance_rate"] = chain.acceptance_rate;
  baseline["low_acceptance_warning"] = chain.low_acceptance_warning;
  baseline["n_divergent"] = chain.n_divergent;
  baseline["step"] = chain_cfg.step;
  baseline["leaps"] = chain_cfg.leaps;
  baseline["burn_in"] = chain_cfg.burn_in;
  baseline["thin"] = chain_cfg.thin;

  ergo::DiagnosticsOptions options;
  options.seed = chain_cfg.seed;
  ergo::DiagnosticsReport diag =
      ergo::compute_diagnostics(chain.states, target, options);

  ergo::RunReport report;
  report.config_echo = ergo::config_to_json(cfg);
  report.diagnostics = diag;
  report.baseline = baseline;
  report.env.seed = chain_cfg.seed;
  report.env.timestamp = ergo::iso8601_utc_now();
  ergo::write_report(report, cfg.output.report_path);
  if (cfg.output.samples_path) {
    ergo::dump_samples_csv(chain.states, *cfg.output.samples_path);
  }
  std::cout << "hmc baseline report written to " << cfg.output.report_path
            << " (acceptance " << chain.acceptance_rate << ")" << std::endl;
  return 0;
}

int cmd_baseline_vi(const std::string& config_path, const GlobalFlags& flags) {
  ergo::ExperimentConfig cfg = load_with_overrides(config_path, flags);
  ergo::TargetDensity target =
      ergo::make_target(cfg.target.name, cfg.target.params);

  ergo::ViResult fit = ergo::meanfield_vi_fit(target, cfg.train);
  ergo::LossEstimate elbo = ergo::elbo_estimate(
      fit.q, target, cfg.diagnostics.n_eval, ergo::mix64(cfg.train.seed, 0x7669));

  json baseline;
  baseline["method"] = "vi";
  baseline["mean"] = std::vector<double>(fit.q.mean.data(),
                                         fit.q.mean.data() + fit.q.mean.size());
  baseline["log_std"] = std::vector<double>(
      fit.q.log_std.data(), fit.q.log_std.data() + fit.q.log_std.size());
  baseline["elbo"] = elbo.value;
  baseline["elbo_std_error"] = elbo.std_error;
  baseline["elbo_trace"] = json::array();
  for (const auto& rec : fit.trace) {
    baseline["elbo_trace"].push_back({{"iter", rec.iter},
                                      {"elbo", rec.elbo},
                                      {"std_error", rec.std_error},
                                      {"grad_norm", rec.grad_norm}});
  }

  ergo::RunReport report;
  report.config_echo = ergo::config_to_json(cfg);
  report.baseline = baseline;
  report.env.seed = cfg.train.seed;
  report.env.timestamp = ergo::iso8601_utc_now();
  ergo::write_report(report, cfg.output.report_path);
  std::cout << "vi baseline report written to " << cfg.output.report_path
            << " (elbo " << elbo.value << ")" << std::endl;
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<int>& depths,
              const GlobalFlags& flags) {
  ergo::ExperimentConfig cfg = load_with_overrides(config_path, flags);
  ergo::TargetDensity target =
      ergo::make_target(cfg.target.name, cfg.target.params);

  auto entries = ergo::depth_sweep(target, depths, cfg.train, cfg.model);

  json baseline;
  baseline["method"] = "depth_sweep";
  baseline["entries"] = json::array();
  for (const auto& e : entries) {
    baseline["entries"].push_back({{"depth", e.depth},
                                   {"objective", e.objective},
                                   {"std_error", e.std_error}});
    std::cout << "depth " << e.depth << ": objective " << e.objective << " (se "
              << e.std_error << ")" << std::endl;
  }

  ergo::RunReport report;
  report.config_echo = ergo::config_to_json(cfg);
  report.baseline = baseline;
  report.env.seed = cfg.train.seed;
  report.env.timestamp = ergo::iso8601_utc_now();
  ergo::write_report(report, cfg.output.report_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ergodic inference: measure-preserving flow training and diagnostics"};
  app.require_subcommand(1);

  GlobalFlags flags;
  std::uint64_t seed_value = 0;
  std::string out_value;
  auto* seed_opt = app.add_option("--seed", seed_value, "override the config seed");
  app.add_flag("--strict", flags.strict, "fail (exit 4) when diagnostics miss thresholds");
  auto* out_opt = app.add_option("--out", out_value, "override the output path");

  std::string config_path, from_report;
  int n_samples = 1000;
  int n_hmc = 0;
  bool tune = false;
  std::vector<int> depths{1, 2, 4};

  auto* run = app.add_subcommand("run", "train a model per config and report");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->fallthrough();

  auto* check = app.add_subcommand("check", "fast invariant suite");
  check->fallthrough();

  auto* sample = app.add_subcommand("sample", "dump model samples to CSV");
  sample->add_option("--config", config_path, "experiment config file")->required();
  sample->add_option("--n", n_samples, "number of samples");
  sample->add_option("--from-report", from_report,
                     "load trained parameters from a report file");
  sample->fallthrough();

  auto* baseline = app.add_subcommand("baseline", "reference methods");
  baseline->require_subcommand(1);
  auto* hmc = baseline->add_subcommand("hmc", "MH-corrected HMC chain");
  hmc->add_option("--config", config_path, "experiment config file")->required();
  hmc->add_option("--n", n_hmc, "kept samples (default from config)");
  hmc->add_flag("--tune", tune, "grid-tune the step by expected squared jump distance");
  hmc->fallthrough();
  auto* vi = baseline->add_subcommand("vi", "mean-field Gaussian VI");
  vi->add_option("--config", config_path, "experiment config file")->required();
  vi->fallthrough();
  baseline->fallthrough();

  auto* sweep = app.add_subcommand("sweep", "train across depths");
  sweep->add_option("--config", config_path, "experiment config file")->required();
  sweep->add_option("--depths", depths, "depths to train (non-decreasing)");
  sweep->fallthrough();

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) flags.seed = seed_value;
  if (*out_opt) flags.out = out_value;

  try {
    if (*run) return cmd_run(config_path, flags);
    if (*check) return cmd_check();
    if (*sample) return cmd_sample(config_path, n_samples, from_report, flags);
    if (*hmc) return cmd_baseline_hmc(config_path, n_hmc, tune, flags);
    if (*vi) return cmd_baseline_vi(config_path, flags);
    if (*sweep) return cmd_sweep(config_path, depths, flags);
  } catch (const ergo::ConfigError& e) {
    print_error("config", e.what());
    return 2;
  } catch (const ergo::ContractViolation& e) {
    print_error("config", e.what());
    return 2;
  } catch (const ergo::TrainingError& e) {
    print_error("training", e.what());
    return 3;
  } catch (const ergo::IoError& e) {
    print_error("io", e.what());
    return 5;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 3;
  }
  return 0;
}
