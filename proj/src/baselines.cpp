#include "ergo/baselines.hpp"

#include <cmath>

#include "ergo/transforms.hpp"

namespace ergo {

namespace {

constexpr std::uint64_t kHmcStream = 0x686d6300;
constexpr std::uint64_t kViNoiseStream = 0x76690000;
constexpr std::uint64_t kElboStream = 0x656c626f;
constexpr std::uint64_t kEsjdStream = 0x65736a64;

// One HMC transition with unit mass. Returns the next state and whether the
// proposal was accepted; divergences reject.
struct Transition {
  Vec z;
  bool accepted = false;
  bool diverged = false;
};

Transition hmc_transition(const Vec& z, const TargetDensity& target,
                          const LeapfrogLayer& layer, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec r(z.size());
  for (Eigen::Index j = 0; j < r.size(); ++j) r[j] = normal(rng);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);  // drawn before the trajectory so rejects stay in sync

  double h0 = hamiltonian(z, r, layer, target);
  try {
    auto [z_new, r_new] = leapfrog_endpoint(z, r, layer, target);
    double h1 = hamiltonian(z_new, r_new, layer, target);
    // energy-difference form of the MH ratio
    if (std::log(u) < h0 - h1) return {std::move(z_new), true, false};
    return {z, false, false};
  } catch (const DivergenceError&) {
    return {z, false, true};
  }
}

}  // namespace

HmcChain hmc_sample(const TargetDensity& target, int n_kept,
                    const HmcConfig& config) {
  if (n_kept < 1) throw ContractViolation("hmc_sample: n_kept >= 1");
  if (config.step <= 0.0 || config.leaps < 1 || config.burn_in < 0 ||
      config.thin < 1) {
    throw ContractViolation("hmc_sample: invalid chain configuration");
  }

  const int dim = target.dim();
  LeapfrogLayer layer = LeapfrogLayer::uniform(dim, config.step, 1.0, config.leaps);
  Vec z = config.init ? *config.init : Vec::Zero(dim);
  if (z.size() != dim) throw ContractViolation("hmc_sample: init dim mismatch");

  auto rng = substream_rng(config.seed, kHmcStream, 0);

  HmcChain chain;
  chain.config = config;
  chain.states.resize(n_kept, dim);

  for (int i = 0; i < config.burn_in; ++i) {
    Transition t = hmc_transition(z, target, layer, rng);
    z = std::move(t.z);
    chain.n_divergent += t.diverged;
  }

  long accepted = 0, proposed = 0;
  for (int kept = 0; kept < n_kept; ++kept) {
    for (int s = 0; s < config.thin; ++s) {
      Transition t = hmc_transition(z, target, layer, rng);
      z = std::move(t.z);
      accepted += t.accepted;
      chain.n_divergent += t.diverged;
      ++proposed;
    }
    chain.states.row(kept) = z.transpose();
  }
  chain.acceptance_rate = proposed > 0 ? double(accepted) / proposed : 0.0;
  chain.low_acceptance_warning = chain.acceptance_rate < 0.1;
  return chain;
}

EsjdTuning tune_hmc_step_esjd(const TargetDensity& target,
                              const std::vector<double>& step_grid, int leaps,
                              int n_probe, std::uint64_t seed) {
  if (step_grid.empty()) throw ContractViolation("tune_hmc_step_esjd: empty grid");
  if (n_probe < 10) throw ContractViolation("tune_hmc_step_esjd: n_probe >= 10");

  EsjdTuning tuning;
  tuning.leaps = leaps;
  double best = -1.0;
  int grid_index = 0;
  for (double step : step_grid) {
    HmcConfig cfg;
    cfg.step = step;
    cfg.leaps = leaps;
    cfg.burn_in = std::max(200, n_probe / 10);
    cfg.thin = 1;
    cfg.seed = mix64(seed, kEsjdStream + grid_index++);
    HmcChain probe = hmc_sample(target, n_probe, cfg);

    double esjd = 0.0;
    for (int i = 1; i < probe.states.rows(); ++i) {
      esjd += (probe.states.row(i) - probe.states.row(i - 1)).squaredNorm();
    }
    esjd /= std::max(1, int(probe.states.rows()) - 1);
    tuning.grid.emplace_back(step, esjd);
    if (esjd > best) {
      best = esjd;
      tuning.best_step = step;
    }
  }
  return tuning;
}

ViResult meanfield_vi_fit(const TargetDensity& target, const TrainConfig& cfg,
                          std::optional<MeanFieldQ> init) {
  if (cfg.batch_size < 16) throw ContractViolation("meanfield_vi_fit: batch_size >= 16");
  if (cfg.iterations < 0) throw ContractViolation("meanfield_vi_fit: iterations >= 0");

  const int dim = target.dim();
  ViResult result;
  result.q = init ? *init : MeanFieldQ{Vec::Zero(dim), Vec::Zero(dim)};
  if (result.q.mean.size() != dim || result.q.log_std.size() != dim) {
    throw ContractViolation("meanfield_vi_fit: init dim mismatch");
  }
  if (cfg.iterations == 0) return result;

  ParamMap params;
  params["q.mean"] = result.q.mean;
  params["q.log_std"] = result.q.log_std;
  OptimizerState state = OptimizerState::init(params, cfg.adam);

  std::vector<double> per_sample(cfg.batch_size);
  result.trace.reserve(cfg.iterations);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const Vec std = params.at("q.log_std").array().exp();
    const Vec& mean = params.at("q.mean");

    Vec grad_mean = Vec::Zero(dim);
    Vec grad_log_std = Vec::Zero(dim);
    double sum = 0.0, sum_sq = 0.0;

    for (int i = 0; i < cfg.batch_size; ++i) {
      auto rng = substream_rng(mix64(cfg.seed, kViNoiseStream), iter,
                               static_cast<std::uint64_t>(i));
      Vec u(dim);
      fill_standard_normal(rng, u);
      Vec z = mean + std.cwiseProduct(u);
      double lp = logp_unnorm(target, z);
      Vec g = target.grad_raw(z);
      grad_mean += g;
      grad_log_std += g.cwiseProduct(std.cwiseProduct(u));
      sum += lp;
      sum_sq += lp * lp;
    }
    grad_mean /= cfg.batch_size;
    grad_log_std /= cfg.batch_size;
    // d/d log_std of the closed-form entropy term is 1 per dimension
    grad_log_std.array() += 1.0;

    ParamMap grad;
    grad["q.mean"] = grad_mean;
    grad["q.log_std"] = grad_log_std;

    double cross_mean = sum / cfg.batch_size;
    double cross_var =
        (sum_sq - cfg.batch_size * cross_mean * cross_mean) /
        std::max(1, cfg.batch_size - 1);
    ViRecord rec;
    rec.iter = iter;
    rec.elbo = cross_mean + diag_gaussian_entropy(params.at("q.log_std"));
    rec.std_error = std::sqrt(std::max(0.0, cross_var) / cfg.batch_size);

    double gnorm = std::sqrt(grad_mean.squaredNorm() + grad_log_std.squaredNorm());
    rec.grad_norm = gnorm;
    if (cfg.grad_clip && gnorm > *cfg.grad_clip) {
      for (auto& [name, g] : grad) g *= *cfg.grad_clip / gnorm;
    }

    double scale = 1.0;
    if (cfg.lr_decay == "rsqrt") {
      scale = std::sqrt(100.0 / (100.0 + double(state.step_count)));
    }
    std::tie(params, state) = adam_step(params, grad, std::move(state), scale);
    result.trace.push_back(rec);
  }

  result.q.mean = params.at("q.mean");
  result.q.log_std = params.at("q.log_std");
  return result;
}

LossEstimate elbo_estimate(const MeanFieldQ& q, const TargetDensity& target,
                           int n, std::uint64_t seed) {
  if (n < 2) throw ContractViolation("elbo_estimate: n >= 2");
  const int dim = target.dim();
  if (q.mean.size() != dim) throw ContractViolation("elbo_estimate: dim mismatch");

  const Vec std = q.std();
  const double entropy = diag_gaussian_entropy(q.log_std);

  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    auto rng = substream_rng(seed, kElboStream, static_cast<std::uint64_t>(i));
    Vec u(dim);
    fill_standard_normal(rng, u);
    Vec z = q.mean + std.cwiseProduct(u);
    double lp = logp_unnorm(target, z);
    sum += lp;
    sum_sq += lp * lp;
  }
  double mean = sum / n;
  double var = (sum_sq - n * mean * mean) / (n - 1);
  LossEstimate est;
  est.value = mean + entropy;
  est.std_error = std::sqrt(std::max(0.0, var) / n);
  est.n_samples = n;
  return est;
}

}  // namespace ergo
