#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ergo/common.hpp"
#include "ergo/loss.hpp"
#include "ergo/optimize.hpp"
#include "ergo/target.hpp"

namespace ergo {

struct HmcConfig {
  double step = 0.5;
  int leaps = 10;
  int burn_in = 1000;
  int thin = 1;
  std::uint64_t seed = 0;
  std::optional<Vec> init;  // default: zero vector
};

struct HmcChain {
  Mat states;  // n_kept x dim
  double acceptance_rate = 0.0;  // over the post-burn-in phase
  HmcConfig config;
  bool low_acceptance_warning = false;  // acceptance below 0.1
  int n_divergent = 0;
};

/// Standard Hamiltonian Monte Carlo with unit mass: momentum resample,
/// leapfrog, accept with min{1, exp(H_start - H_end)}. Divergent proposals
/// count as rejections. Deterministic per seed.
HmcChain hmc_sample(const TargetDensity& target, int n_kept,
                    const HmcConfig& config);

/// Grid tuning of the comparison chain's step size by expected squared jump
/// distance. Returns the winning step and the (step, esjd) table for the
/// report.
struct EsjdTuning {
  double best_step = 0.0;
  int leaps = 0;
  std::vector<std::pair<double, double>> grid;  // (step, esjd)
};

EsjdTuning tune_hmc_step_esjd(const TargetDensity& target,
                              const std::vector<double>& step_grid, int leaps,
                              int n_probe, std::uint64_t seed);

/// Diagonal-Gaussian variational family.
struct MeanFieldQ {
  Vec mean;
  Vec log_std;

  Vec std() const { return log_std.array().exp(); }
};

struct ViRecord {
  int iter = 0;
  double elbo = 0.0;
  double std_error = 0.0;
  double grad_norm = 0.0;
};

struct ViResult {
  MeanFieldQ q;
  std::vector<ViRecord> trace;
};

/// Maximizes E_q[log pi*] + H(q) with the entropy in closed form and the
/// cross term by reparameterized sampling; shares the adaptive-moment
/// optimizer with the flow trainer. 0 iterations returns the initial q.
ViResult meanfield_vi_fit(const TargetDensity& target, const TrainConfig& cfg,
                          std::optional<MeanFieldQ> init = std::nullopt);

/// Monte Carlo ELBO: E_q[log pi* - log q], entropy part analytic.
LossEstimate elbo_estimate(const MeanFieldQ& q, const TargetDensity& target,
                           int n, std::uint64_t seed);

}  // namespace ergo
