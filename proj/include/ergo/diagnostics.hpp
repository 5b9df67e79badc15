#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ergo/common.hpp"
#include "ergo/target.hpp"
#include "ergo/transforms.hpp"

namespace ergo {

/// Measured convergence proxies. Absent fields were not computed (never
/// zero-filled).
struct DiagnosticsReport {
  std::optional<double> mean_error;   // max-abs vs analytic mean
  std::optional<double> cov_error;    // max-abs entrywise vs analytic cov
  std::optional<double> mmd2;
  std::optional<double> mmd2_bandwidth;
  std::optional<double> mmd2_null_99;  // permutation-null 99th percentile
  std::optional<double> lag1_autocorr;  // max over coordinates, signed
  std::optional<double> ks_stat;        // max over coordinates + projections
  std::optional<bool> ks_pass_at_01;
  std::optional<double> expected_logp_gap;  // E_q[log pi*] - E_pi[log pi*]
  std::optional<double> entropy_q0;     // monitored entropy condition
  std::optional<double> entropy_target;
  std::optional<bool> hvp_approximate;  // gradient path used the FD fallback
};

/// Max-abs deviations of empirical mean and covariance from analytic values.
std::pair<double, double> moment_error(const Mat& samples,
                                       const AnalyticStats& stats);

/// Unbiased U-statistic estimate of squared MMD with a Gaussian kernel
/// k(x,y) = exp(-|x-y|^2 / (2 bandwidth^2)); may be slightly negative.
double mmd2_unbiased(const Mat& a, const Mat& b, double bandwidth);

/// Median pairwise Euclidean distance of the pooled rows (subsampled above
/// `cap` rows for cost).
double median_heuristic_bandwidth(const Mat& a, const Mat& b, int cap = 2000);

/// q-th quantile of the MMD^2 permutation null: rows of a and b pooled and
/// relabeled n_permutations times. Used as the acceptance threshold for
/// "statistically indistinguishable".
double mmd2_permutation_quantile(const Mat& a, const Mat& b, double bandwidth,
                                 int n_permutations, double q,
                                 std::uint64_t seed);

/// Normalized sample autocorrelation of a series at the given lag.
double lag_autocorr(const Vec& series, int lag);

struct KsResult {
  double stat = 0.0;
  bool pass_at_01 = false;  // stat < 1.628 / sqrt(n)
};

/// Two-sided Kolmogorov-Smirnov test of `samples` against the given CDF,
/// with the asymptotic critical value at significance 0.01.
KsResult ks_test_1d(std::vector<double> samples,
                    const std::function<double(double)>& cdf);

struct EnergyScaling {
  double err_at_eps = 0.0;       // mean over trials of max |H_t - H_0|
  double err_at_half_eps = 0.0;
  double ratio = 0.0;
  int n_divergent = 0;
};

/// Mean max-energy-error along trajectories from random starts, at the
/// layer's step and half of it; second-order integrators put the ratio
/// near 4.
EnergyScaling energy_error_scaling(const TargetDensity& target,
                                   const LeapfrogLayer& layer, int n_trials,
                                   std::uint64_t seed);

struct DiagnosticsOptions {
  std::optional<Mat> ground_truth;   // reference sample (e.g. corrected HMC)
  int mmd_permutations = 200;
  int mmd_max_rows = 2000;  // per side; the pooled Gram matrix is quadratic
  std::uint64_t seed = 0;
  std::optional<double> entropy_q0;  // H(q0) to surface in the report
};

/// Full report for a sample matrix against a target: moment errors and the
/// expected-logp gap when analytic stats exist, per-coordinate (plus seeded
/// 1D projections) KS for Gaussian-form targets, lag-1 autocorrelation, and
/// the MMD block when a ground-truth sample is supplied.
DiagnosticsReport compute_diagnostics(const Mat& samples,
                                      const TargetDensity& target,
                                      const DiagnosticsOptions& options = {});

}  // namespace ergo
