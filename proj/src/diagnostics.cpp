#include "ergo/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ergo/loss.hpp"

namespace ergo {

namespace {

constexpr std::uint64_t kProjectionSeed = 0x70726f6a;  // fixed projections
constexpr std::uint64_t kPermStream = 0x7065726d;
constexpr std::uint64_t kEnergyStream = 0x656e6572;

Mat pairwise_sqdist(const Mat& x, const Mat& y) {
  Vec xs = x.rowwise().squaredNorm();
  Vec ys = y.rowwise().squaredNorm();
  Mat d = -2.0 * x * y.transpose();
  d.colwise() += xs;
  d.rowwise() += ys.transpose();
  return d.cwiseMax(0.0);
}

double quantile_of(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  int idx = static_cast<int>(std::ceil(q * values.size())) - 1;
  idx = std::clamp(idx, 0, static_cast<int>(values.size()) - 1);
  return values[idx];
}

}  // namespace

std::pair<double, double> moment_error(const Mat& samples,
                                       const AnalyticStats& stats) {
  if (samples.rows() < 2) throw EstimationError("moment_error: need n >= 2");
  if (!stats.mean || !stats.cov) {
    throw ContractViolation("moment_error: stats lack mean/cov");
  }
  const int n = static_cast<int>(samples.rows());
  Vec mean = samples.colwise().mean();
  Mat centered = samples.rowwise() - mean.transpose();
  Mat cov = centered.transpose() * centered / (n - 1);

  double mean_err = (mean - *stats.mean).cwiseAbs().maxCoeff();
  double cov_err = (cov - *stats.cov).cwiseAbs().maxCoeff();
  return {mean_err, cov_err};
}

double mmd2_unbiased(const Mat& a, const Mat& b, double bandwidth) {
  if (bandwidth <= 0.0) throw ContractViolation("mmd2_unbiased: bandwidth > 0");
  if (a.rows() < 2 || b.rows() < 2 || a.cols() != b.cols()) {
    throw ContractViolation("mmd2_unbiased: need two rows per side, equal dim");
  }
  const double m = static_cast<double>(a.rows());
  const double n = static_cast<double>(b.rows());
  const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);

  Mat kaa = (-gamma * pairwise_sqdist(a, a)).array().exp();
  Mat kbb = (-gamma * pairwise_sqdist(b, b)).array().exp();
  Mat kab = (-gamma * pairwise_sqdist(a, b)).array().exp();

  double term_aa = (kaa.sum() - kaa.trace()) / (m * (m - 1.0));
  double term_bb = (kbb.sum() - kbb.trace()) / (n * (n - 1.0));
  double term_ab = kab.sum() / (m * n);
  return term_aa + term_bb - 2.0 * term_ab;
}

double median_heuristic_bandwidth(const Mat& a, const Mat& b, int cap) {
  if (cap < 2) throw ContractViolation("median_heuristic_bandwidth: cap >= 2");
  Mat pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  // deterministic strided subsample above the cap
  if (pooled.rows() > cap) {
    Mat sub(cap, pooled.cols());
    const double stride = double(pooled.rows()) / cap;
    for (int i = 0; i < cap; ++i) {
      sub.row(i) = pooled.row(static_cast<int>(i * stride));
    }
    pooled = std::move(sub);
  }
  const int n = static_cast<int>(pooled.rows());
  std::vector<double> dists;
  dists.reserve(size_t(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      dists.push_back((pooled.row(i) - pooled.row(j)).norm());
    }
  }
  size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  double med = dists[mid];
  return med > 0.0 ? med : 1.0;
}

double mmd2_permutation_quantile(const Mat& a, const Mat& b, double bandwidth,
                                 int n_permutations, double q,
                                 std::uint64_t seed) {
  if (n_permutations < 20) {
    throw ContractViolation("mmd2_permutation_quantile: need >= 20 permutations");
  }
  if (bandwidth <= 0.0) throw ContractViolation("mmd2_permutation_quantile: bandwidth > 0");
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(b.rows());
  Mat pooled(m + n, a.cols());
  pooled << a, b;

  // cache the pooled Gram matrix once; single precision is ample for a
  // permutation threshold
  const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
  Eigen::MatrixXf gram =
      (-gamma * pairwise_sqdist(pooled, pooled)).array().exp().cast<float>();

  std::vector<int> idx(m + n);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = substream_rng(seed, kPermStream, 0);

  std::vector<double> null_values;
  null_values.reserve(n_permutations);
  for (int p = 0; p < n_permutations; ++p) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (int i = 0; i < m + n; ++i) {
      const float* row = gram.data() + size_t(idx[i]) * gram.rows();
      const bool i_in_a = i < m;
      for (int j = i + 1; j < m + n; ++j) {
        double k = row[idx[j]];
        const bool j_in_a = j < m;
        if (i_in_a && j_in_a) {
          saa += k;
        } else if (!i_in_a && !j_in_a) {
          sbb += k;
        } else {
          sab += k;
        }
      }
    }
    double mmd = 2.0 * saa / (double(m) * (m - 1)) +
                 2.0 * sbb / (double(n) * (n - 1)) -
                 2.0 * sab / (double(m) * n);
    null_values.push_back(mmd);
  }
  return quantile_of(std::move(null_values), q);
}

double lag_autocorr(const Vec& series, int lag) {
  const int n = static_cast<int>(series.size());
  if (lag < 1) throw ContractViolation("lag_autocorr: lag >= 1");
  if (n <= lag + 1) throw ContractViolation("lag_autocorr: series too short");

  const double mean = series.mean();
  double denom = (series.array() - mean).square().sum();
  if (denom <= 0.0) {
    throw EstimationError("lag_autocorr: zero-variance series");
  }
  double num = 0.0;
  for (int t = 0; t + lag < n; ++t) {
    num += (series[t] - mean) * (series[t + lag] - mean);
  }
  return num / denom;
}

KsResult ks_test_1d(std::vector<double> samples,
                    const std::function<double(double)>& cdf) {
  const int n = static_cast<int>(samples.size());
  if (n < 100) throw ContractViolation("ks_test_1d: n >= 100");
  std::sort(samples.begin(), samples.end());

  double stat = 0.0;
  for (int i = 0; i < n; ++i) {
    double f = cdf(samples[i]);
    stat = std::max(stat, std::abs(double(i + 1) / n - f));
    stat = std::max(stat, std::abs(f - double(i) / n));
  }
  KsResult out;
  out.stat = stat;
  out.pass_at_01 = stat < 1.628 / std::sqrt(double(n));
  return out;
}

EnergyScaling energy_error_scaling(const TargetDensity& target,
                                   const LeapfrogLayer& layer, int n_trials,
                                   std::uint64_t seed) {
  if (n_trials < 10) throw ContractViolation("energy_error_scaling: n_trials >= 10");

  LeapfrogLayer half = layer;
  half.log_step = layer.log_step.array() - std::log(2.0);
  const Vec sqrt_mass = layer.mass().array().sqrt();

  auto max_energy_err = [&](const LeapfrogLayer& lay, const Vec& z0,
                            const Vec& r0) {
    LeapfrogResult res = leapfrog_forward(z0, r0, lay, target);
    double h0 = hamiltonian(res.trace.positions[0], res.trace.momenta[0], lay,
                            target);
    double worst = 0.0;
    for (int k = 1; k <= lay.leaps; ++k) {
      double hk = hamiltonian(res.trace.positions[k], res.trace.momenta[k],
                              lay, target);
      worst = std::max(worst, std::abs(hk - h0));
    }
    return worst;
  };

  EnergyScaling out;
  int used = 0;
  for (int t = 0; t < n_trials; ++t) {
    auto rng = substream_rng(seed, kEnergyStream, static_cast<std::uint64_t>(t));
    Vec z(target.dim()), u(target.dim());
    fill_standard_normal(rng, z);
    fill_standard_normal(rng, u);
    Vec r = sqrt_mass.cwiseProduct(u);
    try {
      double full = max_energy_err(layer, z, r);
      double halved = max_energy_err(half, z, r);
      out.err_at_eps += full;
      out.err_at_half_eps += halved;
      ++used;
    } catch (const DivergenceError&) {
      ++out.n_divergent;
    }
  }
  if (used == 0) throw EstimationError("energy_error_scaling: all trials diverged");
  out.err_at_eps /= used;
  out.err_at_half_eps /= used;
  out.ratio = out.err_at_half_eps > 0.0 ? out.err_at_eps / out.err_at_half_eps
                                        : std::numeric_limits<double>::infinity();
  return out;
}

DiagnosticsReport compute_diagnostics(const Mat& samples,
                                      const TargetDensity& target,
                                      const DiagnosticsOptions& options) {
  if (samples.rows() < 2) throw EstimationError("compute_diagnostics: n >= 2");
  DiagnosticsReport report;
  const int n = static_cast<int>(samples.rows());
  const int dim = static_cast<int>(samples.cols());

  const auto& stats = target.stats();
  if (stats && stats->mean && stats->cov) {
    auto [mean_err, cov_err] = moment_error(samples, *stats);
    report.mean_error = mean_err;
    report.cov_error = cov_err;
  }
  if (stats && stats->expected_logp) {
    LossEstimate logp = expected_logp(target, samples);
    report.expected_logp_gap = logp.value - *stats->expected_logp;
  }
  if (stats && stats->entropy) report.entropy_target = stats->entropy;
  report.entropy_q0 = options.entropy_q0;

  // lag-1 autocorrelation of the worst coordinate, sign kept
  {
    double worst = 0.0;
    for (int j = 0; j < dim; ++j) {
      double rho = lag_autocorr(samples.col(j), 1);
      if (std::abs(rho) > std::abs(worst)) worst = rho;
    }
    report.lag1_autocorr = worst;
  }

  // KS against Gaussian marginals and five fixed 1D projections; only valid
  // when the target itself is Gaussian (linear projections stay Gaussian)
  if (stats && stats->gaussian_form && stats->mean && stats->cov && n >= 100) {
    const Vec& mu = *stats->mean;
    const Mat& cov = *stats->cov;
    double worst = 0.0;
    auto run_ks = [&](const Vec& direction) {
      double m = direction.dot(mu);
      double s = std::sqrt(direction.dot(cov * direction));
      Vec proj = samples * direction;
      std::vector<double> vals(proj.data(), proj.data() + proj.size());
      KsResult ks = ks_test_1d(std::move(vals), [m, s](double x) {
        return standard_normal_cdf((x - m) / s);
      });
      worst = std::max(worst, ks.stat);
    };
    for (int j = 0; j < dim; ++j) run_ks(Vec::Unit(dim, j));
    for (int p = 0; p < 5; ++p) {
      auto rng = substream_rng(kProjectionSeed, p, 0);
      Vec dir(dim);
      fill_standard_normal(rng, dir);
      run_ks(dir.normalized());
    }
    report.ks_stat = worst;
    report.ks_pass_at_01 = worst < 1.628 / std::sqrt(double(n));
  }

  if (options.ground_truth) {
    // cap both sides so the statistic and its permutation null live at the
    // same sample size regardless of n_eval
    auto subsample = [&](const Mat& m) {
      if (m.rows() <= options.mmd_max_rows) return m;
      Mat sub(options.mmd_max_rows, m.cols());
      const double stride = double(m.rows()) / options.mmd_max_rows;
      for (int i = 0; i < options.mmd_max_rows; ++i) {
        sub.row(i) = m.row(static_cast<int>(i * stride));
      }
      return sub;
    };
    Mat a = subsample(samples);
    Mat b = subsample(*options.ground_truth);
    double bw = median_heuristic_bandwidth(a, b);
    report.mmd2_bandwidth = bw;
    report.mmd2 = mmd2_unbiased(a, b, bw);
    report.mmd2_null_99 = mmd2_permutation_quantile(
        a, b, bw, options.mmd_permutations, 0.99, options.seed);
  }
  return report;
}

}  // namespace ergo
