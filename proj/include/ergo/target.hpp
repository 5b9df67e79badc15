#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ergo/common.hpp"

namespace ergo {

/// Closed-form reference statistics of a target, used by the precondition
/// check and the diagnostics. Every field is optional per target.
struct AnalyticStats {
  std::optional<Vec> mean;
  std::optional<Mat> cov;             // symmetric positive definite when set
  std::optional<double> expected_logp;  // E_pi[log pi*]
  std::optional<double> entropy;        // H(pi), of the normalized target
  bool gaussian_form = false;  // marginals/projections are exactly Gaussian
};

using TargetParams = std::map<std::string, std::vector<double>>;

/// Unnormalised target density: log pi*(z), its gradient, and (when known)
/// an analytic Hessian-vector product. Immutable after construction; all
/// member calls are pure.
class TargetDensity {
 public:
  using LogpFn = std::function<double(const Vec&)>;
  using GradFn = std::function<Vec(const Vec&)>;
  using HvpFn = std::function<Vec(const Vec&, const Vec&)>;

  TargetDensity(std::string name, int dim, TargetParams params, LogpFn logp,
                GradFn grad, HvpFn hvp = nullptr,
                std::optional<AnalyticStats> stats = std::nullopt);

  int dim() const { return dim_; }
  const std::string& name() const { return name_; }
  const TargetParams& params() const { return params_; }
  bool has_analytic_hvp() const { return static_cast<bool>(hvp_); }
  const std::optional<AnalyticStats>& stats() const { return stats_; }

  double logp_raw(const Vec& z) const { return logp_(z); }
  Vec grad_raw(const Vec& z) const { return grad_(z); }
  Vec hvp_raw(const Vec& z, const Vec& v) const { return hvp_(z, v); }

 private:
  std::string name_;
  int dim_;
  TargetParams params_;
  LogpFn logp_;
  GradFn grad_;
  HvpFn hvp_;
  std::optional<AnalyticStats> stats_;
};

/// log pi*(z). Throws ContractViolation on a length mismatch and DomainError
/// on non-finite input.
double logp_unnorm(const TargetDensity& target, const Vec& z);

/// Gradient of log pi*, same checks as logp_unnorm.
Vec grad_logp(const TargetDensity& target, const Vec& z);

struct HvpResult {
  Vec value;
  bool approximate;  // true when the finite-difference fallback was used
};

/// (Hessian of log pi*) . v. Falls back to a central finite difference of
/// grad_logp along v when the target has no analytic form; the fallback is
/// flagged so reports can surface it.
HvpResult hvp_logp(const TargetDensity& target, const Vec& z, const Vec& v);

std::optional<AnalyticStats> analytic_stats(const TargetDensity& target);

/// Builds a battery target by name. Known names: std_normal, corr_gauss,
/// diag_gauss, gauss_mix2, banana, funnel. Unknown names or malformed
/// parameter sets throw ContractViolation naming the offending key.
TargetDensity make_target(const std::string& name, const TargetParams& params);

/// Names accepted by make_target, in registry order.
std::vector<std::string> target_battery();

}  // namespace ergo
