#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ergo/common.hpp"
#include "ergo/dein.hpp"
#include "ergo/target.hpp"

namespace ergo {

/// Monte Carlo estimate with its standard error. n_samples counts the rows
/// that entered the average; n_divergent the rows excluded.
struct LossEstimate {
  double value = 0.0;
  double std_error = 0.0;
  int n_samples = 0;
  int n_divergent = 0;
};

/// Mean and standard error of log pi* over sample rows. The masked overload
/// excludes flagged rows; throws EstimationError when fewer than two rows
/// survive.
LossEstimate expected_logp(const TargetDensity& target, const Mat& samples);
LossEstimate expected_logp(const TargetDensity& target, const Mat& samples,
                           const std::vector<std::uint8_t>& diverged);

struct ErgodicLoss {
  LossEstimate total;      // E_{qN}[log pi*] - E_{q0}[log pi*], common noise
  LossEstimate objective;  // E_{qN}[log pi*]
};

/// Both estimates from one pass over the stack, with the same noise feeding
/// the q0 and qN terms (common random numbers).
ErgodicLoss ergodic_loss(const DeinModel& model, const TargetDensity& target,
                         const NoiseBatch& noise);

/// Telescoping per-layer gaps E_{q_n}[log pi*] - E_{q_{n-1}}[log pi*].
/// Their sum reproduces ergodic_loss(...).total bit-consistently because the
/// stage means come from the same walk.
std::vector<LossEstimate> per_layer_gap(const DeinModel& model,
                                        const TargetDensity& target,
                                        const NoiseBatch& noise);

enum class LossMode { kObjective, kTotal };

/// Ascent gradient of the selected estimator with respect to every trainable
/// parameter, by reverse accumulation: seed grad log pi*(z_N) per row, pull
/// back through each layer's adjoint, then through the init transform.
/// Divergent rows are excluded; more than 1% of them rejects the step.
struct GradEstimate {
  ParamMap by_name;
  LossEstimate value;      // estimate of the selected mode
  LossEstimate objective;  // companion estimates from the same pass
  LossEstimate total;
};

GradEstimate ergodic_loss_grad(const DeinModel& model,
                               const TargetDensity& target,
                               const NoiseBatch& noise, LossMode mode);

/// Start-of-training check that q0 sits below the target in expected
/// log-density: estimated E_{q0}[log pi*] < E_pi[log pi*] - 3 SE. Targets
/// without a registered E_pi[log pi*] report kUnverified.
struct PreconditionResult {
  enum class Status { kPassed, kFailed, kUnverified };
  Status status = Status::kUnverified;
  double q0_logp = 0.0;
  double q0_std_error = 0.0;
  std::optional<double> target_logp;
  int n_samples = 0;

  bool passed() const { return status == Status::kPassed; }
};

PreconditionResult precondition_check(const DeinModel& model,
                                      const TargetDensity& target, int n,
                                      std::uint64_t seed);

/// Closed-form entropy of a diagonal Gaussian, reported next to the target
/// entropy as the (monitored, not enforced) entropy condition.
double diag_gaussian_entropy(const Vec& log_std);

}  // namespace ergo
