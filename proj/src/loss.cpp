#include "ergo/loss.hpp"

#include <cmath>

namespace ergo {

namespace {

constexpr double kLog2PiE = 2.8378770664093454836;

LossEstimate mean_and_se(const std::vector<double>& values, int n_divergent) {
  const int n = static_cast<int>(values.size());
  if (n < 1) throw EstimationError("estimator: every row diverged");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ssq = 0.0;
  for (double v : values) ssq += (v - mean) * (v - mean);
  double se = n > 1 ? std::sqrt(ssq / (n - 1)) / std::sqrt(double(n)) : 0.0;
  return {mean, se, n, n_divergent};
}

// log pi* per row at every stage of the stack, one walk, shared by the loss
// and gap estimators so the telescoping identity holds in floating point.
struct StageLogps {
  Mat lp;  // n x (depth + 1)
  std::vector<std::uint8_t> diverged;
  int n_divergent = 0;
};

StageLogps stage_logps(const DeinModel& model, const TargetDensity& target,
                       const NoiseBatch& noise) {
  const int n = noise.rows();
  const int depth = model.depth();

  StageLogps out;
  out.lp.resize(n, depth + 1);
  out.diverged.assign(n, 0);

  Mat states = noise.r0.array().rowwise() *
               model.init.std().transpose().array();
  states.rowwise() += model.init.mean.transpose();

  for (int i = 0; i < n; ++i) {
    out.lp(i, 0) = logp_unnorm(target, states.row(i).transpose());
  }
  for (int layer = 0; layer < depth; ++layer) {
    advance_through_layer(states, model.layers[layer], noise.momenta[layer],
                          target, out.diverged);
    for (int i = 0; i < n; ++i) {
      if (!out.diverged[i]) {
        out.lp(i, layer + 1) = target.logp_raw(states.row(i).transpose());
      }
    }
  }
  for (auto flag : out.diverged) out.n_divergent += flag;
  return out;
}

LossEstimate column_diff_estimate(const StageLogps& st, int col_hi,
                                  int col_lo) {
  std::vector<double> diffs;
  diffs.reserve(st.lp.rows());
  for (int i = 0; i < st.lp.rows(); ++i) {
    if (!st.diverged[i]) diffs.push_back(st.lp(i, col_hi) - st.lp(i, col_lo));
  }
  return mean_and_se(diffs, st.n_divergent);
}

}  // namespace

LossEstimate expected_logp(const TargetDensity& target, const Mat& samples) {
  return expected_logp(target, samples,
                       std::vector<std::uint8_t>(samples.rows(), 0));
}

LossEstimate expected_logp(const TargetDensity& target, const Mat& samples,
                           const std::vector<std::uint8_t>& diverged) {
  if (samples.rows() < 2) {
    throw ContractViolation("expected_logp: need at least two rows");
  }
  if (diverged.size() != static_cast<size_t>(samples.rows())) {
    throw ContractViolation("expected_logp: mask length mismatch");
  }
  std::vector<double> values;
  values.reserve(samples.rows());
  int n_div = 0;
  for (int i = 0; i < samples.rows(); ++i) {
    if (diverged[i]) {
      ++n_div;
      continue;
    }
    values.push_back(logp_unnorm(target, samples.row(i).transpose()));
  }
  return mean_and_se(values, n_div);
}

ErgodicLoss ergodic_loss(const DeinModel& model, const TargetDensity& target,
                         const NoiseBatch& noise) {
  StageLogps st = stage_logps(model, target, noise);
  const int depth = model.depth();

  ErgodicLoss out;
  out.total = column_diff_estimate(st, depth, 0);

  std::vector<double> lp_final;
  lp_final.reserve(st.lp.rows());
  for (int i = 0; i < st.lp.rows(); ++i) {
    if (!st.diverged[i]) lp_final.push_back(st.lp(i, depth));
  }
  out.objective = mean_and_se(lp_final, st.n_divergent);
  return out;
}

std::vector<LossEstimate> per_layer_gap(const DeinModel& model,
                                        const TargetDensity& target,
                                        const NoiseBatch& noise) {
  if (model.depth() < 1) {
    throw ContractViolation("per_layer_gap: model has no layers");
  }
  StageLogps st = stage_logps(model, target, noise);
  std::vector<LossEstimate> gaps;
  gaps.reserve(model.depth());
  for (int n = 1; n <= model.depth(); ++n) {
    gaps.push_back(column_diff_estimate(st, n, n - 1));
  }
  return gaps;
}

GradEstimate ergodic_loss_grad(const DeinModel& model,
                               const TargetDensity& target,
                               const NoiseBatch& noise, LossMode mode) {
  ParamMap params = trainable_params(model);
  if (params.empty()) {
    throw ContractViolation("ergodic_loss_grad: model has no trainable parameters");
  }

  PushForward fwd = push_forward(model, noise, target, /*keep_traces=*/true);
  const int n = noise.rows();
  const int depth = model.depth();
  const int n_valid = n - fwd.n_divergent;
  if (fwd.n_divergent > 0.01 * n) {
    throw StepRejectedError("ergodic_loss_grad: more than 1% divergent rows (" +
                            std::to_string(fwd.n_divergent) + "/" +
                            std::to_string(n) + ")");
  }
  if (n_valid < 1) throw EstimationError("ergodic_loss_grad: every row diverged");

  GradEstimate out;
  for (const auto& [name, value] : params) {
    out.by_name[name] = Vec::Zero(value.size());
  }

  std::vector<double> lp_final, lp_diff;
  lp_final.reserve(n_valid);
  lp_diff.reserve(n_valid);

  const double inv_n = 1.0 / n_valid;
  const Vec init_std = model.init.std();

  for (int i = 0; i < n; ++i) {
    if (fwd.diverged[i]) continue;
    const Vec z_final = fwd.samples.row(i).transpose();
    const Vec z0 = fwd.z0.row(i).transpose();
    const double lp_n = logp_unnorm(target, z_final);
    const double lp_0 = target.logp_raw(z0);
    lp_final.push_back(lp_n);
    lp_diff.push_back(lp_n - lp_0);

    // seed with the gradient of the row's contribution to the batch mean
    Vec zbar = inv_n * grad_logp(target, z_final);
    const Vec rbar_out = Vec::Zero(model.dim);

    for (int layer = depth - 1; layer >= 0; --layer) {
      LeapfrogVjp vjp = leapfrog_vjp(fwd.traces[i][layer], model.layers[layer],
                                     target, zbar, rbar_out);
      char key[32];
      std::snprintf(key, sizeof(key), "layer%03d", layer);
      out.by_name[std::string(key) + ".log_step"] += vjp.log_step_bar;
      // the layer momentum was sqrt(m) . u, so its log-mass sensitivity picks
      // up half the momentum times the momentum cotangent
      Vec momentum = model.layers[layer].mass().array().sqrt() *
                     noise.momenta[layer].row(i).transpose().array();
      out.by_name[std::string(key) + ".log_mass"] +=
          vjp.log_mass_bar + Vec(0.5 * vjp.rbar.cwiseProduct(momentum));
      zbar = std::move(vjp.zbar);
    }

    if (model.init.trainable) {
      out.by_name["init.mean"] += zbar;
      out.by_name["init.log_std"] += zbar.cwiseProduct(z0 - model.init.mean);
      if (mode == LossMode::kTotal) {
        // subtract the q0-term gradient (only the init depends on it)
        Vec g0 = inv_n * grad_logp(target, z0);
        out.by_name["init.mean"] -= g0;
        out.by_name["init.log_std"] -= g0.cwiseProduct(z0 - model.init.mean);
      }
    }
  }

  out.objective = mean_and_se(lp_final, fwd.n_divergent);
  out.total = mean_and_se(lp_diff, fwd.n_divergent);
  out.value = (mode == LossMode::kObjective) ? out.objective : out.total;
  return out;
}

PreconditionResult precondition_check(const DeinModel& model,
                                      const TargetDensity& target, int n,
                                      std::uint64_t seed) {
  if (n < 2) throw ContractViolation("precondition_check: n must be >= 2");

  DeinModel bare = model.prefix(0);
  NoiseBatch noise = sample_noise(bare, n, seed);
  PushForward fwd = push_forward(bare, noise, target, /*keep_traces=*/false);
  LossEstimate q0 = expected_logp(target, fwd.samples, fwd.diverged);

  PreconditionResult out;
  out.q0_logp = q0.value;
  out.q0_std_error = q0.std_error;
  out.n_samples = q0.n_samples;

  const auto& stats = target.stats();
  if (!stats || !stats->expected_logp) {
    out.status = PreconditionResult::Status::kUnverified;
    return out;
  }
  out.target_logp = *stats->expected_logp;
  out.status = (q0.value < *out.target_logp - 3.0 * q0.std_error)
                   ? PreconditionResult::Status::kPassed
                   : PreconditionResult::Status::kFailed;
  return out;
}

double diag_gaussian_entropy(const Vec& log_std) {
  return log_std.sum() + 0.5 * log_std.size() * kLog2PiE;
}

}  // namespace ergo
