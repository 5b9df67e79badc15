#include "ergo/optimize.hpp"

#include <cmath>

namespace ergo {

namespace {

// seed substreams for the training loop
constexpr std::uint64_t kIterNoiseStream = 0x7261696e;
constexpr std::uint64_t kPreconditionStream = 0x70726531;
constexpr std::uint64_t kSweepEvalStream = 0x65766101;

double global_norm(const ParamMap& grad) {
  double ssq = 0.0;
  for (const auto& [name, g] : grad) ssq += g.squaredNorm();
  return std::sqrt(ssq);
}

double lr_schedule(const std::string& decay, std::int64_t step) {
  if (decay == "none") return 1.0;
  if (decay == "rsqrt") return std::sqrt(100.0 / (100.0 + double(step)));
  throw ContractViolation("TrainConfig: unknown lr_decay '" + decay + "'");
}

void validate(const TrainConfig& cfg) {
  if (cfg.iterations < 0) throw ContractViolation("TrainConfig: iterations >= 0");
  if (cfg.batch_size < 16) throw ContractViolation("TrainConfig: batch_size >= 16");
  if (cfg.grad_clip && *cfg.grad_clip <= 0.0) {
    throw ContractViolation("TrainConfig: grad_clip must be positive");
  }
  lr_schedule(cfg.lr_decay, 0);
}

}  // namespace

OptimizerState OptimizerState::init(const ParamMap& params, AdamHyper hyper) {
  OptimizerState state;
  state.hyper = hyper;
  for (const auto& [name, value] : params) {
    state.first_moment[name] = Vec::Zero(value.size());
    state.second_moment[name] = Vec::Zero(value.size());
  }
  return state;
}

std::pair<ParamMap, OptimizerState> adam_step(const ParamMap& params,
                                              const ParamMap& grad,
                                              OptimizerState state,
                                              double lr_scale) {
  if (grad.size() != params.size()) {
    throw ContractViolation("adam_step: gradient/parameter set mismatch");
  }
  for (const auto& [name, g] : grad) {
    auto it = params.find(name);
    if (it == params.end() || it->second.size() != g.size()) {
      throw ContractViolation("adam_step: shape mismatch for '" + name + "'");
    }
    if (!g.allFinite()) {
      throw StepRejectedError("adam_step: non-finite gradient in '" + name + "'");
    }
  }

  const AdamHyper& h = state.hyper;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);

  ParamMap updated = params;
  for (const auto& [name, g] : grad) {
    Vec& m = state.first_moment.at(name);
    Vec& v = state.second_moment.at(name);
    m = h.beta1 * m + (1.0 - h.beta1) * g;
    v = h.beta2 * v + (1.0 - h.beta2) * g.cwiseAbs2();
    Vec m_hat = m / bc1;
    Vec v_hat = v / bc2;
    updated[name] +=
        (lr_scale * h.learning_rate) *
        (m_hat.array() / (v_hat.array().sqrt() + h.epsilon)).matrix();
  }
  return {std::move(updated), std::move(state)};
}

std::pair<ParamMap, OptimizerState> adam_step(const ParamMap& params,
                                              const GradEstimate& grad,
                                              OptimizerState state,
                                              double lr_scale) {
  return adam_step(params, grad.by_name, std::move(state), lr_scale);
}

TrainResult train(const DeinModel& model, const TargetDensity& target,
                  const TrainConfig& cfg) {
  validate(cfg);

  TrainResult result;
  result.model = model;
  result.precondition = precondition_check(
      model, target, cfg.precondition_n, mix64(cfg.seed, kPreconditionStream));

  if (cfg.iterations > 0 &&
      result.precondition.status == PreconditionResult::Status::kFailed &&
      !cfg.override_precondition) {
    throw TrainingError(
        "train: q0 does not sit below the target in expected log-density; "
        "set override_precondition to proceed anyway");
  }
  if (cfg.iterations == 0) return result;

  ParamMap params = trainable_params(result.model);
  if (params.empty()) {
    throw ContractViolation("train: model has no trainable parameters");
  }
  OptimizerState state = OptimizerState::init(params, cfg.adam);

  int consecutive_rejections = 0;
  result.trace.reserve(cfg.iterations);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    NoiseBatch noise =
        sample_noise(result.model, cfg.batch_size,
                     mix64(mix64(cfg.seed, kIterNoiseStream), iter));
    IterRecord rec;
    rec.iter = iter;
    try {
      GradEstimate grad =
          ergodic_loss_grad(result.model, target, noise, cfg.mode);
      rec.objective = grad.objective.value;
      rec.total = grad.total.value;
      rec.std_error = grad.value.std_error;
      rec.n_divergent = grad.value.n_divergent;
      rec.grad_norm = global_norm(grad.by_name);

      if (cfg.grad_clip && rec.grad_norm > *cfg.grad_clip) {
        double scale = *cfg.grad_clip / rec.grad_norm;
        for (auto& [name, g] : grad.by_name) g *= scale;
      }
      std::tie(params, state) =
          adam_step(params, grad, std::move(state),
                    lr_schedule(cfg.lr_decay, state.step_count));
      set_trainable_params(result.model, params);
      consecutive_rejections = 0;
    } catch (const StepRejectedError&) {
      if (++consecutive_rejections > 5) {
        throw TrainingError("train: more than five consecutive rejected steps");
      }
      rec.grad_norm = std::numeric_limits<double>::quiet_NaN();
    }
    result.trace.push_back(rec);
  }
  return result;
}

std::vector<DepthSweepEntry> depth_sweep(const TargetDensity& target,
                                         const std::vector<int>& depths,
                                         const TrainConfig& cfg,
                                         const ModelSpec& spec) {
  if (depths.empty()) throw ContractViolation("depth_sweep: no depths given");
  for (size_t i = 0; i + 1 < depths.size(); ++i) {
    if (depths[i + 1] < depths[i]) {
      throw ContractViolation("depth_sweep: depths must be non-decreasing");
    }
  }

  const int n_eval = std::max(2048, 4 * cfg.batch_size);
  const std::uint64_t eval_seed = mix64(cfg.seed, kSweepEvalStream);

  std::vector<DepthSweepEntry> out;
  out.reserve(depths.size());
  for (int depth : depths) {
    if (depth < 1) throw ContractViolation("depth_sweep: depths must be >= 1");
    ModelSpec per_depth = spec;
    per_depth.depth = depth;
    DeinModel model = build_model(per_depth, target);
    TrainResult trained = train(model, target, cfg);

    // shared eval seed: substreams match across depths, so the comparison
    // between consecutive depths runs on common random numbers
    NoiseBatch eval_noise = sample_noise(trained.model, n_eval, eval_seed);
    ErgodicLoss loss = ergodic_loss(trained.model, target, eval_noise);
    out.push_back({depth, loss.objective.value, loss.objective.std_error});
  }
  return out;
}

}  // namespace ergo
