#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ergo/common.hpp"
#include "ergo/dein.hpp"
#include "ergo/loss.hpp"

namespace ergo {

struct AdamHyper {
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment state; moment arrays mirror the trainable parameter
/// shapes exactly.
struct OptimizerState {
  ParamMap first_moment;
  ParamMap second_moment;
  std::int64_t step_count = 0;
  AdamHyper hyper;

  static OptimizerState init(const ParamMap& params, AdamHyper hyper = {});
};

/// One bias-corrected adaptive-moment ASCENT step (the update is added).
/// lr_scale multiplies the configured learning rate, used by schedules.
/// Throws StepRejectedError on non-finite gradient entries.
std::pair<ParamMap, OptimizerState> adam_step(const ParamMap& params,
                                              const ParamMap& grad,
                                              OptimizerState state,
                                              double lr_scale = 1.0);
std::pair<ParamMap, OptimizerState> adam_step(const ParamMap& params,
                                              const GradEstimate& grad,
                                              OptimizerState state,
                                              double lr_scale = 1.0);

struct TrainConfig {
  int iterations = 500;
  int batch_size = 512;  // >= 16, SE estimates are meaningless below
  std::uint64_t seed = 0;
  std::optional<double> grad_clip = 10.0;  // global-norm clip
  LossMode mode = LossMode::kObjective;
  bool reproducible_reduction = true;
  AdamHyper adam;
  std::string lr_decay = "none";  // "none" | "rsqrt"
  bool override_precondition = false;
  int precondition_n = 4096;
};

struct IterRecord {
  int iter = 0;
  double objective = 0.0;
  double total = 0.0;
  double std_error = 0.0;
  int n_divergent = 0;
  double grad_norm = 0.0;
};

struct TrainResult {
  DeinModel model;
  std::vector<IterRecord> trace;
  PreconditionResult precondition;
};

/// Fixed-budget stochastic ascent on the ergodic loss: fresh seed-derived
/// noise each iteration, gradient, optional clip, adaptive-moment update.
/// Deterministic given cfg.seed. Fails after more than five consecutive
/// rejected steps.
TrainResult train(const DeinModel& model, const TargetDensity& target,
                  const TrainConfig& cfg);

struct DepthSweepEntry {
  int depth = 0;
  double objective = 0.0;
  double std_error = 0.0;
};

/// Trains one model per depth from the same initial distribution and seed
/// protocol; final objectives are evaluated on a shared noise batch so the
/// per-depth estimates use common random numbers.
std::vector<DepthSweepEntry> depth_sweep(const TargetDensity& target,
                                         const std::vector<int>& depths,
                                         const TrainConfig& cfg,
                                         const ModelSpec& spec = {});

}  // namespace ergo
