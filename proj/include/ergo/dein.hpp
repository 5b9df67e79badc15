#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ergo/common.hpp"
#include "ergo/target.hpp"
#include "ergo/transforms.hpp"

namespace ergo {

/// Diagonal-Gaussian initial distribution, reparameterized as
/// z0 = mean + exp(log_std) . r0.
struct InitDist {
  Vec mean;
  Vec log_std;
  bool trainable = false;

  Vec std() const { return log_std.array().exp(); }
};

/// Ordered stack of Hamiltonian transformations over a reparameterized
/// initial distribution. depth() == 0 is the bare initial distribution.
struct DeinModel {
  InitDist init;
  std::vector<LeapfrogLayer> layers;
  int dim = 0;

  int depth() const { return static_cast<int>(layers.size()); }

  /// Model with the leading n layers only (shares parameter values).
  DeinModel prefix(int n) const;
};

/// Flat named view of the trainable parameters. Keys are "init.mean",
/// "init.log_std" (when the init is trainable) and "layerNNN.log_step",
/// "layerNNN.log_mass" with a zero-padded layer index; map order is the
/// documented serialization order.
using ParamMap = std::map<std::string, Vec>;

ParamMap trainable_params(const DeinModel& model);
void set_trainable_params(DeinModel& model, const ParamMap& params);
int count_params(const DeinModel& model);

/// All stochasticity of a push-forward: the init noise and one momentum
/// noise matrix per layer, all standard normal. Parameter-free so frozen
/// noise yields well-defined reparameterization gradients.
struct NoiseBatch {
  Mat r0;                    // n x dim
  std::vector<Mat> momenta;  // depth() matrices, each n x dim
  std::uint64_t seed = 0;

  int rows() const { return static_cast<int>(r0.rows()); }
};

/// Deterministic function of (model shape, n, seed). Row i of every stream
/// depends only on (seed, stream, i), so sample i is reproducible
/// independently of n; see substream_rng for the splitting rule.
NoiseBatch sample_noise(const DeinModel& model, int n, std::uint64_t seed);

struct PushForward {
  Mat samples;                  // n x dim, final states
  Mat z0;                       // n x dim, initial states (before any layer)
  std::vector<std::uint8_t> diverged;  // per-row flag
  int n_divergent = 0;
  // traces[row][layer], populated only when requested
  std::vector<std::vector<LeapfrogTrace>> traces;
};

/// Pushes the noise through init transform and layer stack. Momentum for
/// layer n is sqrt(mass_n) . noise.momenta[n], drawn inside so the noise
/// stays parameter-free. Divergent rows are flagged and their samples left
/// at the last finite state; they are excluded downstream.
PushForward push_forward(const DeinModel& model, const NoiseBatch& noise,
                         const TargetDensity& target, bool keep_traces);

/// Advances a batch of states through one layer in place (rows with
/// diverged[i] != 0 are skipped). Exposed so stage-wise evaluation composes
/// bit-identically with the full-stack push.
void advance_through_layer(Mat& states, const LeapfrogLayer& layer,
                           const Mat& momentum_noise,
                           const TargetDensity& target,
                           std::vector<std::uint8_t>& diverged,
                           std::vector<LeapfrogTrace>* traces = nullptr);

/// Construction recipe used by the CLI and the sweeps.
struct ModelSpec {
  int depth = 8;
  int leaps = 5;
  double init_step = 0.1;
  std::optional<Vec> init_mean;     // default: analytic mean or zero
  std::optional<Vec> init_log_std;  // default: log(2 x target scale)
  bool trainable_init = false;
};

/// Builds a model for `target` from a ModelSpec. When the target publishes
/// analytic moments, the default initial distribution is centered on the
/// analytic mean with twice the per-dimension scale, which over-disperses
/// q0 as the training precondition requires.
DeinModel build_model(const ModelSpec& spec, const TargetDensity& target);

}  // namespace ergo
