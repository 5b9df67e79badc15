#pragma once

#include <functional>
#include <vector>

#include "ergo/common.hpp"
#include "ergo/target.hpp"

namespace ergo {

/// One trainable Hamiltonian transformation: per-dimension step sizes and
/// diagonal masses live in log space so the positive-definiteness invariant
/// holds by construction. The leap count is a fixed hyperparameter.
struct LeapfrogLayer {
  Vec log_step;
  Vec log_mass;
  int leaps = 1;

  int dim() const { return static_cast<int>(log_step.size()); }
  Vec step() const { return log_step.array().exp(); }
  Vec mass() const { return log_mass.array().exp(); }

  static LeapfrogLayer uniform(int dim, double step, double mass = 1.0,
                               int leaps = 1);
};

/// Everything the reverse pass needs, recorded during the forward sweep.
/// positions[0] is the input state, positions[L] the output; momenta are
/// synchronized to integer steps (momenta[0] input, momenta[L] output);
/// momenta_half[k] is the half-step momentum driving drift k+1; grads[k] is
/// grad U at positions[k].
struct LeapfrogTrace {
  std::vector<Vec> positions;
  std::vector<Vec> momenta_half;
  std::vector<Vec> momenta;
  std::vector<Vec> grads;

  int leaps() const { return static_cast<int>(momenta_half.size()); }
};

struct LeapfrogResult {
  Vec z;
  Vec r;
  LeapfrogTrace trace;
};

/// Standard leapfrog discretization of Hamiltonian dynamics with potential
/// U = -log pi* and kinetic energy r^T diag(m)^{-1} r / 2. Deterministic.
/// Throws DivergenceError (with the failing leap index) if the state goes
/// non-finite mid-trajectory.
LeapfrogResult leapfrog_forward(const Vec& z, const Vec& r,
                                const LeapfrogLayer& layer,
                                const TargetDensity& target);

/// Trace-free variant for bulk sampling; same trajectory, endpoints only.
std::pair<Vec, Vec> leapfrog_endpoint(const Vec& z, const Vec& r,
                                      const LeapfrogLayer& layer,
                                      const TargetDensity& target);

struct LeapfrogVjp {
  Vec zbar;
  Vec rbar;
  Vec log_step_bar;
  Vec log_mass_bar;
};

/// Exact reverse accumulation through a recorded trajectory: given cotangents
/// of the outputs (z', r'), returns cotangents of the inputs and of the
/// layer's log-step and log-mass parameters. Curvature contractions go
/// through hvp_logp of the target.
LeapfrogVjp leapfrog_vjp(const LeapfrogTrace& trace, const LeapfrogLayer& layer,
                         const TargetDensity& target, const Vec& zbar_out,
                         const Vec& rbar_out);

/// Total energy U(z) + K(r) of a phase-space point under the layer's kinetic
/// form.
double hamiltonian(const Vec& z, const Vec& r, const LeapfrogLayer& layer,
                   const TargetDensity& target);

/// State triple for the deterministic Metropolis-Hastings map.
struct MhState {
  Vec z;
  Vec r;   // proposal draw
  double u;  // uniform variate in [0, 1]
};

/// min{1, pi*(r) q(z|r) / (pi*(z) q(r|z))}, evaluated in log space.
/// proposal_logq(from, to) is log q(to | from).
double mh_accept_prob(
    const Vec& z, const Vec& r, const TargetDensity& target,
    const std::function<double(const Vec&, const Vec&)>& proposal_logq);

/// The accept/reject step as a pure coordinate permutation: swaps z and r
/// when u < p, keeps the state otherwise. Unit Jacobian by construction.
MhState mh_transform(const MhState& s, double p);

/// (x, y) -> (x + y, x); the textbook unit-Jacobian fixture.
std::pair<double, double> shear_transform(double x, double y);

/// log |det| of the central-finite-difference Jacobian of `map` at z.
/// Returns a non-finite value if the FD Jacobian is singular.
double numerical_jacobian_logdet(const std::function<Vec(const Vec&)>& map,
                                 const Vec& z, double h);

}  // namespace ergo
