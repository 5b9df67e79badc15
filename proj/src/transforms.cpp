#include "ergo/transforms.hpp"

#include <Eigen/LU>
#include <cmath>
#include <sstream>

namespace ergo {

namespace {

void check_layer(const LeapfrogLayer& layer, const TargetDensity& target,
                 const char* op) {
  if (layer.log_step.size() != layer.log_mass.size() ||
      layer.dim() != target.dim()) {
    throw ContractViolation(std::string(op) + ": layer/target dim mismatch");
  }
  if (layer.leaps < 1) {
    throw ContractViolation(std::string(op) + ": leaps must be >= 1");
  }
}

[[noreturn]] void throw_divergence(int leap) {
  std::ostringstream msg;
  msg << "leapfrog trajectory diverged at leap " << leap;
  throw DivergenceError(msg.str(), leap);
}

// Single code path for the traced and trace-free sweeps.
template <bool KeepTrace>
LeapfrogResult run_leapfrog(const Vec& z_in, const Vec& r_in,
                            const LeapfrogLayer& layer,
                            const TargetDensity& target) {
  check_layer(layer, target, "leapfrog_forward");
  if (z_in.size() != layer.dim() || r_in.size() != layer.dim()) {
    throw ContractViolation("leapfrog_forward: state dim mismatch");
  }

  const Vec eps = layer.step();
  const Vec inv_mass = layer.mass().array().inverse();
  const int leaps = layer.leaps;

  LeapfrogResult out;
  if constexpr (KeepTrace) {
    out.trace.positions.reserve(leaps + 1);
    out.trace.momenta_half.reserve(leaps);
    out.trace.momenta.reserve(leaps + 1);
    out.trace.grads.reserve(leaps + 1);
  }

  Vec z = z_in;
  Vec g = -grad_logp(target, z);  // grad U
  Vec p = r_in - 0.5 * eps.cwiseProduct(g);  // initial half kick

  if constexpr (KeepTrace) {
    out.trace.positions.push_back(z);
    out.trace.momenta.push_back(r_in);
    out.trace.grads.push_back(g);
  }

  for (int k = 1; k <= leaps; ++k) {
    if constexpr (KeepTrace) out.trace.momenta_half.push_back(p);

    z += eps.cwiseProduct(p).cwiseProduct(inv_mass);  // drift
    if (!z.allFinite()) throw_divergence(k - 1);
    g = -target.grad_raw(z);
    if (!g.allFinite()) throw_divergence(k - 1);

    if constexpr (KeepTrace) {
      out.trace.positions.push_back(z);
      out.trace.grads.push_back(g);
      // momentum synchronized to the integer step
      out.trace.momenta.push_back(Vec(p - 0.5 * eps.cwiseProduct(g)));
    }
    if (k < leaps) {
      p -= eps.cwiseProduct(g);  // full kick
      if (!p.allFinite()) throw_divergence(k);
    }
  }

  out.z = std::move(z);
  out.r = p - 0.5 * eps.cwiseProduct(g);  // closing half kick
  if (!out.r.allFinite()) throw_divergence(leaps - 1);
  return out;
}

}  // namespace

LeapfrogLayer LeapfrogLayer::uniform(int dim, double step, double mass,
                                     int leaps) {
  if (dim < 1 || step <= 0.0 || mass <= 0.0 || leaps < 1) {
    throw ContractViolation("LeapfrogLayer::uniform: invalid parameters");
  }
  LeapfrogLayer layer;
  layer.log_step = Vec::Constant(dim, std::log(step));
  layer.log_mass = Vec::Constant(dim, std::log(mass));
  layer.leaps = leaps;
  return layer;
}

LeapfrogResult leapfrog_forward(const Vec& z, const Vec& r,
                                const LeapfrogLayer& layer,
                                const TargetDensity& target) {
  return run_leapfrog<true>(z, r, layer, target);
}

std::pair<Vec, Vec> leapfrog_endpoint(const Vec& z, const Vec& r,
                                      const LeapfrogLayer& layer,
                                      const TargetDensity& target) {
  LeapfrogResult res = run_leapfrog<false>(z, r, layer, target);
  return {std::move(res.z), std::move(res.r)};
}

LeapfrogVjp leapfrog_vjp(const LeapfrogTrace& trace, const LeapfrogLayer& layer,
                         const TargetDensity& target, const Vec& zbar_out,
                         const Vec& rbar_out) {
  check_layer(layer, target, "leapfrog_vjp");
  const int leaps = layer.leaps;
  if (trace.leaps() != leaps ||
      trace.positions.size() != static_cast<size_t>(leaps + 1) ||
      trace.grads.size() != static_cast<size_t>(leaps + 1) ||
      trace.positions[0].size() != layer.dim()) {
    throw ContractViolation("leapfrog_vjp: trace does not match layer");
  }
  if (zbar_out.size() != layer.dim() || rbar_out.size() != layer.dim()) {
    throw ContractViolation("leapfrog_vjp: cotangent dim mismatch");
  }

  const Vec eps = layer.step();
  const Vec mass = layer.mass();
  const Vec inv_mass = mass.array().inverse();

  // hessian(U) . v = -hessian(log pi*) . v
  auto hvp_u = [&](const Vec& z, const Vec& v) -> Vec {
    return -hvp_logp(target, z, v).value;
  };

  Vec eps_bar = Vec::Zero(layer.dim());
  Vec mass_bar = Vec::Zero(layer.dim());

  // r_out = p_{L-1} - (eps/2) . gradU(z_L)
  Vec pbar = rbar_out;
  Vec zbar = zbar_out;
  eps_bar -= 0.5 * trace.grads[leaps].cwiseProduct(rbar_out);
  zbar += hvp_u(trace.positions[leaps],
                Vec(-0.5 * eps.cwiseProduct(rbar_out)));

  for (int k = leaps; k >= 1; --k) {
    // z_k = z_{k-1} + eps . p_{k-1} / m    (zbar currently carries zbar_k)
    const Vec& p_prev = trace.momenta_half[k - 1];
    pbar += eps.cwiseProduct(inv_mass).cwiseProduct(zbar);
    eps_bar += p_prev.cwiseProduct(inv_mass).cwiseProduct(zbar);
    mass_bar -=
        eps.cwiseProduct(p_prev).cwiseProduct(inv_mass.cwiseAbs2()).cwiseProduct(zbar);

    if (k >= 2) {
      // p_{k-1} = p_{k-2} - eps . gradU(z_{k-1})
      eps_bar -= trace.grads[k - 1].cwiseProduct(pbar);
      zbar += hvp_u(trace.positions[k - 1], Vec(-eps.cwiseProduct(pbar)));
    }
  }

  // p_0 = r_in - (eps/2) . gradU(z_0)
  LeapfrogVjp out;
  out.rbar = pbar;
  eps_bar -= 0.5 * trace.grads[0].cwiseProduct(pbar);
  zbar += hvp_u(trace.positions[0], Vec(-0.5 * eps.cwiseProduct(pbar)));
  out.zbar = std::move(zbar);

  // chain through the log parameterization
  out.log_step_bar = eps_bar.cwiseProduct(eps);
  out.log_mass_bar = mass_bar.cwiseProduct(mass);
  return out;
}

double hamiltonian(const Vec& z, const Vec& r, const LeapfrogLayer& layer,
                   const TargetDensity& target) {
  double kinetic =
      0.5 * (r.array().square() * layer.mass().array().inverse()).sum();
  return -logp_unnorm(target, z) + kinetic;
}

double mh_accept_prob(
    const Vec& z, const Vec& r, const TargetDensity& target,
    const std::function<double(const Vec&, const Vec&)>& proposal_logq) {
  double lp_z = logp_unnorm(target, z);
  if (!std::isfinite(lp_z)) {
    throw DomainError("mh_accept_prob: log pi*(z) is non-finite");
  }
  double log_ratio =
      target.logp_raw(r) + proposal_logq(r, z) - lp_z - proposal_logq(z, r);
  if (log_ratio >= 0.0) return 1.0;
  return std::exp(log_ratio);  // already <= 1
}

MhState mh_transform(const MhState& s, double p) {
  if (s.u < 0.0 || s.u > 1.0) {
    throw ContractViolation("mh_transform: u must lie in [0, 1]");
  }
  // ties (u == p) keep the state: the swap fires on strict u < p only
  if (s.u < p) return {s.r, s.z, s.u};
  return s;
}

std::pair<double, double> shear_transform(double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y)) {
    throw DomainError("shear_transform: non-finite input");
  }
  return {x + y, x};
}

double numerical_jacobian_logdet(const std::function<Vec(const Vec&)>& map,
                                 const Vec& z, double h) {
  if (h <= 0.0) throw ContractViolation("numerical_jacobian_logdet: h > 0");
  const int n = static_cast<int>(z.size());
  Mat jac(n, n);
  for (int j = 0; j < n; ++j) {
    Vec zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    jac.col(j) = (map(zp) - map(zm)) / (2.0 * h);
  }
  Eigen::PartialPivLU<Mat> lu(jac);
  // log|det| from the U diagonal keeps large n away from overflow
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = std::abs(lu.matrixLU()(i, i));
    if (d == 0.0) return -std::numeric_limits<double>::infinity();
    logdet += std::log(d);
  }
  return logdet;
}

}  // namespace ergo
