#include "ergo/check.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "ergo/dein.hpp"
#include "ergo/diagnostics.hpp"
#include "ergo/loss.hpp"
#include "ergo/target.hpp"
#include "ergo/transforms.hpp"

namespace ergo {

namespace {

std::vector<TargetDensity> smooth_battery() {
  std::vector<TargetDensity> targets;
  targets.push_back(make_target("std_normal", {{"dim", {2.0}}}));
  targets.push_back(make_target("std_normal", {{"dim", {10.0}}}));
  targets.push_back(make_target("corr_gauss", {{"rho", {0.9}}}));
  targets.push_back(make_target("diag_gauss", {{"mean", {1.0, -1.0}},
                                               {"std", {0.5, 3.0}}}));
  targets.push_back(make_target("gauss_mix2", {{"dim", {2.0}}}));
  targets.push_back(make_target("banana", {}));
  targets.push_back(make_target("funnel", {}));
  return targets;
}

CheckLine check_reversibility(int n_configs, std::uint64_t seed) {
  auto targets = smooth_battery();
  double worst = 0.0;
  for (int c = 0; c < n_configs; ++c) {
    auto rng = substream_rng(seed, 0x72657631, static_cast<std::uint64_t>(c));
    const TargetDensity& target = targets[c % targets.size()];
    const int dim = target.dim();

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double eps = 0.01 * std::pow(0.5 / 0.01, unif(rng));  // log-uniform
    int leaps = 1 + static_cast<int>(unif(rng) * 20) % 20;
    LeapfrogLayer layer = LeapfrogLayer::uniform(dim, eps, 1.0, leaps);

    Vec z(dim), r(dim);
    fill_standard_normal(rng, z);
    fill_standard_normal(rng, r);

    auto [z1, r1] = leapfrog_endpoint(z, r, layer, target);
    auto [z2, r2] = leapfrog_endpoint(z1, Vec(-r1), layer, target);
    double err = std::max((z2 - z).lpNorm<Eigen::Infinity>(),
                          (Vec(-r2) - r).lpNorm<Eigen::Infinity>());
    worst = std::max(worst, err);
  }
  std::ostringstream detail;
  detail << "max flip-run-flip error " << worst << " over " << n_configs
         << " configs (tol 1e-10)";
  return {"leapfrog reversibility", worst < 1e-10, detail.str()};
}

CheckLine check_volume(int n_configs, std::uint64_t seed) {
  auto targets = smooth_battery();
  double worst = 0.0;
  for (int c = 0; c < n_configs; ++c) {
    auto rng = substream_rng(seed, 0x766f6c31, static_cast<std::uint64_t>(c));
    const TargetDensity& target = targets[c % targets.size()];
    const int dim = target.dim();
    if (dim > 2) continue;  // FD Jacobian cost grows fast with dim

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double eps = 0.05 + 0.25 * unif(rng);
    int leaps = 1 + static_cast<int>(unif(rng) * 8) % 8;
    LeapfrogLayer layer = LeapfrogLayer::uniform(dim, eps, 1.0, leaps);

    Vec state(2 * dim);
    fill_standard_normal(rng, state);

    auto joint_map = [&](const Vec& s) {
      auto [z_out, r_out] =
          leapfrog_endpoint(s.head(dim), s.tail(dim), layer, target);
      Vec out(2 * dim);
      out << z_out, r_out;
      return out;
    };
    double logdet = numerical_jacobian_logdet(joint_map, state, 2e-5);
    worst = std::max(worst, std::abs(logdet));
  }
  std::ostringstream detail;
  detail << "max |log det| " << worst << " over " << n_configs
         << " configs (tol 1e-6)";
  return {"leapfrog volume preservation", worst < 1e-6, detail.str()};
}

CheckLine check_gradient_oracle(std::uint64_t seed, bool flip_sign) {
  TargetDensity target = make_target("corr_gauss", {{"rho", {0.9}}});
  ModelSpec spec;
  spec.depth = 2;
  spec.leaps = 3;
  spec.init_step = 0.15;
  spec.trainable_init = true;
  DeinModel model = build_model(spec, target);

  NoiseBatch noise = sample_noise(model, 128, mix64(seed, 0x67726164));
  GradEstimate grad =
      ergodic_loss_grad(model, target, noise, LossMode::kObjective);

  ParamMap params = trainable_params(model);
  const double h = 1e-5;
  double worst = 0.0;
  for (auto& [name, value] : params) {
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      auto eval = [&](double delta) {
        ParamMap perturbed = params;
        perturbed[name][i] += delta;
        DeinModel m = model;
        set_trainable_params(m, perturbed);
        return ergodic_loss(m, target, noise).objective.value;
      };
      double fd = (eval(h) - eval(-h)) / (2.0 * h);
      double ad = grad.by_name.at(name)[i];
      if (flip_sign) ad = -ad;
      worst = std::max(worst, rel_err(ad, fd));
    }
  }
  std::ostringstream detail;
  detail << "max rel err vs frozen-noise FD " << worst << " (tol 1e-4)";
  return {"reparameterized gradient vs finite differences", worst < 1e-4,
          detail.str()};
}

CheckLine check_mh_stationarity(int n, std::uint64_t seed) {
  TargetDensity target = make_target("std_normal", {{"dim", {1.0}}});
  auto rng = substream_rng(seed, 0x6d683031, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double prop_scale = 0.5;
  auto sym_logq = [](const Vec&, const Vec&) { return 0.0; };

  std::vector<double> after(n);
  for (int i = 0; i < n; ++i) {
    Vec z(1), r(1);
    z[0] = normal(rng);  // exact draw from the target
    r[0] = z[0] + prop_scale * normal(rng);
    double p = mh_accept_prob(z, r, target, sym_logq);
    MhState next = mh_transform({z, r, unif(rng)}, p);
    after[i] = next.z[0];
  }
  KsResult ks = ks_test_1d(std::move(after), [](double x) {
    return standard_normal_cdf(x);
  });
  std::ostringstream detail;
  detail << "KS stat " << ks.stat << " at n=" << n << " (crit "
         << 1.628 / std::sqrt(double(n)) << ")";
  return {"MH transform stationarity", ks.pass_at_01, detail.str()};
}

}  // namespace

CheckReport run_check(const CheckOptions& options) {
  auto start = std::chrono::steady_clock::now();
  CheckReport report;
  report.lines.push_back(
      check_reversibility(options.reversibility_configs, options.seed));
  report.lines.push_back(check_volume(options.volume_configs, options.seed));
  report.lines.push_back(
      check_gradient_oracle(options.seed, options.flip_adjoint_sign));
  report.lines.push_back(check_mh_stationarity(options.mh_samples, options.seed));

  report.all_passed = true;
  for (const CheckLine& line : report.lines) report.all_passed &= line.passed;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

}  // namespace ergo
