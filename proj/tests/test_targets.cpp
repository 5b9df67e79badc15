#include <doctest.h>

#include <Eigen/Cholesky>
#include <cmath>
#include <random>

#include "ergo/target.hpp"
#include "testutil.hpp"

using ergo::make_target;
using ergo::TargetDensity;
using ergo::Vec;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

std::vector<TargetDensity> battery_instances() {
  std::vector<TargetDensity> out;
  out.push_back(make_target("std_normal", {{"dim", {1.0}}}));
  out.push_back(make_target("std_normal", {{"dim", {2.0}}}));
  out.push_back(make_target("std_normal", {{"dim", {10.0}}}));
  out.push_back(make_target("corr_gauss", {{"rho", {0.9}}}));
  out.push_back(make_target("diag_gauss",
                            {{"mean", {1.0, -2.0}}, {"std", {0.5, 3.0}}}));
  out.push_back(make_target("gauss_mix2", {{"dim", {2.0}}}));
  out.push_back(make_target("banana", {}));
  out.push_back(make_target("funnel", {}));
  return out;
}

// Exact samplers for the non-Gaussian battery members; these are the
// independent oracles for the registered reference statistics.
Vec sample_banana(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  double z1 = 10.0 * normal(rng);
  double z2 = 0.1 * (z1 * z1 - 100.0) + normal(rng);
  return v2(z1, z2);
}

Vec sample_funnel(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  double v = 3.0 * normal(rng);
  double x = std::exp(0.5 * v) * normal(rng);
  return v2(v, x);
}

Vec sample_mix2(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::bernoulli_distribution flip(0.5);
  Vec z = v2(normal(rng), normal(rng));
  double sign = flip(rng) ? 1.0 : -1.0;
  z[0] += sign * 2.0;
  z[1] += sign * 2.0;
  return z;
}

}  // namespace

TEST_CASE("logp values at pinned points") {
  auto std2 = make_target("std_normal", {{"dim", {2.0}}});
  CHECK(ergo::logp_unnorm(std2, v2(0, 0)) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(ergo::logp_unnorm(std2, v2(1, 1)) == doctest::Approx(-1.0).epsilon(1e-14));

  // banana closed form at the origin: -(0 - 0.1*(0 - 100))^2 / 2 = -50
  auto banana = make_target("banana", {});
  CHECK(ergo::logp_unnorm(banana, v2(0, 0)) == doctest::Approx(-50.0).epsilon(1e-14));
}

TEST_CASE("gradients at pinned points") {
  auto std2 = make_target("std_normal", {{"dim", {2.0}}});
  Vec g = ergo::grad_logp(std2, v2(1, -2));
  CHECK(g[0] == doctest::Approx(-1.0));
  CHECK(g[1] == doctest::Approx(2.0));

  // correlated Gaussian: grad = -P z with P the precision matrix
  auto corr = make_target("corr_gauss", {{"rho", {0.9}}});
  ergo::Mat prec(2, 2);
  prec << 1.0, -0.9, -0.9, 1.0;
  prec /= 1.0 - 0.81;
  Vec z = v2(0.3, -1.2);
  Vec expect = -prec * z;
  Vec got = ergo::grad_logp(corr, z);
  CHECK((got - expect).norm() < 1e-12);
}

TEST_CASE("gradient matches finite differences on the whole battery") {
  auto rng = ergo::substream_rng(11, 0, 0);
  for (const auto& target : battery_instances()) {
    for (int trial = 0; trial < 100; ++trial) {
      Vec z(target.dim());
      ergo::fill_standard_normal(rng, z);
      Vec analytic = ergo::grad_logp(target, z);
      Vec fd = testutil::fd_grad(
          [&](const Vec& x) { return ergo::logp_unnorm(target, x); }, z, 1e-6);
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        CHECK(ergo::rel_err(analytic[i], fd[i]) < 1e-5);
      }
    }
  }
}

TEST_CASE("hvp basics") {
  auto std2 = make_target("std_normal", {{"dim", {2.0}}});
  auto rng = ergo::substream_rng(12, 0, 0);
  Vec z(2);
  ergo::fill_standard_normal(rng, z);

  auto res = ergo::hvp_logp(std2, z, v2(1, 0));
  CHECK_FALSE(res.approximate);
  CHECK(res.value[0] == doctest::Approx(-1.0));
  CHECK(res.value[1] == doctest::Approx(0.0));

  auto zero = ergo::hvp_logp(std2, z, v2(0, 0));
  CHECK(zero.value.norm() == doctest::Approx(0.0));
}

TEST_CASE("analytic hvp matches finite differences of the gradient") {
  auto rng = ergo::substream_rng(13, 0, 0);
  for (const auto& target : battery_instances()) {
    REQUIRE(target.has_analytic_hvp());
    for (int trial = 0; trial < 100; ++trial) {
      Vec z(target.dim()), v(target.dim());
      ergo::fill_standard_normal(rng, z);
      ergo::fill_standard_normal(rng, v);
      Vec analytic = ergo::hvp_logp(target, z, v).value;
      Vec fd = testutil::fd_directional(
          [&](const Vec& x) { return ergo::grad_logp(target, x); }, z, v, 1e-6);
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        CHECK(ergo::rel_err(analytic[i], fd[i]) < 1e-4);
      }
    }
  }
}

TEST_CASE("hvp finite-difference fallback is flagged and accurate") {
  // quadratic target registered without an analytic hvp
  TargetDensity quad(
      "quad", 2, {}, [](const Vec& z) { return -z.squaredNorm(); },
      [](const Vec& z) { return Vec(-2.0 * z); });
  CHECK_FALSE(quad.has_analytic_hvp());
  Vec z = v2(0.4, -0.7), v = v2(1.0, 2.0);
  auto res = ergo::hvp_logp(quad, z, v);
  CHECK(res.approximate);
  CHECK((res.value - Vec(-2.0 * v)).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("analytic stats: Gaussian closed forms") {
  auto std2 = make_target("std_normal", {{"dim", {2.0}}});
  auto stats = ergo::analytic_stats(std2);
  REQUIRE(stats.has_value());
  CHECK(stats->mean->norm() == doctest::Approx(0.0));
  CHECK((*stats->cov - ergo::Mat::Identity(2, 2)).norm() == doctest::Approx(0.0));
  CHECK(*stats->expected_logp == doctest::Approx(-1.0));

  // scale invariance of the standardized quadratic form: N(0, 4I) under its
  // own unnormalized density still has E[log pi*] = -d/2
  auto wide = make_target("diag_gauss", {{"mean", {0.0, 0.0}}, {"std", {2.0, 2.0}}});
  CHECK(*wide.stats()->expected_logp == doctest::Approx(-1.0));
}

TEST_CASE("registered stats agree with exact-sampler Monte Carlo") {
  // mean, covariance and E[log pi*] of every non-trivial target against a
  // large sample from its exact generative form; 4 standard errors
  struct Case {
    TargetDensity target;
    std::function<Vec(std::mt19937_64&)> draw;
  };
  std::vector<Case> cases;
  cases.push_back({make_target("banana", {}), sample_banana});
  cases.push_back({make_target("funnel", {}), sample_funnel});
  cases.push_back({make_target("gauss_mix2", {{"dim", {2.0}}}), sample_mix2});

  const int n = 1000000;
  for (auto& c : cases) {
    const auto& stats = *c.target.stats();
    auto rng = ergo::substream_rng(17, 0, 0);

    // accumulate each estimated quantity together with its own second
    // moment, so every bound below is a proper standard error (the funnel's
    // fourth moments are heavy: fixed scale factors would lie)
    Vec mean_sum = Vec::Zero(2);
    ergo::Mat prod_sum = ergo::Mat::Zero(2, 2);
    ergo::Mat prod_sq_sum = ergo::Mat::Zero(2, 2);
    double lp_sum = 0.0, lp_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      Vec z = c.draw(rng);
      mean_sum += z;
      Vec centered = z - *stats.mean;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          double w = centered[a] * centered[b];
          prod_sum(a, b) += w;
          prod_sq_sum(a, b) += w * w;
        }
      }
      double lp = ergo::logp_unnorm(c.target, z);
      lp_sum += lp;
      lp_sq += lp * lp;
    }
    double lp_mean = lp_sum / n;
    double lp_se = std::sqrt((lp_sq / n - lp_mean * lp_mean) / n);

    INFO("target ", c.target.name());
    CHECK(std::abs(*stats.expected_logp - lp_mean) < 4.0 * lp_se);
    for (int a = 0; a < 2; ++a) {
      double mean_se = std::sqrt((*stats.cov)(a, a) / n);
      CHECK(std::abs((*stats.mean)[a] - mean_sum[a] / n) < 5.0 * mean_se);
      for (int b = 0; b < 2; ++b) {
        double est = prod_sum(a, b) / n;
        double var = prod_sq_sum(a, b) / n - est * est;
        double se = std::sqrt(std::max(var, 0.0) / n);
        CHECK(std::abs((*stats.cov)(a, b) - est) < 5.0 * se + 1e-9);
      }
    }
  }
}

TEST_CASE("expected_logp of Gaussians verified by Monte Carlo") {
  auto rng = ergo::substream_rng(19, 0, 0);
  std::vector<TargetDensity> gaussians;
  gaussians.push_back(make_target("std_normal", {{"dim", {2.0}}}));
  gaussians.push_back(make_target("corr_gauss", {{"rho", {0.9}}}));
  gaussians.push_back(
      make_target("diag_gauss", {{"mean", {1.0, -2.0}}, {"std", {0.5, 3.0}}}));

  const int n = 1000000;
  for (const auto& target : gaussians) {
    const auto& stats = *target.stats();
    Eigen::LLT<ergo::Mat> llt(*stats.cov);
    ergo::Mat chol = llt.matrixL();
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      Vec u(target.dim());
      ergo::fill_standard_normal(rng, u);
      Vec z = *stats.mean + chol * u;
      double lp = target.logp_raw(z);
      sum += lp;
      sq += lp * lp;
    }
    double mean = sum / n;
    double se = std::sqrt((sq / n - mean * mean) / n);
    INFO("target ", target.name());
    CHECK(std::abs(*stats.expected_logp - mean) < 3.0 * se);
  }
}

TEST_CASE("input validation") {
  auto std2 = make_target("std_normal", {{"dim", {2.0}}});
  Vec wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(ergo::logp_unnorm(std2, wrong), ergo::ContractViolation);

  Vec bad = v2(std::numeric_limits<double>::quiet_NaN(), 0.0);
  CHECK_THROWS_AS(ergo::logp_unnorm(std2, bad), ergo::DomainError);
  CHECK_THROWS_AS(ergo::grad_logp(std2, bad), ergo::DomainError);

  CHECK_THROWS_AS(make_target("no_such_target", {}), ergo::ContractViolation);
  CHECK_THROWS_AS(make_target("std_normal", {{"unknown", {1.0}}}),
                  ergo::ContractViolation);
  CHECK_THROWS_AS(make_target("corr_gauss", {{"rho", {1.5}}}),
                  ergo::ContractViolation);
}

TEST_CASE("battery names are constructible with defaults") {
  for (const auto& name : ergo::target_battery()) {
    auto target = make_target(name, {});
    CHECK(target.dim() >= 1);
    Vec z = Vec::Zero(target.dim());
    CHECK(std::isfinite(ergo::logp_unnorm(target, z)));
  }
}
