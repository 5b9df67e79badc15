#include <doctest.h>

#include <cmath>

#include "ergo/baselines.hpp"
#include "ergo/diagnostics.hpp"
#include "testutil.hpp"

using ergo::HmcConfig;
using ergo::make_target;
using ergo::TrainConfig;
using ergo::Vec;

TEST_CASE("hmc chain is stationary on the 1D standard normal") {
  auto target = make_target("std_normal", {{"dim", {1.0}}});
  HmcConfig cfg;
  cfg.step = 0.8;
  cfg.leaps = 10;
  cfg.burn_in = 1000;
  cfg.seed = 71;
  auto chain = ergo::hmc_sample(target, 30000, cfg);
  CHECK(chain.acceptance_rate > 0.8);
  CHECK_FALSE(chain.low_acceptance_warning);

  std::vector<double> values(chain.states.data(),
                             chain.states.data() + chain.states.rows());
  auto ks = ergo::ks_test_1d(std::move(values), [](double x) {
    return ergo::standard_normal_cdf(x);
  });
  CHECK(ks.pass_at_01);
}

TEST_CASE("hmc identity limit keeps the chain glued to itself") {
  auto target = make_target("std_normal", {{"dim", {1.0}}});
  HmcConfig cfg;
  cfg.step = std::exp(-30.0);
  cfg.leaps = 1;
  cfg.burn_in = 10;
  cfg.seed = 72;
  auto chain = ergo::hmc_sample(target, 4000, cfg);
  CHECK(chain.acceptance_rate == doctest::Approx(1.0));
  double rho = ergo::lag_autocorr(chain.states.col(0), 1);
  CHECK(rho > 0.99);
}

TEST_CASE("hmc determinism and low-acceptance warning") {
  auto target = make_target("corr_gauss", {});
  HmcConfig cfg;
  cfg.step = 0.3;
  cfg.leaps = 5;
  cfg.burn_in = 100;
  cfg.seed = 73;
  auto a = ergo::hmc_sample(target, 500, cfg);
  auto b = ergo::hmc_sample(target, 500, cfg);
  CHECK(a.states == b.states);
  CHECK(a.acceptance_rate == b.acceptance_rate);

  // absurd step: nearly everything rejects
  cfg.step = 40.0;
  auto bad = ergo::hmc_sample(target, 300, cfg);
  CHECK(bad.low_acceptance_warning);
}

TEST_CASE("esjd tuning picks a grid member and reports the table") {
  auto target = make_target("corr_gauss", {});
  std::vector<double> grid{0.05, 0.15, 0.3, 0.5};
  auto tuning = ergo::tune_hmc_step_esjd(target, grid, 2, 1500, 7);
  CHECK(tuning.grid.size() == grid.size());
  bool in_grid = false;
  for (double g : grid) in_grid |= (g == tuning.best_step);
  CHECK(in_grid);
  // tiny steps cannot win the jump-distance criterion
  CHECK(tuning.best_step > 0.05);
}

TEST_CASE("mean-field VI recovers a diagonal Gaussian target") {
  auto target = make_target("diag_gauss",
                            {{"mean", {1.0, -0.5}}, {"std", {0.8, 2.0}}});
  TrainConfig cfg;
  cfg.iterations = 400;
  cfg.batch_size = 256;
  cfg.seed = 77;
  cfg.lr_decay = "rsqrt";
  auto fit = ergo::meanfield_vi_fit(target, cfg);

  CHECK(std::abs(fit.q.mean[0] - 1.0) < 0.05);
  CHECK(std::abs(fit.q.mean[1] + 0.5) < 0.05);
  CHECK(std::abs(fit.q.std()[0] - 0.8) < 0.05 * 0.8);
  CHECK(std::abs(fit.q.std()[1] - 2.0) < 0.05 * 2.0);

  // elbo trace trends upward
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 10; ++i) {
    early += fit.trace[i].elbo;
    late += fit.trace[fit.trace.size() - 10 + i].elbo;
  }
  CHECK(late >= early);

  // 20-iteration moving average never drops by more than 3 SE
  double max_se = 0.0;
  for (const auto& rec : fit.trace) max_se = std::max(max_se, rec.std_error);
  auto moving = [&](size_t begin) {
    double sum = 0.0;
    for (size_t i = begin; i < begin + 20; ++i) sum += fit.trace[i].elbo;
    return sum / 20.0;
  };
  for (size_t begin = 0; begin + 21 <= fit.trace.size(); ++begin) {
    CHECK(moving(begin + 1) - moving(begin) > -3.0 * max_se);
  }
}

TEST_CASE("mean-field VI underestimates correlated marginals") {
  // the mean-field optimum for a Gaussian matches conditional, not marginal,
  // standard deviations: sqrt(0.19) ~ 0.436 versus 1.0 here
  auto target = make_target("corr_gauss", {{"rho", {0.9}}});
  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.batch_size = 256;
  cfg.seed = 78;
  cfg.lr_decay = "rsqrt";
  auto fit = ergo::meanfield_vi_fit(target, cfg);

  double conditional_std = std::sqrt(1.0 - 0.9 * 0.9);
  for (int j = 0; j < 2; ++j) {
    CHECK(fit.q.std()[j] < 0.9);  // at least 10% below the true marginal 1.0
    CHECK(fit.q.std()[j] == doctest::Approx(conditional_std).epsilon(0.15));
  }
}

TEST_CASE("VI with zero iterations returns the initial q") {
  auto target = make_target("std_normal", {{"dim", {2.0}}});
  TrainConfig cfg;
  cfg.iterations = 0;
  auto fit = ergo::meanfield_vi_fit(target, cfg);
  CHECK(fit.q.mean.norm() == 0.0);
  CHECK(fit.q.log_std.norm() == 0.0);
  CHECK(fit.trace.empty());
}

TEST_CASE("elbo_estimate pinned values") {
  auto target = make_target("std_normal", {{"dim", {2.0}}});

  // q equal to the normalized target: ELBO = log Z = (d/2) log(2 pi)
  ergo::MeanFieldQ q{Vec::Zero(2), Vec::Zero(2)};
  auto at_target = ergo::elbo_estimate(q, target, 200000, 81);
  CHECK(std::abs(at_target.value - std::log(2.0 * M_PI)) <
        3.0 * at_target.std_error);

  // over-dispersed q scores strictly lower
  ergo::MeanFieldQ wide{Vec::Zero(2), Vec::Constant(2, std::log(2.0))};
  auto wide_est = ergo::elbo_estimate(wide, target, 200000, 82);
  CHECK(wide_est.value + 3.0 * wide_est.std_error < at_target.value);

  auto tiny = ergo::elbo_estimate(q, target, 2, 83);
  CHECK(std::isfinite(tiny.std_error));
  CHECK(tiny.std_error > 0.0);
}
