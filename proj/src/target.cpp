#include "ergo/target.hpp"

#include <Eigen/LU>
#include <cmath>
#include <set>
#include <sstream>

namespace ergo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
constexpr double kLog2PiE = 2.8378770664093454836;  // log(2*pi*e)

void check_input(const TargetDensity& t, const Vec& z, const char* op) {
  if (z.size() != t.dim()) {
    std::ostringstream msg;
    msg << op << ": input has length " << z.size() << ", target '" << t.name()
        << "' has dim " << t.dim();
    throw ContractViolation(msg.str());
  }
  if (!z.allFinite()) {
    throw DomainError(std::string(op) + ": non-finite input for target '" +
                      t.name() + "'");
  }
}

// Strict parameter reader: every key must be consumed exactly once.
class ParamReader {
 public:
  ParamReader(const std::string& target, const TargetParams& params)
      : target_(target), params_(params) {}

  double scalar(const std::string& key, std::optional<double> fallback = {}) {
    auto it = params_.find(key);
    if (it == params_.end()) {
      if (fallback) return *fallback;
      fail("missing required parameter '" + key + "'");
    }
    consumed_.insert(key);
    if (it->second.size() != 1) {
      fail("parameter '" + key + "' must be a single value");
    }
    return it->second[0];
  }

  int integer(const std::string& key, std::optional<int> fallback = {}) {
    double raw = scalar(key, fallback ? std::optional<double>(*fallback)
                                      : std::nullopt);
    double rounded = std::round(raw);
    if (std::abs(raw - rounded) > 1e-9) {
      fail("parameter '" + key + "' must be an integer");
    }
    return static_cast<int>(rounded);
  }

  std::optional<Vec> vector(const std::string& key) {
    auto it = params_.find(key);
    if (it == params_.end()) return std::nullopt;
    consumed_.insert(key);
    return Eigen::Map<const Vec>(it->second.data(),
                                 static_cast<Eigen::Index>(it->second.size()));
  }

  void finish() const {
    for (const auto& [key, unused] : params_) {
      if (!consumed_.count(key)) {
        fail("unknown parameter '" + key + "'");
      }
    }
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw ContractViolation("target '" + target_ + "': " + why);
  }

 private:
  std::string target_;
  const TargetParams& params_;
  std::set<std::string> consumed_;
};

// Adaptive Simpson quadrature, used only to evaluate 1D reference integrals
// at registration time.
double simpson(const std::function<double(double)>& f, double a, double m,
               double b, double fa, double fm, double fb, double whole,
               double tol, int depth) {
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return simpson(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol) {
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(f, a, m, b, fa, fm, fb, whole, tol, 40);
}

double log_2cosh(double x) {
  // log(2*cosh(x)) without overflow
  double ax = std::abs(x);
  return ax + std::log1p(std::exp(-2.0 * ax));
}

TargetDensity make_std_normal(const TargetParams& params) {
  ParamReader reader("std_normal", params);
  int dim = reader.integer("dim", 2);
  reader.finish();
  if (dim < 1) reader.fail("'dim' must be >= 1");

  AnalyticStats stats;
  stats.mean = Vec::Zero(dim);
  stats.cov = Mat::Identity(dim, dim);
  stats.expected_logp = -0.5 * dim;  // E[-|z|^2/2] = -d/2
  stats.entropy = 0.5 * dim * kLog2PiE;
  stats.gaussian_form = true;

  return TargetDensity(
      "std_normal", dim, {{"dim", {double(dim)}}},
      [](const Vec& z) { return -0.5 * z.squaredNorm(); },
      [](const Vec& z) { return Vec(-z); },
      [](const Vec&, const Vec& v) { return Vec(-v); }, stats);
}

TargetDensity make_corr_gauss(const TargetParams& params) {
  ParamReader reader("corr_gauss", params);
  double rho = reader.scalar("rho", 0.9);
  reader.finish();
  if (!(rho > -1.0 && rho < 1.0)) reader.fail("'rho' must be in (-1, 1)");

  Mat cov(2, 2);
  cov << 1.0, rho, rho, 1.0;
  Mat prec = cov.inverse();

  AnalyticStats stats;
  stats.mean = Vec::Zero(2);
  stats.cov = cov;
  stats.expected_logp = -1.0;  // -tr(P Sigma)/2 = -d/2
  stats.entropy = kLog2PiE + 0.5 * std::log(1.0 - rho * rho);
  stats.gaussian_form = true;

  return TargetDensity(
      "corr_gauss", 2, {{"rho", {rho}}},
      [prec](const Vec& z) { return -0.5 * z.dot(prec * z); },
      [prec](const Vec& z) { return Vec(-prec * z); },
      [prec](const Vec&, const Vec& v) { return Vec(-prec * v); }, stats);
}

TargetDensity make_diag_gauss(const TargetParams& params) {
  ParamReader reader("diag_gauss", params);
  std::optional<Vec> mean_in = reader.vector("mean");
  std::optional<Vec> std_in = reader.vector("std");
  int dim = mean_in ? int(mean_in->size())
                    : (std_in ? int(std_in->size()) : reader.integer("dim", 2));
  reader.finish();
  if (dim < 1) reader.fail("'dim' must be >= 1");
  Vec mean = mean_in ? *mean_in : Vec::Zero(dim);
  Vec std = std_in ? *std_in : Vec::Ones(dim);
  if (mean.size() != std.size()) reader.fail("'mean'/'std' length mismatch");
  if ((std.array() <= 0.0).any()) reader.fail("'std' must be positive");

  Vec inv_var = std.array().square().inverse();

  AnalyticStats stats;
  stats.mean = mean;
  stats.cov = Mat(std.array().square().matrix().asDiagonal());
  stats.expected_logp = -0.5 * dim;
  stats.entropy = std.array().log().sum() + 0.5 * dim * kLog2PiE;
  stats.gaussian_form = true;

  TargetParams echo;
  echo["mean"] = std::vector<double>(mean.data(), mean.data() + dim);
  echo["std"] = std::vector<double>(std.data(), std.data() + dim);

  return TargetDensity(
      "diag_gauss", dim, echo,
      [mean, inv_var](const Vec& z) {
        return -0.5 * ((z - mean).array().square() * inv_var.array()).sum();
      },
      [mean, inv_var](const Vec& z) {
        return Vec(-((z - mean).array() * inv_var.array()));
      },
      [inv_var](const Vec&, const Vec& v) {
        return Vec(-(v.array() * inv_var.array()));
      },
      stats);
}

// Two equal-weight unit-covariance components at +/- mode.
// log pi*(z) = -(|z|^2 + c^2)/2 + log(2 cosh(mode . z)), c = |mode|.
TargetDensity make_gauss_mix2(const TargetParams& params) {
  ParamReader reader("gauss_mix2", params);
  int dim = reader.integer("dim", 2);
  std::optional<Vec> mode_in = reader.vector("mode");
  reader.finish();
  if (dim < 1) reader.fail("'dim' must be >= 1");
  Vec mode = mode_in ? *mode_in : Vec::Constant(dim, 2.0);
  if (mode.size() != dim) reader.fail("'mode' length must equal 'dim'");

  double c = mode.norm();

  AnalyticStats stats;
  stats.mean = Vec::Zero(dim);
  stats.cov = Mat::Identity(dim, dim) + mode * mode.transpose();
  // E[log pi*] reduces to a 1D integral along the mode axis:
  //   -(d + 2 c^2)/2 + Integral N(u; c, 1) log(2 cosh(c u)) du
  {
    auto integrand = [c](double u) {
      double pdf = std::exp(-0.5 * (u - c) * (u - c)) / std::sqrt(2.0 * M_PI);
      return pdf * log_2cosh(c * u);
    };
    double cross = integrate(integrand, c - 12.0, c + 12.0, 1e-13);
    stats.expected_logp = -0.5 * (dim + 2.0 * c * c) + cross;
  }

  TargetParams echo;
  echo["dim"] = {double(dim)};
  echo["mode"] = std::vector<double>(mode.data(), mode.data() + dim);

  auto logp = [mode, c](const Vec& z) {
    return -0.5 * (z.squaredNorm() + c * c) + log_2cosh(mode.dot(z));
  };
  auto grad = [mode](const Vec& z) {
    return Vec(-z + std::tanh(mode.dot(z)) * mode);
  };
  // H = -I + (1 - tanh^2(mode.z)) mode mode^T
  auto hvp = [mode](const Vec& z, const Vec& v) {
    double t = std::tanh(mode.dot(z));
    return Vec(-v + (1.0 - t * t) * mode.dot(v) * mode);
  };
  return TargetDensity("gauss_mix2", dim, echo, logp, grad, hvp, stats);
}

// Curved ridge: z1 ~ N(0, sigma1^2), z2 | z1 ~ N(b (z1^2 - sigma1^2), 1).
// log pi*(z) = -z1^2/(2 sigma1^2) - w^2/2 with w = z2 - b (z1^2 - sigma1^2).
TargetDensity make_banana(const TargetParams& params) {
  ParamReader reader("banana", params);
  double b = reader.scalar("b", 0.1);
  double sigma1 = reader.scalar("sigma1", 10.0);
  reader.finish();
  if (sigma1 <= 0.0) reader.fail("'sigma1' must be positive");

  double s1sq = sigma1 * sigma1;

  AnalyticStats stats;
  stats.mean = Vec::Zero(2);
  Mat cov = Mat::Zero(2, 2);
  cov(0, 0) = s1sq;
  cov(1, 1) = 2.0 * b * b * s1sq * s1sq + 1.0;  // Var(b z1^2) + 1
  stats.cov = cov;
  stats.expected_logp = -1.0;  // two standardized quadratic forms, -1/2 each
  stats.entropy = kLog2PiE + std::log(sigma1);

  auto logp = [b, s1sq](const Vec& z) {
    double w = z[1] - b * (z[0] * z[0] - s1sq);
    return -0.5 * z[0] * z[0] / s1sq - 0.5 * w * w;
  };
  auto grad = [b, s1sq](const Vec& z) {
    double w = z[1] - b * (z[0] * z[0] - s1sq);
    Vec g(2);
    g[0] = -z[0] / s1sq + 2.0 * b * z[0] * w;
    g[1] = -w;
    return g;
  };
  auto hvp = [b, s1sq](const Vec& z, const Vec& v) {
    double w = z[1] - b * (z[0] * z[0] - s1sq);
    double h00 = -1.0 / s1sq + 2.0 * b * w - 4.0 * b * b * z[0] * z[0];
    double h01 = 2.0 * b * z[0];
    Vec out(2);
    out[0] = h00 * v[0] + h01 * v[1];
    out[1] = h01 * v[0] - v[1];
    return out;
  };
  return TargetDensity("banana", 2, {{"b", {b}}, {"sigma1", {sigma1}}}, logp,
                       grad, hvp, stats);
}

// v = z[0] ~ N(0, sigma_v^2), x = z[1:] | v ~ N(0, e^v I). The v-dependent
// part of the conditional normalizer is kept so the v-marginal is correct:
// log pi*(z) = -v^2/(2 sigma_v^2) - e^{-v} |x|^2 / 2 - (d-1) v / 2.
TargetDensity make_funnel(const TargetParams& params) {
  ParamReader reader("funnel", params);
  double sigma_v = reader.scalar("sigma_v", 3.0);
  int dim = reader.integer("dim", 2);
  reader.finish();
  if (sigma_v <= 0.0) reader.fail("'sigma_v' must be positive");
  if (dim < 2) reader.fail("'dim' must be >= 2");

  double sv2 = sigma_v * sigma_v;
  int dx = dim - 1;

  AnalyticStats stats;
  stats.mean = Vec::Zero(dim);
  Vec var(dim);
  var[0] = sv2;
  var.tail(dx).setConstant(std::exp(0.5 * sv2));  // E[e^v]
  stats.cov = Mat(var.asDiagonal());
  stats.expected_logp = -0.5 * dim;
  stats.entropy = 0.5 * std::log(2.0 * M_PI * M_E * sv2) +
                  0.5 * dx * kLog2PiE;  // E[v] = 0 cancels the scale term

  auto logp = [sv2, dx](const Vec& z) {
    double v = z[0];
    double xsq = z.tail(dx).squaredNorm();
    return -0.5 * v * v / sv2 - 0.5 * std::exp(-v) * xsq - 0.5 * dx * v;
  };
  auto grad = [sv2, dx](const Vec& z) {
    double v = z[0];
    double ev = std::exp(-v);
    Vec g(z.size());
    g[0] = -v / sv2 + 0.5 * ev * z.tail(dx).squaredNorm() - 0.5 * dx;
    g.tail(dx) = -ev * z.tail(dx);
    return g;
  };
  auto hvp = [sv2, dx](const Vec& z, const Vec& u) {
    double v = z[0];
    double ev = std::exp(-v);
    double xsq = z.tail(dx).squaredNorm();
    Vec out(z.size());
    out[0] = (-1.0 / sv2 - 0.5 * ev * xsq) * u[0] + ev * z.tail(dx).dot(u.tail(dx));
    out.tail(dx) = ev * z.tail(dx) * u[0] - ev * u.tail(dx);
    return out;
  };
  return TargetDensity("funnel", dim,
                       {{"sigma_v", {sigma_v}}, {"dim", {double(dim)}}}, logp,
                       grad, hvp, stats);
}

}  // namespace

TargetDensity::TargetDensity(std::string name, int dim, TargetParams params,
                             LogpFn logp, GradFn grad, HvpFn hvp,
                             std::optional<AnalyticStats> stats)
    : name_(std::move(name)),
      dim_(dim),
      params_(std::move(params)),
      logp_(std::move(logp)),
      grad_(std::move(grad)),
      hvp_(std::move(hvp)),
      stats_(std::move(stats)) {
  if (dim_ < 1) throw ContractViolation("TargetDensity: dim must be >= 1");
  if (!logp_ || !grad_) {
    throw ContractViolation("TargetDensity: logp and grad are required");
  }
}

double logp_unnorm(const TargetDensity& target, const Vec& z) {
  check_input(target, z, "logp_unnorm");
  return target.logp_raw(z);
}

Vec grad_logp(const TargetDensity& target, const Vec& z) {
  check_input(target, z, "grad_logp");
  return target.grad_raw(z);
}

HvpResult hvp_logp(const TargetDensity& target, const Vec& z, const Vec& v) {
  check_input(target, z, "hvp_logp");
  if (v.size() != target.dim()) {
    throw ContractViolation("hvp_logp: direction length mismatch");
  }
  if (!v.allFinite()) throw DomainError("hvp_logp: non-finite direction");
  if (target.has_analytic_hvp()) {
    return {target.hvp_raw(z, v), false};
  }
  // Central difference of grad_logp along v; step from the cube root of the
  // machine epsilon scaled by the state magnitude.
  double h = std::cbrt(std::numeric_limits<double>::epsilon()) *
             (1.0 + z.lpNorm<Eigen::Infinity>());
  Vec plus = target.grad_raw(z + h * v);
  Vec minus = target.grad_raw(z - h * v);
  return {Vec((plus - minus) / (2.0 * h)), true};
}

std::optional<AnalyticStats> analytic_stats(const TargetDensity& target) {
  return target.stats();
}

TargetDensity make_target(const std::string& name, const TargetParams& params) {
  if (name == "std_normal") return make_std_normal(params);
  if (name == "corr_gauss") return make_corr_gauss(params);
  if (name == "diag_gauss") return make_diag_gauss(params);
  if (name == "gauss_mix2") return make_gauss_mix2(params);
  if (name == "banana") return make_banana(params);
  if (name == "funnel") return make_funnel(params);
  throw ContractViolation("unknown target name '" + name + "'");
}

std::vector<std::string> target_battery() {
  return {"std_normal", "corr_gauss", "diag_gauss",
          "gauss_mix2", "banana",     "funnel"};
}

}  // namespace ergo
