#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace ergo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Caller broke a documented precondition (shape mismatch, bad option, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input is syntactically valid but outside the numeric domain (NaN/Inf, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A trajectory produced a non-finite state. Carries the leap index at which
/// the blow-up was first observed.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int step_index)
      : std::runtime_error(what), step_index_(step_index) {}
  int step_index() const { return step_index_; }

 private:
  int step_index_;
};

/// An estimator could not produce a value (e.g. every row diverged).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A single optimisation step had to be rejected (non-finite gradient,
/// too many divergent rows in the batch).
class StepRejectedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The training loop gave up (repeated step rejections).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Seed derivation.
//
// All randomness in the library flows through explicit 64-bit seeds. Derived
// streams use the splitmix64 finalizer over a combination of (seed, stream,
// index), so sample i of stream s is reproducible independently of how many
// other samples are drawn. This is the documented splitting rule referenced
// by the noise and training contracts.
// ---------------------------------------------------------------------------

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 0x632be59bd9b4e019ULL);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// Engine for substream `stream`, element `index` of a master seed.
inline std::mt19937_64 substream_rng(std::uint64_t seed, std::uint64_t stream,
                                     std::uint64_t index) {
  return std::mt19937_64(mix64(mix64(seed, stream), index));
}

/// Fills `out` (a vector or single-row/column block) with standard-normal
/// draws. A fresh distribution object is used so no generator-internal cache
/// leaks across calls. Linear coefficient access keeps non-contiguous blocks
/// correct.
template <typename Derived>
void fill_standard_normal(std::mt19937_64& rng,
                          Eigen::DenseBase<Derived>& out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out.derived().coeffRef(i) = normal(rng);
  }
}

inline double standard_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

/// Relative error with a unit floor, the convention used by every
/// finite-difference check in the test suites.
inline double rel_err(double got, double want) {
  return std::abs(got - want) / (1.0 + std::max(std::abs(got), std::abs(want)));
}

}  // namespace ergo
