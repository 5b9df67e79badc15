#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ergo/common.hpp"

namespace ergo {

struct CheckOptions {
  int reversibility_configs = 200;
  int volume_configs = 50;
  int mh_samples = 10000;
  std::uint64_t seed = 42;
  // Self-test hook: negates the adjoint before the oracle comparison, which
  // must make the gradient check fail and name itself.
  bool flip_adjoint_sign = false;
};

struct CheckLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckLine> lines;
  bool all_passed = false;
  double seconds = 0.0;
};

/// Fast invariant suite: leapfrog reversibility, joint-map volume
/// preservation, one seeded finite-difference gradient oracle, and MH
/// stationarity at reduced n. Fixed seeds; repeated invocations print
/// identical tables.
CheckReport run_check(const CheckOptions& options = {});

}  // namespace ergo
