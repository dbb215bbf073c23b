#pragma once

#include <optional>
#include <string>
#include <vector>

#include "disca/bench/config.hpp"

namespace disca::bench {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick self-checks of the library's invariants. With `run_dir` set, the
/// checkpoints found there are also checked: lineage chain, the t = r target
/// identity and all-FULL caching equivalence on the trained mean-velocity model.
std::vector<CheckResult> verify_invariants(const ExperimentConfig& cfg, const std::optional<std::string>& run_dir);

}  // namespace disca::bench
