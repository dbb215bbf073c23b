#pragma once

#include <cstddef>
#include <vector>

#include "disca/ad/tensor.hpp"

namespace disca::bench {

struct SinkhornOptions {
  // Final entropic regularization, relative to the mean pairwise squared distance.
  double epsilon_rel = 3e-3;
  // Stop once the row marginals are within this L1 distance of uniform.
  double tolerance = 1e-6;
  std::size_t max_iters = 5000;
};

// Above this many points (d = 2) the exact assignment gives way to Sinkhorn.
inline constexpr std::size_t kExactAssignmentLimit = 4096;

/// 2-Wasserstein distance between two equal-size empirical sets, [n, d] with
/// d in {1, 2}: sqrt(min over couplings of the mean squared displacement).
/// d = 1 pairs sorted values; d = 2 solves the assignment problem exactly for
/// n <= kExactAssignmentLimit and uses log-domain Sinkhorn with
/// epsilon-scaling above, reporting the transport cost of the entropic plan.
double w2_distance(const ad::Tensor& a, const ad::Tensor& b, const SinkhornOptions& opt = {});

// Exact minimum-cost perfect matching for a square cost matrix (row-major
// n x n); returns the column assigned to each row.
std::vector<std::size_t> min_cost_assignment(const std::vector<double>& cost, std::size_t n);

// Entropic transport cost between uniform measures on the rows of a and b.
double sinkhorn_w2(const ad::Tensor& a, const ad::Tensor& b, const SinkhornOptions& opt = {});

/// V-statistic energy distance 2 E|A - B| - E|A - A'| - E|B - B'|.
/// Requires at least two points in each set.
double energy_distance(const ad::Tensor& a, const ad::Tensor& b);

}  // namespace disca::bench
