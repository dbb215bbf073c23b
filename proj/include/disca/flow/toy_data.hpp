#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "disca/ad/tensor.hpp"

namespace disca::flow {

enum class DistKind { kGaussian1d, kTwoMoons, kCheckerboard, kEightGaussians };

std::string to_string(DistKind k);
// Throws ContractViolation for an unknown name.
DistKind parse_dist_kind(const std::string& name);

/// Data marginal at t = 0.
///   gaussian1d      N(0, sigma_d^2), no classes
///   two_moons       interleaved half circles in [-1.5, 1.5] x [-1, 1], class = moon
///   checkerboard    the 8 dark cells of a 4x4 board on [-2, 2]^2, class = sign of x
///   eight_gaussians std 0.15 blobs on the radius-2 circle, class = blob
struct ToyDistribution {
  DistKind kind = DistKind::kCheckerboard;
  double sigma_d = 1.0;
  std::uint64_t seed = 0;

  std::size_t dim() const { return kind == DistKind::kGaussian1d ? 1 : 2; }
  std::size_t num_classes() const;

  friend bool operator==(const ToyDistribution&, const ToyDistribution&) = default;
};

struct LabeledSamples {
  ad::Tensor x;             // [n, dim]
  std::vector<int> labels;  // kNullClass when the distribution has no classes
};

// n i.i.d. draws; bit-identical for identical (dist, n, seed).
LabeledSamples sample_labeled(const ToyDistribution& dist, std::size_t n, std::uint64_t seed);
ad::Tensor sample_data(const ToyDistribution& dist, std::size_t n, std::uint64_t seed);

}  // namespace disca::flow
