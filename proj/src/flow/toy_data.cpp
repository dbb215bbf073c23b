#include "disca/flow/toy_data.hpp"

#include <cmath>
#include <numbers>

#include "disca/errors.hpp"
#include "disca/nets/condition.hpp"
#include "disca/rng.hpp"

namespace disca::flow {

std::string to_string(DistKind k) {
  switch (k) {
    case DistKind::kGaussian1d:
      return "gaussian1d";
    case DistKind::kTwoMoons:
      return "two_moons";
    case DistKind::kCheckerboard:
      return "checkerboard";
    case DistKind::kEightGaussians:
      return "eight_gaussians";
  }
  return "?";
}

DistKind parse_dist_kind(const std::string& name) {
  for (DistKind k : {DistKind::kGaussian1d, DistKind::kTwoMoons, DistKind::kCheckerboard,
                     DistKind::kEightGaussians})
    if (to_string(k) == name) return k;
  throw ContractViolation("unknown distribution kind '" + name + "'");
}

std::size_t ToyDistribution::num_classes() const {
  switch (kind) {
    case DistKind::kGaussian1d:
      return 0;
    case DistKind::kTwoMoons:
    case DistKind::kCheckerboard:
      return 2;
    case DistKind::kEightGaussians:
      return 8;
  }
  return 0;
}

LabeledSamples sample_labeled(const ToyDistribution& dist, std::size_t n, std::uint64_t seed) {
  require(n > 0, "sample_data: n must be positive");
  require(dist.kind != DistKind::kGaussian1d || dist.sigma_d > 0.0,
          "sample_data: gaussian1d requires sigma_d > 0");
  Rng rng(derive_seed(dist.seed, "data", seed));
  LabeledSamples out{ad::Tensor({n, dist.dim()}), std::vector<int>(n, nets::kNullClass)};
  ad::Tensor& x = out.x;
  constexpr double pi = std::numbers::pi;

  for (std::size_t i = 0; i < n; ++i) {
    switch (dist.kind) {
      case DistKind::kGaussian1d:
        x[i] = rng.normal(0.0, dist.sigma_d);
        break;
      case DistKind::kTwoMoons: {
        const int moon = rng.uniform_int(0, 1);
        const double a = rng.uniform(0.0, pi);
        double px = moon == 0 ? std::cos(a) : 1.0 - std::cos(a);
        double py = moon == 0 ? std::sin(a) : 0.5 - std::sin(a);
        x.at(i, 0) = px - 0.5 + rng.normal(0.0, 0.08);
        x.at(i, 1) = py - 0.25 + rng.normal(0.0, 0.08);
        out.labels[i] = moon;
        break;
      }
      case DistKind::kCheckerboard: {
        // Dark cells are those with (row + col) even on the 4x4 board.
        const int cell = rng.uniform_int(0, 7);
        const int row = cell / 2;
        const int col = 2 * (cell % 2) + (row % 2);
        x.at(i, 0) = -2.0 + col + rng.uniform();
        x.at(i, 1) = -2.0 + row + rng.uniform();
        out.labels[i] = x.at(i, 0) < 0.0 ? 0 : 1;
        break;
      }
      case DistKind::kEightGaussians: {
        const int k = rng.uniform_int(0, 7);
        const double a = 2.0 * pi * k / 8.0;
        x.at(i, 0) = 2.0 * std::cos(a) + rng.normal(0.0, 0.15);
        x.at(i, 1) = 2.0 * std::sin(a) + rng.normal(0.0, 0.15);
        out.labels[i] = k;
        break;
      }
    }
  }
  return out;
}

ad::Tensor sample_data(const ToyDistribution& dist, std::size_t n, std::uint64_t seed) {
  return sample_labeled(dist, n, seed).x;
}

}  // namespace disca::flow
