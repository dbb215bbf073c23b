#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "disca/ad/tensor.hpp"

namespace disca {

// Derives an independent stream seed from a root seed, a tag and an index.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

  ad::Tensor normal_tensor(ad::Shape shape, double stddev = 1.0);
  ad::Tensor uniform_tensor(ad::Shape shape, double lo = 0.0, double hi = 1.0);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace disca
