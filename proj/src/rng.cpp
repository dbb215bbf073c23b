#include "disca/rng.hpp"

namespace disca {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index) {
  std::uint64_t h = splitmix64(root);
  for (char c : tag) h = splitmix64(h ^ static_cast<unsigned char>(c));
  return splitmix64(h ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

ad::Tensor Rng::normal_tensor(ad::Shape shape, double stddev) {
  ad::Tensor t(std::move(shape));
  for (double& v : t.data()) v = normal(0.0, stddev);
  return t;
}

ad::Tensor Rng::uniform_tensor(ad::Shape shape, double lo, double hi) {
  ad::Tensor t(std::move(shape));
  for (double& v : t.data()) v = uniform(lo, hi);
  return t;
}

}  // namespace disca
