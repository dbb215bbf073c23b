#include "disca/cache/cache_state.hpp"

#include "disca/errors.hpp"

namespace disca::cache {

const ad::Tensor& CacheState::get() const {
  if (!value) throw CacheMissError("cache read before any full evaluation initialized it");
  return *value;
}

std::size_t CacheState::bytes() const {
  std::size_t b = 0;
  if (history.empty()) {
    if (value) b += value->bytes();
  } else {
    for (const auto& e : history) b += e.value.bytes();
  }
  return b + sizeof(flow::TimePair);
}

}  // namespace disca::cache
