#pragma once

#include <cstddef>
#include <deque>
#include <optional>

#include "disca/ad/tensor.hpp"
#include "disca/flow/time_pair.hpp"

namespace disca::cache {

struct HistoryEntry {
  flow::TimePair pair;
  ad::Tensor value;
};

/// The cached mean velocity C and the step it came from. Naive and learnable
/// modes hold exactly one tensor; Taylor mode additionally keeps a ring of the
/// last `history_capacity` full evaluations, newest first.
struct CacheState {
  std::optional<ad::Tensor> value;
  flow::TimePair origin;
  std::deque<HistoryEntry> history;
  std::size_t history_capacity = 0;

  static CacheState single() { return {}; }
  static CacheState taylor(std::size_t order) {
    CacheState s;
    s.history_capacity = order + 1;
    return s;
  }

  bool initialized() const { return value.has_value(); }
  // Throws CacheMissError when nothing has been cached yet.
  const ad::Tensor& get() const;

  // Bytes held by cached tensors plus the origin pair.
  std::size_t bytes() const;
};

}  // namespace disca::cache
