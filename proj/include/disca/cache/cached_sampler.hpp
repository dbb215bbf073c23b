#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "disca/cache/schedule.hpp"
#include "disca/cache/strategies.hpp"

namespace disca::cache {

enum class StrategyKind { kNaive, kTaylor, kDisca };

struct Strategy {
  StrategyKind kind = StrategyKind::kNaive;
  std::size_t taylor_order = 0;

  static Strategy naive() { return {StrategyKind::kNaive, 0}; }
  static Strategy taylor(std::size_t m) { return {StrategyKind::kTaylor, m}; }
  static Strategy disca() { return {StrategyKind::kDisca, 0}; }

  // "naive", "taylor<m>", "disca".
  std::string name() const;
  friend bool operator==(const Strategy&, const Strategy&) = default;
};

// Inverse of Strategy::name(). Throws ContractViolation on anything else.
Strategy parse_strategy(const std::string& s);

struct CachedSample {
  ad::Tensor x0;
  NfeReport report;
};

// Walks the schedule with mean-velocity steps. FULL steps evaluate `u` and
// refresh the cache; PREDICT steps use the strategy. DISCA needs `predictor`;
// the check runs before any compute. `c` is the predictor's conditioning.
CachedSample cached_sample(const flow::MeanVelocityField& u, const std::optional<PredictorHandle>& predictor,
                           const StepSchedule& schedule, const Strategy& strategy, ad::Tensor x1,
                           const nets::ConditionBatch& c);

}  // namespace disca::cache
