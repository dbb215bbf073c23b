#pragma once

#include <cstddef>
#include <string>

#include "disca/ad/params.hpp"
#include "disca/cache/cache_state.hpp"
#include "disca/flow/sampler.hpp"
#include "disca/nets/condition.hpp"
#include "disca/nets/predictor.hpp"

namespace disca::cache {

struct NfeReport {
  std::size_t full_evals = 0;
  std::size_t predictor_evals = 0;
  std::size_t cache_bytes_peak = 0;
  // Predictor calls whose pair lay farther than the trained horizon from the
  // cache origin. Counted, never rejected.
  std::size_t out_of_horizon = 0;
};

// One full evaluation of `u` at (x, pair). Replaces the cached value and
// origin; in Taylor mode the result is also pushed onto the history ring.
// Throws NumericError("model") if the output is not finite.
ad::Tensor cache_init(const flow::MeanVelocityField& u, const ad::Tensor& x, const flow::TimePair& pair,
                      CacheState& state, NfeReport& report);

// The cached value as is. CacheMissError before the first full evaluation.
ad::Tensor naive_reuse(const CacheState& state);

// Extrapolates the history to time `query_t` with the order-`m` polynomial
// through the newest m + 1 entries (Newton divided differences, so spacing
// need not be uniform). With fewer entries the order drops to what the
// history supports; order 0 returns the cached value unchanged.
ad::Tensor taylor_forecast(const CacheState& state, double query_t, std::size_t m);

// Grid form F + sum_i D^i F / (i! N^i) (-k)^i, with the history taken as N
// steps apart and the grid index growing toward older (larger t) entries.
// D^i F is i! N^i times the i-th Taylor coefficient, in grid units, of the
// interpolating polynomial at the newest entry; for m = 1 it is the older
// value minus the newest.
ad::Tensor taylor_forecast(const CacheState& state, std::size_t k, std::size_t N, std::size_t m);

struct PredictorHandle {
  const nets::Predictor* model = nullptr;
  const ad::ParameterSet* params = nullptr;
  // Largest t - t_origin seen in training; 0 disables the horizon check.
  double horizon = 0.0;
};

// Predictor output for the step at `pair` given the cache.
ad::Tensor disca_predict(const PredictorHandle& predictor, const CacheState& state, const ad::Tensor& x,
                         const flow::TimePair& pair, const nets::ConditionBatch& c, NfeReport& report);

}  // namespace disca::cache
