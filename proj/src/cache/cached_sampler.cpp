#include "disca/cache/cached_sampler.hpp"

#include "disca/errors.hpp"

namespace disca::cache {

std::string Strategy::name() const {
  switch (kind) {
    case StrategyKind::kNaive: return "naive";
    case StrategyKind::kTaylor: return "taylor" + std::to_string(taylor_order);
    case StrategyKind::kDisca: return "disca";
  }
  return "?";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "naive") return Strategy::naive();
  if (s == "disca") return Strategy::disca();
  if (s.size() > 6 && s.rfind("taylor", 0) == 0 &&
      s.find_first_not_of("0123456789", 6) == std::string::npos)
    return Strategy::taylor(std::stoul(s.substr(6)));
  throw ContractViolation("unknown caching strategy '" + s + "'");
}

CachedSample cached_sample(const flow::MeanVelocityField& u, const std::optional<PredictorHandle>& predictor,
                           const StepSchedule& schedule, const Strategy& strategy, ad::Tensor x,
                           const nets::ConditionBatch& c) {
  require(strategy.kind != StrategyKind::kDisca || (predictor && predictor->model && predictor->params),
          "cached_sample: the disca strategy needs a predictor");
  require(strategy.kind == StrategyKind::kDisca || !predictor,
          "cached_sample: predictor given to the " + strategy.name() + " strategy");
  validate(schedule);

  CacheState state = strategy.kind == StrategyKind::kTaylor ? CacheState::taylor(strategy.taylor_order)
                                                            : CacheState::single();
  NfeReport report;
  for (const ScheduledStep& st : schedule.steps) {
    ad::Tensor v;
    if (st.mode == StepMode::kFull) {
      v = cache_init(u, x, st.pair, state, report);
    } else {
      switch (strategy.kind) {
        case StrategyKind::kNaive: v = naive_reuse(state); break;
        case StrategyKind::kTaylor: v = taylor_forecast(state, st.pair.t, strategy.taylor_order); break;
        case StrategyKind::kDisca: v = disca_predict(*predictor, state, x, st.pair, c, report); break;
      }
    }
    x = flow::mean_velocity_step(x, st.pair, v);
  }
  return {std::move(x), report};
}

}  // namespace disca::cache
