#pragma once

#include <cstddef>

#include "disca/ad/params.hpp"
#include "disca/cache/cache_state.hpp"
#include "disca/nets/condition.hpp"
#include "disca/rng.hpp"

namespace disca::nets {

struct PredictorConfig {
  std::size_t input_dim = 2;
  std::size_t hidden_dim = 16;
  std::size_t depth = 1;
  std::size_t time_embed_dim = 8;
  double time_scale = 1.0;
  std::size_t condition_vocab = 0;
  // Upper bound on predictor size relative to the backbone, in (0, 0.04].
  double parameter_budget_ratio = 0.04;

  friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

/// Lightweight predictor P(C, x, r, t, c) for the next mean velocity. The
/// cache is concatenated with x on the way in, and the readout sees the
/// cache again next to the last hidden state:
///   h = W_in [C, x] + b, residual blocks with time/interval/class conditioning,
///   out = W_out [h, C] + b_out
class Predictor {
 public:
  // Throws ContractViolation when the predictor would exceed
  // `parameter_budget_ratio * backbone_params`.
  Predictor(PredictorConfig cfg, std::size_t backbone_params);

  const PredictorConfig& config() const { return cfg_; }
  std::size_t parameter_count() const;
  ad::ParameterSet init(Rng& rng) const;

  ad::Var forward(ad::Tape& tape, const ad::ParamVars& p, ad::Var cache, ad::Var x, ad::Var t,
                  ad::Var r, const ConditionBatch& c) const;

  ad::Tensor eval(const ad::ParameterSet& params, const cache::CacheState& state,
                  const ad::Tensor& x, double t, double r, const ConditionBatch& c) const;

 private:
  PredictorConfig cfg_;
};

}  // namespace disca::nets
