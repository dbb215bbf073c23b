#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "disca/ad/params.hpp"

namespace disca::ad {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::uint64_t step_count = 0;
  AdamHyper hyper;

  explicit OptimizerState(AdamHyper h = {});
};

/// Bias-corrected Adam update. Parameters without a gradient entry are left
/// alone. A non-finite gradient throws NumericError before anything changes.
void adam_step(ParameterSet& params, const Gradients& grads, OptimizerState& state);

// Half-cosine decay from `base` at step 0 to `base * final_fraction` at `total`.
double cosine_lr(double base, std::uint64_t step, std::uint64_t total, double final_fraction = 0.02);

}  // namespace disca::ad
