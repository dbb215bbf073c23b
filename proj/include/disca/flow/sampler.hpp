#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "disca/ad/params.hpp"
#include "disca/flow/time_pair.hpp"
#include "disca/nets/condition.hpp"
#include "disca/nets/velocity_model.hpp"

namespace disca::flow {

// Instantaneous velocity v(x, t) for a whole batch at one time.
using VelocityField = std::function<ad::Tensor(const ad::Tensor& x, double t)>;
// Mean velocity u(x, r, t) over the interval of `pair`.
using MeanVelocityField = std::function<ad::Tensor(const ad::Tensor& x, const TimePair& pair)>;

// Conditional velocity of an instantaneous model. `c` carries the guidance
// scale when the model has a guidance input.
VelocityField model_velocity(const nets::VelocityModel& model, const ad::ParameterSet& params,
                             nets::ConditionBatch c);

// Guided mixture g * v(x,t|c) + (1 - g) * v(x,t|null).
VelocityField guided_velocity(const nets::VelocityModel& model, const ad::ParameterSet& params,
                              nets::ConditionBatch c, double g);

MeanVelocityField model_mean_velocity(const nets::VelocityModel& model,
                                      const ad::ParameterSet& params, nets::ConditionBatch c);

// Euler walk from t = 1 to t = 0 on `steps` uniform intervals.
ad::Tensor euler_sample(const VelocityField& v, ad::Tensor x1, std::size_t steps);
// Model version; with `g` set the guided mixture is used (null branch from
// the same parameters).
ad::Tensor euler_sample(const nets::VelocityModel& model, const ad::ParameterSet& params,
                        ad::Tensor x1, std::size_t steps, const nets::ConditionBatch& c,
                        std::optional<double> g = std::nullopt);

// x_t - (t - r) u.
ad::Tensor mean_velocity_step(const ad::Tensor& x_t, const TimePair& pair, const ad::Tensor& u);

// Contiguous decreasing pairs (1 - j/n, 1 - (j+1)/n), j = 0..n-1; the last r is exactly 0.
std::vector<TimePair> uniform_pairs(std::size_t steps);

// Uncached mean-velocity sampler: one mean-velocity step per pair.
ad::Tensor sample_mean_flow(const MeanVelocityField& u, ad::Tensor x1,
                            const std::vector<TimePair>& pairs);

}  // namespace disca::flow
