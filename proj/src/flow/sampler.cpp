#include "disca/flow/sampler.hpp"

#include "disca/errors.hpp"

namespace disca::flow {

VelocityField model_velocity(const nets::VelocityModel& model, const ad::ParameterSet& params,
                             nets::ConditionBatch c) {
  return [&model, &params, c = std::move(c)](const ad::Tensor& x, double t) {
    return model.eval(params, x, t, std::nullopt, c);
  };
}

VelocityField guided_velocity(const nets::VelocityModel& model, const ad::ParameterSet& params,
                              nets::ConditionBatch c, double g) {
  require(g > 0.0, "guided_velocity: g must be positive");
  nets::ConditionBatch uc = c.as_null();
  return [&model, &params, c = std::move(c), uc = std::move(uc), g](const ad::Tensor& x, double t) {
    const ad::Tensor vc = model.eval(params, x, t, std::nullopt, c);
    const ad::Tensor vu = model.eval(params, x, t, std::nullopt, uc);
    return g * vc + (1.0 - g) * vu;
  };
}

MeanVelocityField model_mean_velocity(const nets::VelocityModel& model,
                                      const ad::ParameterSet& params, nets::ConditionBatch c) {
  require(model.config().accepts_r, "model_mean_velocity: model does not take r");
  return [&model, &params, c = std::move(c)](const ad::Tensor& x, const TimePair& pair) {
    return model.eval(params, x, pair.t, pair.r, c);
  };
}

ad::Tensor euler_sample(const VelocityField& v, ad::Tensor x, std::size_t steps) {
  require(steps >= 1, "euler_sample: steps must be >= 1");
  for (const TimePair& p : uniform_pairs(steps)) x = x - p.interval() * v(x, p.t);
  return x;
}

ad::Tensor euler_sample(const nets::VelocityModel& model, const ad::ParameterSet& params,
                        ad::Tensor x1, std::size_t steps, const nets::ConditionBatch& c,
                        std::optional<double> g) {
  if (g) return euler_sample(guided_velocity(model, params, c, *g), std::move(x1), steps);
  return euler_sample(model_velocity(model, params, c), std::move(x1), steps);
}

ad::Tensor mean_velocity_step(const ad::Tensor& x_t, const TimePair& pair, const ad::Tensor& u) {
  ad::require_same_shape(x_t, u, "mean_velocity_step");
  require_valid(pair);
  return x_t - pair.interval() * u;
}

std::vector<TimePair> uniform_pairs(std::size_t steps) {
  require(steps >= 1, "uniform_pairs: steps must be >= 1");
  std::vector<TimePair> out;
  const double n = static_cast<double>(steps);
  for (std::size_t j = 0; j < steps; ++j)
    out.push_back({static_cast<double>(steps - j) / n, static_cast<double>(steps - j - 1) / n});
  return out;
}

ad::Tensor sample_mean_flow(const MeanVelocityField& u, ad::Tensor x,
                            const std::vector<TimePair>& pairs) {
  for (const TimePair& p : pairs) x = mean_velocity_step(x, p, u(x, p));
  return x;
}

}  // namespace disca::flow
