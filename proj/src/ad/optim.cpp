#include "disca/ad/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "disca/errors.hpp"

namespace disca::ad {

OptimizerState::OptimizerState(AdamHyper h) : hyper(h) {
  require(h.beta1 > 0.0 && h.beta1 < 1.0 && h.beta2 > 0.0 && h.beta2 < 1.0,
          "adam: betas must lie in (0, 1)");
  require(h.lr > 0.0 && h.eps > 0.0, "adam: lr and eps must be positive");
}

void adam_step(ParameterSet& params, const Gradients& grads, OptimizerState& state) {
  for (const auto& [name, g] : grads) {
    require_same_shape(params.at(name), g, ("adam gradient for '" + name + "'").c_str());
    if (!g.all_finite()) throw NumericError("adam", "non-finite gradient for '" + name + "'");
  }
  const AdamHyper& h = state.hyper;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, Tensor::zeros_like(p));
    auto [v_it, v_new] = state.second_moment.try_emplace(name, Tensor::zeros_like(p));
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
  }
  params.bump_version();
}

double cosine_lr(double base, std::uint64_t step, std::uint64_t total, double final_fraction) {
  if (total == 0) return base;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return base * (final_fraction + (1.0 - final_fraction) * w);
}

}  // namespace disca::ad
