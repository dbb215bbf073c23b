#include "disca/cache/strategies.hpp"

#include <cmath>
#include <vector>

#include "disca/errors.hpp"

namespace disca::cache {

namespace {

void track_bytes(const CacheState& state, NfeReport& report) {
  report.cache_bytes_peak = std::max(report.cache_bytes_peak, state.bytes());
}

// Monomial coefficients c_i of the polynomial through the newest `order + 1`
// history entries, in powers of (t - t_newest).
std::vector<ad::Tensor> taylor_coefficients(const CacheState& state, std::size_t order) {
  const auto& h = state.history;
  const double t0 = h.front().pair.t;
  std::vector<double> tau(order + 1);
  for (std::size_t j = 0; j <= order; ++j) tau[j] = h[j].pair.t - t0;

  // Divided differences, computed in place: after pass k, dd[j] = f[tau_{j-k} .. tau_j].
  std::vector<ad::Tensor> dd;
  for (std::size_t j = 0; j <= order; ++j) dd.push_back(h[j].value);
  for (std::size_t k = 1; k <= order; ++k)
    for (std::size_t j = order; j >= k; --j) dd[j] = (1.0 / (tau[j] - tau[j - k])) * (dd[j] - dd[j - 1]);

  // Expand sum_i dd[i] prod_{j<i} (tau - tau_j) into powers of tau.
  std::vector<ad::Tensor> c(order + 1, ad::Tensor::zeros_like(dd[0]));
  std::vector<double> basis = {1.0};
  for (std::size_t i = 0; i <= order; ++i) {
    for (std::size_t p = 0; p < basis.size(); ++p)
      if (basis[p] != 0.0) c[p] = c[p] + basis[p] * dd[i];
    std::vector<double> next(basis.size() + 1, 0.0);
    for (std::size_t p = 0; p < basis.size(); ++p) {
      next[p + 1] += basis[p];
      next[p] -= tau[i] * basis[p];
    }
    basis = std::move(next);
  }
  return c;
}

std::size_t supported_order(const CacheState& state, std::size_t m) {
  if (state.history.empty()) return 0;
  return std::min(m, state.history.size() - 1);
}

}  // namespace

ad::Tensor cache_init(const flow::MeanVelocityField& u, const ad::Tensor& x, const flow::TimePair& pair,
                      CacheState& state, NfeReport& report) {
  flow::require_valid(pair);
  ad::Tensor out = u(x, pair);
  ++report.full_evals;
  if (!out.all_finite())
    throw NumericError("model", "cache_init: non-finite model output at t=" + std::to_string(pair.t));
  if (state.history_capacity > 0) {
    require(state.history.empty() || pair.t < state.history.front().pair.t,
            "cache_init: history times must strictly decrease");
    state.history.push_front({pair, out});
    while (state.history.size() > state.history_capacity) state.history.pop_back();
  }
  state.value = out;
  state.origin = pair;
  track_bytes(state, report);
  return out;
}

ad::Tensor naive_reuse(const CacheState& state) { return state.get(); }

ad::Tensor taylor_forecast(const CacheState& state, double query_t, std::size_t m) {
  const ad::Tensor& f = state.get();
  const std::size_t order = supported_order(state, m);
  if (order == 0) return f;
  const std::vector<ad::Tensor> c = taylor_coefficients(state, order);
  const double dt = query_t - state.history.front().pair.t;
  ad::Tensor out = c[0];
  double pw = 1.0;
  for (std::size_t i = 1; i <= order; ++i) {
    pw *= dt;
    out = out + pw * c[i];
  }
  return out;
}

ad::Tensor taylor_forecast(const CacheState& state, std::size_t k, std::size_t N, std::size_t m) {
  require(k >= 1 && N >= 1, "taylor_forecast: k and N must be >= 1");
  const ad::Tensor& f = state.get();
  const std::size_t order = supported_order(state, m);
  if (order == 0) return f;
  // One grid step in t, from the spacing of the two newest entries.
  const double step = (state.history[1].pair.t - state.history[0].pair.t) / static_cast<double>(N);
  const std::vector<ad::Tensor> c = taylor_coefficients(state, order);
  ad::Tensor out = f;
  double fact = 1.0, n_pow = 1.0, k_pow = 1.0, step_pow = 1.0;
  for (std::size_t i = 1; i <= order; ++i) {
    fact *= static_cast<double>(i);
    n_pow *= static_cast<double>(N);
    k_pow *= -static_cast<double>(k);
    step_pow *= step;
    const ad::Tensor delta = (fact * n_pow * step_pow) * c[i];
    out = out + (k_pow / (fact * n_pow)) * delta;
  }
  return out;
}

ad::Tensor disca_predict(const PredictorHandle& predictor, const CacheState& state, const ad::Tensor& x,
                         const flow::TimePair& pair, const nets::ConditionBatch& c, NfeReport& report) {
  require(predictor.model && predictor.params, "disca_predict: no predictor");
  flow::require_valid(pair);
  if (predictor.horizon > 0.0 && state.initialized() && state.origin.t - pair.t > predictor.horizon)
    ++report.out_of_horizon;
  ad::Tensor out = predictor.model->eval(*predictor.params, state, x, pair.t, pair.r, c);
  ++report.predictor_evals;
  return out;
}

}  // namespace disca::cache
