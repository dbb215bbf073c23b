#include "disca/ad/spectral.hpp"

#include <cmath>

#include "disca/errors.hpp"
#include "kernels.hpp"

namespace disca::ad {

namespace {

double norm(const Tensor& t) { return std::sqrt(dot(t, t)); }

struct PowerStep {
  Tensor u;  // [rows, 1]
  Tensor v;  // [cols, 1]
  bool degenerate = false;
};

PowerStep power_step(const Tensor& w, const Tensor& u_state) {
  require(w.rank() == 2, "spectral_normalize: weight must be rank 2");
  require(u_state.size() == w.rows(), "spectral_normalize: u_state length " +
                                          std::to_string(u_state.size()) + " vs rows " +
                                          std::to_string(w.rows()));
  require(norm(u_state) > 0.0, "spectral_normalize: u_state must be nonzero");
  PowerStep s;
  const Tensor u_col = u_state.reshaped({w.rows(), 1});
  Tensor v = kernels::gemm_tn(w, u_col);  // W^T u
  const double nv = norm(v);
  if (nv == 0.0) {
    s.u = u_col;
    s.degenerate = true;
    return s;
  }
  v = (1.0 / nv) * v;
  Tensor u = kernels::gemm(w, v);  // W v
  const double nu = norm(u);
  if (nu == 0.0) {
    s.u = u_col;
    s.degenerate = true;
    return s;
  }
  s.u = (1.0 / nu) * u;
  s.v = std::move(v);
  return s;
}

}  // namespace

SpectralResult spectral_normalize(const Tensor& weight, const Tensor& u_state) {
  PowerStep s = power_step(weight, u_state);
  SpectralResult r;
  r.u_state = s.u.reshaped(u_state.shape());
  if (s.degenerate) {
    r.weight = weight;
    r.degenerate = true;
    return r;
  }
  r.sigma = dot(s.u, kernels::gemm(weight, s.v));
  r.weight = (1.0 / r.sigma) * weight;
  return r;
}

Var spectral_normalize(Var weight, Tensor& u_state) {
  PowerStep s = power_step(weight.value(), u_state);
  u_state = s.u.reshaped(u_state.shape());
  if (s.degenerate) return weight;
  Tape& tp = *weight.tape();
  Var wv = matmul(weight, tp.constant(s.v));
  Var sigma = sum(mul(tp.constant(s.u), wv));
  return div_scalar(weight, sigma);
}

}  // namespace disca::ad
