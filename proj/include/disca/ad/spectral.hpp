#pragma once

#include "disca/ad/tape.hpp"
#include "disca/ad/tensor.hpp"

namespace disca::ad {

struct SpectralResult {
  Tensor weight;   // weight / sigma
  Tensor u_state;  // refined left singular vector estimate
  double sigma = 0.0;
  bool degenerate = false;  // zero matrix: weight returned unchanged
};

/// One power-iteration refinement of `u_state` followed by division by the
/// Rayleigh estimate sigma = u^T W v. `weight` is [rows, cols] and `u_state`
/// has `rows` entries.
SpectralResult spectral_normalize(const Tensor& weight, const Tensor& u_state);

/// Tape version for use inside a discriminator: refines `u_state` in place and
/// returns W / (u^T W v) with u, v held constant, so gradients flow through
/// both the numerator and sigma. A zero weight is passed through unchanged.
Var spectral_normalize(Var weight, Tensor& u_state);

}  // namespace disca::ad
