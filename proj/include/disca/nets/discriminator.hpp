#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "disca/ad/params.hpp"
#include "disca/rng.hpp"

namespace disca::nets {

struct DiscriminatorConfig {
  // 1-based block indices of the feature extractor, strictly increasing.
  std::vector<std::size_t> scales;
  std::size_t feature_dim = 64;
  std::size_t hidden_dim = 32;
  bool spectral_norm = true;

  friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

// Taps after blocks ceil(L/3), ceil(2L/3) and L, deduplicated.
std::vector<std::size_t> default_scales(std::size_t depth);

/// Power-iteration vectors, one per linear weight.
using SpectralState = std::map<std::string, ad::Tensor>;

/// Multi-scale discriminator: one two-layer head per tapped feature, scores
/// summed. With spectral_norm every weight is divided by its running sigma
/// estimate before use.
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig cfg, std::size_t extractor_depth);

  const DiscriminatorConfig& config() const { return cfg_; }
  ad::ParameterSet init(Rng& rng) const;
  SpectralState init_spectral(Rng& rng) const;

  // Score per row, [B,1]. `refine` advances the power iteration for every
  // weight (once per discriminator update).
  ad::Var forward(ad::Tape& tape, const ad::ParamVars& p, const std::vector<ad::Var>& features,
                  SpectralState& sn, bool refine) const;

  ad::Tensor eval(const ad::ParameterSet& params, const std::vector<ad::Tensor>& features,
                  SpectralState sn) const;

  // Weights as used in forward (normalized when spectral_norm is on), without
  // touching the power-iteration state.
  std::map<std::string, ad::Tensor> effective_weights(const ad::ParameterSet& params,
                                                      const SpectralState& sn) const;

  std::vector<std::string> weight_names() const;

 private:
  DiscriminatorConfig cfg_;
};

}  // namespace disca::nets
