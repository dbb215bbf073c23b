#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "disca/ad/params.hpp"
#include "disca/nets/condition.hpp"
#include "disca/rng.hpp"

namespace disca::nets {

struct VelocityModelConfig {
  std::size_t input_dim = 2;
  std::size_t hidden_dim = 64;
  std::size_t depth = 3;
  std::size_t time_embed_dim = 16;
  // Times are multiplied by this before the sinusoidal embedding. Larger
  // values sharpen the time dependence but inflate du/dt in the mean-velocity
  // target.
  double time_scale = 1.0;
  std::size_t condition_vocab = 0;
  // Takes the interval start r (mean-velocity model). Base and CFG-distilled
  // models predict the instantaneous velocity and reject r.
  bool accepts_r = false;
  // Guidance-scale input appended to the condition vector.
  bool cfg_embed = false;
  std::size_t cfg_hidden = 16;
  double g_min = 1.0;
  double g_max = 8.0;

  friend bool operator==(const VelocityModelConfig&, const VelocityModelConfig&) = default;
};

/// Residual MLP backbone M(x, r, t, c). `cond` is the sum of the time,
/// interval, class and guidance embeddings; it enters the stream once at the
/// input and again inside every block:
///   h = W_in x + b_in + cond
///   h <- h + W2 gelu(W1 (h + cond) + b1) + b2
/// The interval embedding is driven by (t - r).
class VelocityModel {
 public:
  explicit VelocityModel(VelocityModelConfig cfg);

  const VelocityModelConfig& config() const { return cfg_; }

  // Fresh weights: orthogonal hidden layers, zero output layer.
  ad::ParameterSet init(Rng& rng) const;
  // Copies every entry of `from` and initializes the missing ones. New
  // embedding paths start with a zero output so the function is unchanged.
  ad::ParameterSet init_from(const ad::ParameterSet& from, Rng& rng) const;
  std::size_t parameter_count() const;

  // `t` and `r` are [B,1] columns. Hidden activations after each block are
  // appended to `taps` when given.
  ad::Var forward(ad::Tape& tape, const ad::ParamVars& p, ad::Var x, ad::Var t,
                  std::optional<ad::Var> r, const ConditionBatch& c,
                  std::vector<ad::Var>* taps = nullptr) const;

  // No-gradient evaluation.
  ad::Tensor eval(const ad::ParameterSet& params, const ad::Tensor& x, const ad::Tensor& t,
                  const ad::Tensor* r, const ConditionBatch& c) const;
  ad::Tensor eval(const ad::ParameterSet& params, const ad::Tensor& x, double t,
                  std::optional<double> r, const ConditionBatch& c) const;

  // Guidance embedding for a [B,1] column of scales, shape [B, hidden].
  ad::Var cfg_embed(ad::Tape& tape, const ad::ParamVars& p, ad::Var g) const;
  ad::Tensor cfg_embed(const ad::ParameterSet& params, double g) const;

 private:
  void validate_times(const ad::Tensor& t, const ad::Tensor* r) const;

  VelocityModelConfig cfg_;
};

}  // namespace disca::nets
