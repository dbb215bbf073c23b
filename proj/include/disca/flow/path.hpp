#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "disca/ad/optim.hpp"
#include "disca/ad/params.hpp"
#include "disca/flow/toy_data.hpp"
#include "disca/nets/condition.hpp"
#include "disca/nets/velocity_model.hpp"

namespace disca::flow {

/// Rows of (data x0, noise x1, time t, x_t) with x_t = (1 - t) x0 + t x1.
struct PathBatch {
  ad::Tensor x0;
  ad::Tensor x1;
  ad::Tensor t;  // [B,1]
  ad::Tensor xt;

  std::size_t rows() const { return x0.rows(); }
};

PathBatch make_path(ad::Tensor x0, ad::Tensor x1, ad::Tensor t);
// Same, with one shared time for all rows.
PathBatch make_path(ad::Tensor x0, ad::Tensor x1, double t);
// Throws ContractViolation unless x_t matches the interpolation identity.
void check_path(const PathBatch& b);

// (1 - t) x0 + t x1 row-wise, t a [B,1] column.
ad::Tensor interpolate(const ad::Tensor& x0, const ad::Tensor& x1, const ad::Tensor& t);

// Squared error of the instantaneous velocity against x1 - x0, summed over
// coordinates and averaged over rows. Rejects models that take r.
ad::Var fm_loss(ad::Tape& tape, const nets::VelocityModel& model, const ad::ParamVars& p,
                const PathBatch& batch, const nets::ConditionBatch& c);
double fm_loss(const nets::VelocityModel& model, const ad::ParameterSet& params,
               const PathBatch& batch, const nets::ConditionBatch& c);

struct FmTrainConfig {
  std::size_t iters = 5000;
  std::size_t batch = 256;
  double lr = 1e-3;
  // Fraction of rows trained with the null class, so the same network also
  // learns the unconditional velocity.
  double label_dropout = 0.1;
  bool cosine_decay = true;
};

// Draws a training batch: data with labels, Gaussian noise, t ~ U(0,1).
struct LabeledPath {
  PathBatch path;
  nets::ConditionBatch cond;
};
LabeledPath draw_path_batch(const ToyDistribution& dist, std::size_t n, double label_dropout,
                            Rng& rng);

using ProgressFn = std::function<void(std::size_t iter, double loss)>;

// Base flow-matching training. Returns per-iteration losses.
std::vector<double> train_flow_matching(const nets::VelocityModel& model, ad::ParameterSet& params,
                                        const ToyDistribution& dist, const FmTrainConfig& cfg,
                                        std::uint64_t seed, const ProgressFn& progress = {});

}  // namespace disca::flow
