#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "disca/ad/optim.hpp"
#include "disca/ad/params.hpp"
#include "disca/flow/time_pair.hpp"
#include "disca/flow/toy_data.hpp"
#include "disca/nets/condition.hpp"
#include "disca/nets/discriminator.hpp"
#include "disca/nets/predictor.hpp"
#include "disca/nets/velocity_model.hpp"
#include "disca/rng.hpp"

namespace disca::ptrain {

struct PredictorTrainConfig {
  double delta_max = 0.2;
  std::size_t mse_iters = 500;
  std::size_t gan_iters = 1000;
  double lambda_adv = 1.0;
  double lr_predictor = 1e-4;
  double lr_discriminator = 1e-2;
  std::size_t batch = 256;
  // Cache origins (t, r) are drawn from the uniform sampling grid of this many steps.
  std::size_t grid_steps = 20;

  // Throws ContractViolation on out-of-range fields.
  void validate() const;
  // Set when delta_max exceeds the restrict factor the model was distilled with.
  std::optional<std::string> warning(double restrict_factor) const;
};

/// One batch of cache/query pairs. Every row has its own origin (t, r) and
/// offset delta; the query pair is (t, r) - delta clamped at zero. x_t lies
/// on the (x0, eps) line and x_q is one mean-velocity step of the frozen
/// model from x_t down to t_q.
struct TrainingPair {
  ad::Tensor x_t, t, r;        // cache origin; t and r are [B,1]
  ad::Tensor cache;            // M(x_t, r, t)
  ad::Tensor x_q, t_q, r_q;    // query
  ad::Tensor target_u;         // M(x_q, r_q, t_q)
  ad::Tensor delta;            // [B,1]
  nets::ConditionBatch cond;

  std::size_t rows() const { return x_t.rows(); }
};

// Deterministic core: everything but the frozen evaluations is given.
TrainingPair make_training_pair(const nets::VelocityModel& model, const ad::ParameterSet& params,
                                const ad::Tensor& x0, const ad::Tensor& eps, const ad::Tensor& t,
                                const ad::Tensor& r, const ad::Tensor& delta, nets::ConditionBatch cond);

// Draws data, noise, grid origins and delta ~ U(0, delta_max). Class labels
// come from the data when the model is class-conditional; `g_infer` is
// attached when the model takes a guidance scale.
TrainingPair build_training_pair(const nets::VelocityModel& model, const ad::ParameterSet& params,
                                 const flow::ToyDistribution& dist, const PredictorTrainConfig& cfg,
                                 std::optional<double> g_infer, Rng& rng);

// Mean over rows of the squared error summed over coordinates.
ad::Var predictor_mse(ad::Tape& tape, const nets::Predictor& predictor, const ad::ParamVars& p,
                      const TrainingPair& pair);

// One Adam step on the squared error. NumericError leaves `params` untouched.
double predictor_mse_step(const nets::Predictor& predictor, ad::ParameterSet& params, const TrainingPair& pair,
                          ad::OptimizerState& opt);

// Hidden activations after the 1-based blocks in `taps`. Extractor weights
// are constants; gradients reach `x`.
std::vector<ad::Var> extract_features(ad::Tape& tape, const nets::VelocityModel& extractor,
                                      const ad::ParameterSet& params, ad::Var x, ad::Var t, ad::Var r,
                                      const nets::ConditionBatch& c, const std::vector<std::size_t>& taps);
std::vector<ad::Tensor> extract_features(const nets::VelocityModel& extractor, const ad::ParameterSet& params,
                                         const ad::Tensor& x, const ad::Tensor& t, const ad::Tensor& r,
                                         const nets::ConditionBatch& c, const std::vector<std::size_t>& taps);

// max(0, 1 - real) + max(0, 1 + fake).
double discriminator_hinge(double real_score, double fake_score);

struct GanReport {
  std::size_t iteration = 0;
  double loss_p = 0.0;
  double loss_d = 0.0;
  double mse = 0.0;
  double d_real_score = 0.0;
  double d_fake_score = 0.0;
};

struct Adversary {
  const nets::Discriminator* model = nullptr;
  ad::ParameterSet* params = nullptr;
  nets::SpectralState* spectral = nullptr;
  ad::OptimizerState* opt = nullptr;
};

// Predictor step on MSE + lambda * mean hinge(1 - D(F(x_pred))) with the
// current discriminator, then a discriminator step on
// mean hinge(1 - D(F(x_tar))) + mean hinge(1 + D(F(x_pred))), where x_pred is
// recomputed from the updated predictor without gradient. States are the
// one-step landings x_q - (t_q - r_q) u; features are taken at (r_q, r_q).
// With lambda == 0 the predictor step is exactly predictor_mse_step.
// Non-finite scores or losses throw NumericError.
GanReport gan_step(const nets::Predictor& predictor, ad::ParameterSet& pparams, ad::OptimizerState& popt,
                   const Adversary& adv, const nets::VelocityModel& extractor, const ad::ParameterSet& eparams,
                   const TrainingPair& pair, double lambda_adv);

struct PredictorTrainResult {
  std::vector<double> mse_losses;  // warm-up phase
  std::vector<GanReport> gan;      // adversarial phase
  // Set when the adversarial phase stopped on a non-finite value; the
  // reports up to that point are kept.
  std::optional<std::string> aborted;
};

using GanReportFn = std::function<void(const GanReport&)>;

// mse_iters warm-up steps, then gan_iters adversarial steps, on batches from
// one stream seeded by `seed` (the discriminator never draws from it).
PredictorTrainResult train_predictor(const nets::VelocityModel& model, const ad::ParameterSet& mparams,
                                     const nets::Predictor& predictor, ad::ParameterSet& pparams,
                                     const Adversary& adv, const flow::ToyDistribution& dist,
                                     const PredictorTrainConfig& cfg, std::optional<double> g_infer,
                                     std::uint64_t seed, const GanReportFn& on_gan = {});

struct ValidationMse {
  double predictor = 0.0;
  double naive = 0.0;
};

// Held-out squared error of the predictor and of plain reuse against the
// frozen model, with every row offset by exactly `delta`.
ValidationMse validation_mse(const nets::VelocityModel& model, const ad::ParameterSet& mparams,
                             const nets::Predictor& predictor, const ad::ParameterSet& pparams,
                             const flow::ToyDistribution& dist, const PredictorTrainConfig& cfg, double delta,
                             std::size_t rows, std::optional<double> g_infer, std::uint64_t seed);

// iteration,loss_P,loss_D,d_real_score,d_fake_score
void write_gan_csv_header(std::ostream& os);
void write_gan_csv_row(std::ostream& os, const GanReport& r);

}  // namespace disca::ptrain
