#include "disca/ptrain/predictor_train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "disca/errors.hpp"
#include "disca/flow/path.hpp"
#include "disca/flow/sampler.hpp"
#include "disca/nets/layers.hpp"

namespace disca::ptrain {

namespace {

void require_finite(const ad::Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError("model", std::string("predictor training: non-finite ") + what);
}

// x - interval * u, with a per-row interval column.
ad::Var land(ad::Tape& tape, const ad::Tensor& x, const ad::Tensor& t, const ad::Tensor& r, ad::Var u) {
  return ad::sub(tape.constant(x), ad::mul_col(u, tape.constant(t - r)));
}

// Mean over rows of max(0, 1 - sign * score).
ad::Var mean_hinge(ad::Tape& tape, ad::Var score, const ad::Tensor& sign) {
  const std::size_t n = score.value().rows();
  ad::Var margin = ad::sub(tape.constant(ad::Tensor({n, 1}, 1.0)), ad::mul_col(score, tape.constant(sign)));
  return ad::scale(ad::sum(ad::max_const(margin, 0.0)), 1.0 / static_cast<double>(n));
}

double mean_of(const ad::Tensor& t, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += t[i];
  return s / static_cast<double>(end - begin);
}

ad::Tensor stack_rows(const ad::Tensor& a, const ad::Tensor& b) {
  require(a.cols() == b.cols(), "stack_rows: column mismatch");
  std::vector<double> d(a.data().begin(), a.data().end());
  d.insert(d.end(), b.data().begin(), b.data().end());
  return ad::Tensor({a.rows() + b.rows(), a.cols()}, std::move(d));
}

nets::ConditionBatch batch_condition(const nets::VelocityModel& model, std::vector<int> labels,
                                     std::optional<double> g_infer) {
  nets::ConditionBatch c;
  if (model.config().condition_vocab > 0)
    c.class_ids = std::move(labels);
  else
    c.class_ids.assign(labels.size(), nets::kNullClass);
  if (model.config().cfg_embed) {
    require(g_infer.has_value(), "predictor training: the model needs a guidance scale");
    c = c.with_cfg(*g_infer);
  }
  return c;
}

// Cache origins drawn uniformly from the sampling grid.
void draw_origins(std::size_t grid_steps, std::size_t n, Rng& rng, ad::Tensor& t, ad::Tensor& r) {
  const std::vector<flow::TimePair> grid = flow::uniform_pairs(grid_steps);
  t = ad::Tensor({n, 1});
  r = ad::Tensor({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const flow::TimePair& g = grid[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(grid.size()) - 1))];
    t[i] = g.t;
    r[i] = g.r;
  }
}

}  // namespace

void PredictorTrainConfig::validate() const {
  require(delta_max > 0.0 && delta_max <= 1.0, "predictor training: delta_max must lie in (0, 1]");
  require(lambda_adv >= 0.0, "predictor training: lambda_adv must be >= 0");
  require(lr_predictor > 0.0 && lr_discriminator > 0.0, "predictor training: learning rates must be positive");
  require(batch > 0 && grid_steps > 0, "predictor training: batch and grid_steps must be positive");
}

std::optional<std::string> PredictorTrainConfig::warning(double restrict_factor) const {
  if (delta_max <= restrict_factor) return std::nullopt;
  return "delta_max " + std::to_string(delta_max) + " exceeds the distillation restrict factor " +
         std::to_string(restrict_factor);
}

TrainingPair make_training_pair(const nets::VelocityModel& model, const ad::ParameterSet& params,
                                const ad::Tensor& x0, const ad::Tensor& eps, const ad::Tensor& t,
                                const ad::Tensor& r, const ad::Tensor& delta, nets::ConditionBatch cond) {
  require(model.config().accepts_r, "predictor training: the frozen model must take r");
  const std::size_t n = x0.rows();
  require(t.rows() == n && r.rows() == n && delta.rows() == n, "predictor training: column length mismatch");
  TrainingPair p;
  p.t = t;
  p.r = r;
  p.delta = delta;
  p.t_q = ad::Tensor({n, 1});
  p.r_q = ad::Tensor({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    require(delta[i] >= 0.0, "predictor training: negative delta");
    p.t_q[i] = std::max(0.0, t[i] - delta[i]);
    p.r_q[i] = std::max(0.0, r[i] - delta[i]);
  }
  p.x_t = flow::interpolate(x0, eps, t);
  p.cond = std::move(cond);
  p.cache = model.eval(params, p.x_t, p.t, &p.r, p.cond);
  require_finite(p.cache, "cache");
  // The query state is where the frozen model's own sampler lands after
  // moving from t to t_q, as it would at inference.
  const ad::Tensor hop = model.eval(params, p.x_t, p.t, &p.t_q, p.cond);
  require_finite(hop, "query step");
  p.x_q = p.x_t;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p.x_q.cols(); ++j) p.x_q.at(i, j) -= (t[i] - p.t_q[i]) * hop.at(i, j);
  p.target_u = model.eval(params, p.x_q, p.t_q, &p.r_q, p.cond);
  require_finite(p.target_u, "target");
  return p;
}

TrainingPair build_training_pair(const nets::VelocityModel& model, const ad::ParameterSet& params,
                                 const flow::ToyDistribution& dist, const PredictorTrainConfig& cfg,
                                 std::optional<double> g_infer, Rng& rng) {
  cfg.validate();
  const std::size_t n = cfg.batch;
  flow::LabeledSamples data = flow::sample_labeled(dist, n, rng.engine()());
  const ad::Tensor eps = rng.normal_tensor(data.x.shape());
  ad::Tensor t, r, delta({n, 1});
  draw_origins(cfg.grid_steps, n, rng, t, r);
  for (std::size_t i = 0; i < n; ++i) delta[i] = rng.uniform(0.0, cfg.delta_max);
  return make_training_pair(model, params, data.x, eps, t, r, delta,
                            batch_condition(model, std::move(data.labels), g_infer));
}

ad::Var predictor_mse(ad::Tape& tape, const nets::Predictor& predictor, const ad::ParamVars& p,
                      const TrainingPair& pair) {
  ad::Var u = predictor.forward(tape, p, tape.constant(pair.cache), tape.constant(pair.x_q),
                                tape.constant(pair.t_q), tape.constant(pair.r_q), pair.cond);
  ad::Var diff = ad::sub(u, tape.constant(pair.target_u));
  return ad::scale(ad::sum(ad::square(diff)), 1.0 / static_cast<double>(pair.rows()));
}

double predictor_mse_step(const nets::Predictor& predictor, ad::ParameterSet& params, const TrainingPair& pair,
                          ad::OptimizerState& opt) {
  ad::GradResult g = ad::grad(
      [&](ad::Tape& tape, const ad::ParamVars& p) { return predictor_mse(tape, predictor, p, pair); }, params);
  if (!std::isfinite(g.loss)) throw NumericError("loss", "predictor_mse_step: non-finite loss");
  ad::adam_step(params, g.grads, opt);
  return g.loss;
}

std::vector<ad::Var> extract_features(ad::Tape& tape, const nets::VelocityModel& extractor,
                                      const ad::ParameterSet& params, ad::Var x, ad::Var t, ad::Var r,
                                      const nets::ConditionBatch& c, const std::vector<std::size_t>& taps) {
  const std::size_t depth = extractor.config().depth;
  require(!taps.empty(), "extract_features: no taps");
  for (std::size_t k : taps)
    require(k >= 1 && k <= depth,
            "extract_features: tap " + std::to_string(k) + " outside depth " + std::to_string(depth));
  const ad::ParamVars p = ad::bind(tape, params, false);
  std::vector<ad::Var> hidden;
  extractor.forward(tape, p, x, t, r, c, &hidden);
  std::vector<ad::Var> out;
  for (std::size_t k : taps) out.push_back(hidden[k - 1]);
  return out;
}

std::vector<ad::Tensor> extract_features(const nets::VelocityModel& extractor, const ad::ParameterSet& params,
                                         const ad::Tensor& x, const ad::Tensor& t, const ad::Tensor& r,
                                         const nets::ConditionBatch& c, const std::vector<std::size_t>& taps) {
  ad::Tape tape;
  std::vector<ad::Tensor> out;
  for (const ad::Var& f : extract_features(tape, extractor, params, tape.constant(x), tape.constant(t),
                                           tape.constant(r), c, taps))
    out.push_back(f.value());
  return out;
}

double discriminator_hinge(double real_score, double fake_score) {
  return std::max(0.0, 1.0 - real_score) + std::max(0.0, 1.0 + fake_score);
}

GanReport gan_step(const nets::Predictor& predictor, ad::ParameterSet& pparams, ad::OptimizerState& popt,
                   const Adversary& adv, const nets::VelocityModel& extractor, const ad::ParameterSet& eparams,
                   const TrainingPair& pair, double lambda_adv) {
  require(adv.model && adv.params && adv.spectral && adv.opt, "gan_step: incomplete discriminator");
  require(lambda_adv >= 0.0, "gan_step: lambda_adv must be >= 0");
  const std::vector<std::size_t>& taps = adv.model->config().scales;
  const std::size_t n = pair.rows();
  // Features of the landed states are taken at the instantaneous pair (r_q, r_q).
  const ad::Tensor& t_feat = pair.r_q;
  GanReport rep;

  // Predictor update against the current discriminator.
  ad::GradResult gp = ad::grad(
      [&](ad::Tape& tape, const ad::ParamVars& p) {
        ad::Var mse = predictor_mse(tape, predictor, p, pair);
        rep.mse = mse.value().item();
        if (lambda_adv == 0.0) return mse;
        ad::Var u = predictor.forward(tape, p, tape.constant(pair.cache), tape.constant(pair.x_q),
                                      tape.constant(pair.t_q), tape.constant(pair.r_q), pair.cond);
        ad::Var x_pred = land(tape, pair.x_q, pair.t_q, pair.r_q, u);
        const auto feats = extract_features(tape, extractor, eparams, x_pred, tape.constant(t_feat),
                                            tape.constant(t_feat), pair.cond, taps);
        const ad::ParamVars d = ad::bind(tape, *adv.params, false);
        ad::Var score = adv.model->forward(tape, d, feats, *adv.spectral, false);
        return ad::add(mse, ad::scale(mean_hinge(tape, score, ad::Tensor({n, 1}, 1.0)), lambda_adv));
      },
      pparams);
  if (!std::isfinite(gp.loss)) throw NumericError("loss", "gan_step: non-finite predictor loss");
  rep.loss_p = gp.loss;
  ad::adam_step(pparams, gp.grads, popt);

  // Discriminator update: targets are real, the refreshed prediction is fake.
  const ad::Tensor u_pred = [&] {
    ad::Tape tape;
    const ad::ParamVars p = ad::bind(tape, pparams, false);
    return predictor
        .forward(tape, p, tape.constant(pair.cache), tape.constant(pair.x_q), tape.constant(pair.t_q),
                 tape.constant(pair.r_q), pair.cond)
        .value();
  }();
  const ad::Tensor interval = pair.t_q - pair.r_q;
  auto landed = [&](const ad::Tensor& u) {
    ad::Tensor x = pair.x_q;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) x.at(i, j) -= interval[i] * u.at(i, j);
    return x;
  };
  const auto real_f = extract_features(extractor, eparams, landed(pair.target_u), t_feat, t_feat, pair.cond, taps);
  const auto fake_f = extract_features(extractor, eparams, landed(u_pred), t_feat, t_feat, pair.cond, taps);
  std::vector<ad::Tensor> both;
  for (std::size_t k = 0; k < taps.size(); ++k) both.push_back(stack_rows(real_f[k], fake_f[k]));
  ad::Tensor sign({2 * n, 1}, 1.0);
  for (std::size_t i = n; i < 2 * n; ++i) sign[i] = -1.0;

  // The power iteration advances on a copy and is committed with the step.
  nets::SpectralState sn = *adv.spectral;
  ad::Tensor scores;
  ad::GradResult gd = ad::grad(
      [&](ad::Tape& tape, const ad::ParamVars& d) {
        std::vector<ad::Var> fv;
        for (const auto& f : both) fv.push_back(tape.constant(f));
        sn = *adv.spectral;
        ad::Var s = adv.model->forward(tape, d, fv, sn, true);
        scores = s.value();
        return ad::scale(mean_hinge(tape, s, sign), 2.0);
      },
      *adv.params);
  rep.d_real_score = mean_of(scores, 0, n);
  rep.d_fake_score = mean_of(scores, n, 2 * n);
  if (!scores.all_finite() || !std::isfinite(gd.loss))
    throw NumericError("discriminator", "gan_step: non-finite discriminator scores");
  rep.loss_d = gd.loss;
  ad::adam_step(*adv.params, gd.grads, *adv.opt);
  *adv.spectral = std::move(sn);
  return rep;
}

PredictorTrainResult train_predictor(const nets::VelocityModel& model, const ad::ParameterSet& mparams,
                                     const nets::Predictor& predictor, ad::ParameterSet& pparams,
                                     const Adversary& adv, const flow::ToyDistribution& dist,
                                     const PredictorTrainConfig& cfg, std::optional<double> g_infer,
                                     std::uint64_t seed, const GanReportFn& on_gan) {
  cfg.validate();
  Rng rng(derive_seed(seed, "predictor-train"));
  ad::OptimizerState popt(ad::AdamHyper{cfg.lr_predictor});
  PredictorTrainResult out;
  out.mse_losses.reserve(cfg.mse_iters);
  for (std::size_t it = 0; it < cfg.mse_iters; ++it)
    out.mse_losses.push_back(
        predictor_mse_step(predictor, pparams, build_training_pair(model, mparams, dist, cfg, g_infer, rng), popt));
  if (cfg.gan_iters == 0) return out;
  require(adv.model && adv.params && adv.spectral && adv.opt, "train_predictor: no discriminator");
  adv.opt->hyper.lr = cfg.lr_discriminator;
  for (std::size_t it = 0; it < cfg.gan_iters; ++it) {
    const TrainingPair pair = build_training_pair(model, mparams, dist, cfg, g_infer, rng);
    try {
      GanReport r = gan_step(predictor, pparams, popt, adv, model, mparams, pair, cfg.lambda_adv);
      r.iteration = it;
      out.gan.push_back(r);
      if (on_gan) on_gan(r);
    } catch (const NumericError& e) {
      out.aborted = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
  }
  return out;
}

ValidationMse validation_mse(const nets::VelocityModel& model, const ad::ParameterSet& mparams,
                             const nets::Predictor& predictor, const ad::ParameterSet& pparams,
                             const flow::ToyDistribution& dist, const PredictorTrainConfig& cfg, double delta,
                             std::size_t rows, std::optional<double> g_infer, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, "predictor-validation"));
  flow::LabeledSamples data = flow::sample_labeled(dist, rows, rng.engine()());
  const ad::Tensor eps = rng.normal_tensor(data.x.shape());
  ad::Tensor t, r;
  draw_origins(cfg.grid_steps, rows, rng, t, r);
  const TrainingPair pair = make_training_pair(model, mparams, data.x, eps, t, r, ad::Tensor({rows, 1}, delta),
                                               batch_condition(model, std::move(data.labels), g_infer));
  ad::Tape tape;
  const ad::ParamVars p = ad::bind(tape, pparams, false);
  ValidationMse v;
  v.predictor = predictor_mse(tape, predictor, p, pair).value().item();
  double acc = 0.0;
  for (std::size_t i = 0; i < pair.cache.size(); ++i) acc += std::pow(pair.cache[i] - pair.target_u[i], 2);
  v.naive = acc / static_cast<double>(rows);
  return v;
}

void write_gan_csv_header(std::ostream& os) { os << "iteration,loss_P,loss_D,d_real_score,d_fake_score\n"; }

void write_gan_csv_row(std::ostream& os, const GanReport& r) {
  os << r.iteration << ',' << std::setprecision(17) << r.loss_p << ',' << r.loss_d << ',' << r.d_real_score
     << ',' << r.d_fake_score << '\n';
}

}  // namespace disca::ptrain
