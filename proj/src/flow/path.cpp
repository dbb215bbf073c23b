#include "disca/flow/path.hpp"

#include "disca/errors.hpp"
#include "disca/nets/layers.hpp"

namespace disca::flow {

ad::Tensor interpolate(const ad::Tensor& x0, const ad::Tensor& x1, const ad::Tensor& t) {
  ad::require_same_shape(x0, x1, "interpolate");
  require(t.rank() == 2 && t.cols() == 1 && t.rows() == x0.rows(),
          "interpolate: t must be a [B,1] column matching the batch");
  ad::Tensor out = ad::Tensor::zeros_like(x0);
  const std::size_t d = x0.cols();
  for (std::size_t i = 0; i < x0.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      out.at(i, j) = (1.0 - t[i]) * x0.at(i, j) + t[i] * x1.at(i, j);
  return out;
}

PathBatch make_path(ad::Tensor x0, ad::Tensor x1, ad::Tensor t) {
  for (double v : t.data()) require(v >= 0.0 && v <= 1.0, "make_path: t outside [0,1]");
  ad::Tensor xt = interpolate(x0, x1, t);
  return {std::move(x0), std::move(x1), std::move(t), std::move(xt)};
}

PathBatch make_path(ad::Tensor x0, ad::Tensor x1, double t) {
  const std::size_t rows = x0.rows();
  return make_path(std::move(x0), std::move(x1), nets::column(rows, t));
}

void check_path(const PathBatch& b) {
  require(b.xt == interpolate(b.x0, b.x1, b.t), "path batch violates x_t = (1-t) x0 + t x1");
}

ad::Var fm_loss(ad::Tape& tape, const nets::VelocityModel& model, const ad::ParamVars& p,
                const PathBatch& batch, const nets::ConditionBatch& c) {
  require(!model.config().accepts_r, "fm_loss: model takes r; flow matching regresses v(x,t)");
  check_path(batch);
  ad::Var v = model.forward(tape, p, tape.constant(batch.xt), tape.constant(batch.t), std::nullopt, c);
  ad::Var target = tape.constant(batch.x1 - batch.x0);
  return ad::scale(ad::sum(ad::square(ad::sub(v, target))), 1.0 / static_cast<double>(batch.rows()));
}

double fm_loss(const nets::VelocityModel& model, const ad::ParameterSet& params,
               const PathBatch& batch, const nets::ConditionBatch& c) {
  ad::Tape tape;
  return fm_loss(tape, model, ad::bind(tape, params, false), batch, c).value().item();
}

LabeledPath draw_path_batch(const ToyDistribution& dist, std::size_t n, double label_dropout,
                            Rng& rng) {
  LabeledSamples data = sample_labeled(dist, n, rng.engine()());
  ad::Tensor x1 = rng.normal_tensor(data.x.shape());
  ad::Tensor t = rng.uniform_tensor({n, 1});
  nets::ConditionBatch c;
  c.class_ids = data.labels;
  for (int& id : c.class_ids)
    if (rng.uniform() < label_dropout) id = nets::kNullClass;
  return {make_path(std::move(data.x), std::move(x1), std::move(t)), std::move(c)};
}

std::vector<double> train_flow_matching(const nets::VelocityModel& model, ad::ParameterSet& params,
                                        const ToyDistribution& dist, const FmTrainConfig& cfg,
                                        std::uint64_t seed, const ProgressFn& progress) {
  require(cfg.iters > 0 && cfg.batch > 0, "train_flow_matching: iters and batch must be positive");
  require(model.config().input_dim == dist.dim(), "train_flow_matching: model/data dimension mismatch");
  Rng rng(derive_seed(seed, "fm-train"));
  ad::OptimizerState opt(ad::AdamHyper{cfg.lr});
  std::vector<double> losses;
  losses.reserve(cfg.iters);
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    LabeledPath b = draw_path_batch(dist, cfg.batch, cfg.label_dropout, rng);
    if (model.config().condition_vocab == 0) b.cond = nets::ConditionBatch::unconditional(cfg.batch);
    ad::GradResult g = ad::grad(
        [&](ad::Tape& tape, const ad::ParamVars& p) { return fm_loss(tape, model, p, b.path, b.cond); },
        params);
    if (cfg.cosine_decay) opt.hyper.lr = ad::cosine_lr(cfg.lr, it, cfg.iters);
    ad::adam_step(params, g.grads, opt);
    losses.push_back(g.loss);
    if (progress) progress(it, g.loss);
  }
  return losses;
}

}  // namespace disca::flow
