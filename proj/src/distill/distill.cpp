#include "disca/distill/distill.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "disca/errors.hpp"
#include "disca/nets/layers.hpp"

namespace disca::distill {

void CfgConfig::validate() const {
  require(g_min > 0.0 && g_min <= g_max, "cfg: need 0 < g_min <= g_max");
}

void RestrictConfig::validate() const {
  require(restrict_factor > 0.0 && restrict_factor <= 1.0, "restrict_factor must lie in (0, 1]");
}

flow::TimePair restricted_pair(double t, double interval) {
  return {t, std::max(0.0, t - interval)};
}

flow::TimePair sample_t_r(const RestrictConfig& cfg, Rng& rng) {
  cfg.validate();
  const double interval = rng.uniform(0.0, cfg.restrict_factor);
  const double t = rng.uniform();
  return restricted_pair(t, interval);
}

namespace {

IntervalStats interval_stats(const ad::Tensor& t, const ad::Tensor& r) {
  IntervalStats s{std::numeric_limits<double>::infinity(), 0.0, 0.0};
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = t[i] - r[i];
    s.min = std::min(s.min, d);
    s.max = std::max(s.max, d);
    s.mean += d;
  }
  s.mean /= static_cast<double>(t.size());
  return s;
}

ad::Var row_mean_sq(ad::Var diff) {
  return ad::scale(ad::sum(ad::square(diff)), 1.0 / static_cast<double>(diff.value().rows()));
}

void require_finite(const ad::Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError("teacher", std::string(what) + " produced a non-finite value");
}

}  // namespace

// ---- guidance distillation ------------------------------------------------

CfgTeacher model_cfg_teacher(const nets::VelocityModel& model, const ad::ParameterSet& params) {
  require(!model.config().accepts_r && !model.config().cfg_embed,
          "cfg teacher must be a plain instantaneous model");
  return [&model, &params](const ad::Tensor& x, const ad::Tensor& t, const nets::ConditionBatch& c) {
    const nets::ConditionBatch plain = c.without_cfg();
    return CfgTeacherOutput{model.eval(params, x, t, nullptr, plain),
                            model.eval(params, x, t, nullptr, plain.as_null())};
  };
}

ad::Tensor cfg_mixture(const ad::Tensor& v_c, const ad::Tensor& v_uc, const std::vector<double>& g) {
  ad::require_same_shape(v_c, v_uc, "cfg_mixture");
  require(g.size() == v_c.rows(), "cfg_mixture: one guidance scale per row");
  ad::Tensor out = ad::Tensor::zeros_like(v_c);
  for (std::size_t i = 0; i < v_c.rows(); ++i)
    for (std::size_t j = 0; j < v_c.cols(); ++j)
      out.at(i, j) = g[i] * v_c.at(i, j) + (1.0 - g[i]) * v_uc.at(i, j);
  return out;
}

CfgBatch draw_cfg_batch(const flow::ToyDistribution& dist, std::size_t n, const CfgConfig& cfg,
                        Rng& rng) {
  cfg.validate();
  flow::LabeledPath lp = flow::draw_path_batch(dist, n, 0.0, rng);
  lp.cond.cfg_scales.resize(n);
  for (double& g : lp.cond.cfg_scales) g = rng.uniform(cfg.g_min, cfg.g_max);
  return {std::move(lp.path), std::move(lp.cond)};
}

DistillBatchReport cfg_distill_step(const nets::VelocityModel& student, ad::ParameterSet& params,
                                    const CfgTeacher& teacher, const CfgBatch& batch,
                                    ad::OptimizerState& opt) {
  require(student.config().cfg_embed, "cfg_distill_step: student has no guidance input");
  require(!student.config().accepts_r, "cfg_distill_step: student must be instantaneous");
  require(batch.cond.has_cfg(), "cfg_distill_step: batch carries no guidance scales");
  flow::check_path(batch.path);
  const CfgTeacherOutput tv = teacher(batch.path.xt, batch.path.t, batch.cond);
  require_finite(tv.v_c, "conditional branch");
  require_finite(tv.v_uc, "unconditional branch");
  const ad::Tensor target = cfg_mixture(tv.v_c, tv.v_uc, batch.cond.cfg_scales);

  ad::GradResult g = ad::grad(
      [&](ad::Tape& tape, const ad::ParamVars& p) {
        ad::Var v = student.forward(tape, p, tape.constant(batch.path.xt), tape.constant(batch.path.t),
                                    std::nullopt, batch.cond);
        return row_mean_sq(ad::sub(v, tape.constant(target)));
      },
      params);
  DistillBatchReport rep;
  rep.loss = g.loss;
  rep.grad_norm = ad::global_norm(g.grads);
  ad::adam_step(params, g.grads, opt);
  return rep;
}

std::vector<DistillBatchReport> distill_cfg(const nets::VelocityModel& student,
                                            ad::ParameterSet& params, const CfgTeacher& teacher,
                                            const flow::ToyDistribution& dist,
                                            const CfgDistillConfig& cfg, std::uint64_t seed,
                                            const ReportFn& report) {
  require(cfg.iters > 0 && cfg.batch > 0, "distill_cfg: iters and batch must be positive");
  Rng rng(derive_seed(seed, "cfg-distill"));
  ad::OptimizerState opt(ad::AdamHyper{cfg.lr});
  std::vector<DistillBatchReport> out;
  out.reserve(cfg.iters);
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    const CfgBatch b = draw_cfg_batch(dist, cfg.batch, cfg.cfg, rng);
    if (cfg.cosine_decay) opt.hyper.lr = ad::cosine_lr(cfg.lr, it, cfg.iters);
    out.push_back(cfg_distill_step(student, params, teacher, b, opt));
    if (report) report(it, out.back());
  }
  return out;
}

// ---- mean-velocity distillation ------------------------------------------

MeanModelFn bind_mean_model(const nets::VelocityModel& model, const ad::ParamVars& p,
                            const nets::ConditionBatch& c) {
  require(model.config().accepts_r, "mean-velocity model must take r");
  return [&model, &p, &c](ad::Tape& tape, ad::Var x, ad::Var t, ad::Var r) {
    return model.forward(tape, p, x, t, r, c);
  };
}

namespace {

// Forward pass with tangents (v, 1, 0) on x, t, r; returns u and du/dt.
struct Jvp {
  ad::Var u;
  ad::Tensor dudt;
};

Jvp forward_with_tangent(ad::Tape& tape, const MeanModelFn& u, const ad::Tensor& x_t,
                         const ad::Tensor& t, const ad::Tensor& r, const ad::Tensor& v) {
  ad::require_same_shape(x_t, v, "meanflow: v");
  require(t.rank() == 2 && t.cols() == 1 && t.rows() == x_t.rows() && r.shape() == t.shape(),
          "meanflow: t and r must be [B,1] columns");
  ad::Var x = tape.input(x_t, v);
  ad::Var tv = tape.input(t, ad::Tensor(t.shape(), 1.0));
  ad::Var rv = tape.input(r);
  ad::Var out = u(tape, x, tv, rv);
  require(out.shape() == x_t.shape(), "meanflow: model output shape differs from x");
  return {out, out.tangent() ? *out.tangent() : ad::Tensor::zeros_like(out.value())};
}

ad::Tensor target_from(const ad::Tensor& v, const ad::Tensor& dudt, const ad::Tensor& t,
                       const ad::Tensor& r) {
  ad::Tensor out = v;
  const std::size_t d = v.cols();
  for (std::size_t i = 0; i < v.rows(); ++i) {
    const double interval = t[i] - r[i];
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = v.at(i, j) - interval * dudt.at(i, j);
  }
  return out;
}

}  // namespace

ad::Tensor meanflow_target(const MeanModelFn& u, const ad::Tensor& x_t, const ad::Tensor& t,
                           const ad::Tensor& r, const ad::Tensor& v) {
  ad::Tape tape;
  const Jvp j = forward_with_tangent(tape, u, x_t, t, r, v);
  return target_from(v, j.dudt, t, r);
}

ad::Tensor meanflow_target(const nets::VelocityModel& model, const ad::ParameterSet& params,
                           const ad::Tensor& x_t, const ad::Tensor& t, const ad::Tensor& r,
                           const ad::Tensor& v, const nets::ConditionBatch& c) {
  ad::Tape tape;
  const ad::ParamVars p = ad::bind(tape, params, false);
  const Jvp j = forward_with_tangent(tape, bind_mean_model(model, p, c), x_t, t, r, v);
  return target_from(v, j.dudt, t, r);
}

InstantTeacher model_instant_teacher(const nets::VelocityModel& model, const ad::ParameterSet& params) {
  require(!model.config().accepts_r, "instant teacher must be an instantaneous model");
  return [&model, &params](const ad::Tensor& x, const ad::Tensor& t, const nets::ConditionBatch& c) {
    return model.eval(params, x, t, nullptr, c);
  };
}

MeanFlowBatch draw_meanflow_batch(const flow::ToyDistribution& dist, std::size_t n,
                                  const RestrictConfig& restrict, const InstantTeacher& teacher,
                                  std::optional<double> g_infer, Rng& rng) {
  restrict.validate();
  flow::LabeledSamples data = flow::sample_labeled(dist, n, rng.engine()());
  const ad::Tensor x1 = rng.normal_tensor(data.x.shape());
  MeanFlowBatch b;
  b.t = ad::Tensor({n, 1});
  b.r = ad::Tensor({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const flow::TimePair p = sample_t_r(restrict, rng);
    b.t[i] = p.t;
    b.r[i] = p.r;
  }
  b.xt = flow::interpolate(data.x, x1, b.t);
  b.cond.class_ids = std::move(data.labels);
  if (g_infer) b.cond = b.cond.with_cfg(*g_infer);
  b.v = teacher(b.xt, b.t, b.cond);
  require_finite(b.v, "instantaneous velocity");
  return b;
}

ad::GradResult meanflow_grad(const nets::VelocityModel& model, const ad::ParameterSet& params,
                             const MeanFlowBatch& batch) {
  ad::Tape tape;
  const ad::ParamVars p = ad::bind(tape, params, true);
  const Jvp j = forward_with_tangent(tape, bind_mean_model(model, p, batch.cond), batch.xt, batch.t,
                                     batch.r, batch.v);
  // The target is pushed as a constant: no gradient reaches it.
  ad::Var target = tape.constant(target_from(batch.v, j.dudt, batch.t, batch.r));
  ad::Var loss = row_mean_sq(ad::sub(j.u, target));
  tape.backward(loss);
  ad::GradResult out;
  out.loss = loss.value().item();
  for (const auto& [name, var] : p) out.grads.emplace(name, tape.grad(var));
  return out;
}

DistillBatchReport meanflow_distill_step(const nets::VelocityModel& model, ad::ParameterSet& params,
                                         const MeanFlowBatch& batch, const RestrictConfig& restrict,
                                         ad::OptimizerState& opt, double clip_norm) {
  DistillBatchReport rep;
  rep.interval_stats = interval_stats(batch.t, batch.r);
  if (rep.interval_stats.max > restrict.restrict_factor)
    throw std::logic_error("meanflow batch holds an interval above the restrict factor");
  ad::GradResult g = meanflow_grad(model, params, batch);
  rep.loss = g.loss;
  rep.grad_norm = clip_norm > 0.0 ? ad::clip_global_norm(g.grads, clip_norm) : ad::global_norm(g.grads);
  ad::adam_step(params, g.grads, opt);
  return rep;
}

std::vector<DistillBatchReport> distill_meanflow(const nets::VelocityModel& model,
                                                 ad::ParameterSet& params,
                                                 const InstantTeacher& teacher,
                                                 const flow::ToyDistribution& dist,
                                                 const MeanFlowConfig& cfg, std::uint64_t seed,
                                                 const ReportFn& report) {
  require(cfg.iters > 0 && cfg.batch > 0, "distill_meanflow: iters and batch must be positive");
  Rng rng(derive_seed(seed, "meanflow-distill"));
  ad::OptimizerState opt(ad::AdamHyper{cfg.lr});
  const std::optional<double> g =
      model.config().cfg_embed ? std::optional<double>(cfg.g_infer) : std::nullopt;
  std::vector<DistillBatchReport> out;
  out.reserve(cfg.iters);
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    const MeanFlowBatch b = draw_meanflow_batch(dist, cfg.batch, cfg.restrict, teacher, g, rng);
    if (cfg.cosine_decay) opt.hyper.lr = ad::cosine_lr(cfg.lr, it, cfg.iters);
    out.push_back(meanflow_distill_step(model, params, b, cfg.restrict, opt, cfg.clip_norm));
    if (report) report(it, out.back());
  }
  return out;
}

}  // namespace disca::distill
