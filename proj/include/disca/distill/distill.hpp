#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "disca/ad/optim.hpp"
#include "disca/ad/params.hpp"
#include "disca/flow/path.hpp"
#include "disca/flow/time_pair.hpp"
#include "disca/flow/toy_data.hpp"
#include "disca/nets/velocity_model.hpp"
#include "disca/rng.hpp"

namespace disca::distill {

struct CfgConfig {
  double g_min = 1.0;
  double g_max = 8.0;
  void validate() const;
};

struct RestrictConfig {
  // Largest interval t - r drawn during mean-velocity distillation, in (0, 1].
  double restrict_factor = 1.0;
  void validate() const;
};

struct IntervalStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

struct DistillBatchReport {
  double loss = 0.0;
  IntervalStats interval_stats;
  double grad_norm = 0.0;  // before clipping
};

// (t, max(0, t - interval)).
flow::TimePair restricted_pair(double t, double interval);
// I ~ U(0, R), t ~ U(0, 1), r = max(0, t - I).
flow::TimePair sample_t_r(const RestrictConfig& cfg, Rng& rng);

// ---- guidance distillation ------------------------------------------------

struct CfgTeacherOutput {
  ad::Tensor v_c;
  ad::Tensor v_uc;
};
// Conditional and unconditional instantaneous velocity at (x, t) for the
// class labels in `c`; `t` is a [B,1] column.
using CfgTeacher =
    std::function<CfgTeacherOutput(const ad::Tensor& x, const ad::Tensor& t, const nets::ConditionBatch& c)>;

CfgTeacher model_cfg_teacher(const nets::VelocityModel& model, const ad::ParameterSet& params);

// Row-wise g * v_c + (1 - g) * v_uc.
ad::Tensor cfg_mixture(const ad::Tensor& v_c, const ad::Tensor& v_uc, const std::vector<double>& g);

// A path batch with class labels from the data and one guidance scale per
// row drawn from U(g_min, g_max).
struct CfgBatch {
  flow::PathBatch path;
  nets::ConditionBatch cond;
};
CfgBatch draw_cfg_batch(const flow::ToyDistribution& dist, std::size_t n, const CfgConfig& cfg,
                        Rng& rng);

// One optimizer step of the student on |v_student(x_t, t, c, g) - v_target|^2.
DistillBatchReport cfg_distill_step(const nets::VelocityModel& student, ad::ParameterSet& params,
                                    const CfgTeacher& teacher, const CfgBatch& batch,
                                    ad::OptimizerState& opt);

struct CfgDistillConfig {
  CfgConfig cfg;
  std::size_t iters = 3000;
  std::size_t batch = 256;
  double lr = 1e-3;
  bool cosine_decay = true;
};

using ReportFn = std::function<void(std::size_t iter, const DistillBatchReport&)>;

std::vector<DistillBatchReport> distill_cfg(const nets::VelocityModel& student,
                                            ad::ParameterSet& params, const CfgTeacher& teacher,
                                            const flow::ToyDistribution& dist,
                                            const CfgDistillConfig& cfg, std::uint64_t seed,
                                            const ReportFn& report = {});

// ---- mean-velocity distillation ------------------------------------------

// u(x, r, t) on a tape; x is [B,d], t and r are [B,1].
using MeanModelFn = std::function<ad::Var(ad::Tape&, ad::Var x, ad::Var t, ad::Var r)>;

MeanModelFn bind_mean_model(const nets::VelocityModel& model, const ad::ParamVars& p,
                            const nets::ConditionBatch& c);

// v - (t - r) du/dt with du/dt the jvp of u along (v, 0, 1). Rows with t == r
// return v unchanged.
ad::Tensor meanflow_target(const MeanModelFn& u, const ad::Tensor& x_t, const ad::Tensor& t,
                           const ad::Tensor& r, const ad::Tensor& v);
ad::Tensor meanflow_target(const nets::VelocityModel& model, const ad::ParameterSet& params,
                           const ad::Tensor& x_t, const ad::Tensor& t, const ad::Tensor& r,
                           const ad::Tensor& v, const nets::ConditionBatch& c);

// Instantaneous velocity of a frozen teacher at per-row times.
using InstantTeacher =
    std::function<ad::Tensor(const ad::Tensor& x, const ad::Tensor& t, const nets::ConditionBatch& c)>;
InstantTeacher model_instant_teacher(const nets::VelocityModel& model, const ad::ParameterSet& params);

struct MeanFlowBatch {
  ad::Tensor xt;
  ad::Tensor t;  // [B,1]
  ad::Tensor r;  // [B,1]
  ad::Tensor v;  // teacher velocity at (xt, t)
  nets::ConditionBatch cond;
};

// Pairs from sample_t_r; `g_infer` is attached to the condition when the
// teacher or student has a guidance input.
MeanFlowBatch draw_meanflow_batch(const flow::ToyDistribution& dist, std::size_t n,
                                  const RestrictConfig& restrict, const InstantTeacher& teacher,
                                  std::optional<double> g_infer, Rng& rng);

// Loss |u(x_t, r, t) - sg(u_tgt)|^2 and its parameter gradient.
ad::GradResult meanflow_grad(const nets::VelocityModel& model, const ad::ParameterSet& params,
                             const MeanFlowBatch& batch);

// One optimizer step on |u(x_t, r, t) - sg(u_tgt)|^2 (squared norm per row,
// averaged). `clip_norm` <= 0 disables gradient clipping.
DistillBatchReport meanflow_distill_step(const nets::VelocityModel& model, ad::ParameterSet& params,
                                         const MeanFlowBatch& batch, const RestrictConfig& restrict,
                                         ad::OptimizerState& opt, double clip_norm = 1.0);

struct MeanFlowConfig {
  RestrictConfig restrict;
  std::size_t iters = 4000;
  std::size_t batch = 256;
  double lr = 1e-3;
  double clip_norm = 1.0;
  // Guidance scale fed to the frozen guidance-distilled teacher (and to the
  // student, which inherits its guidance input).
  double g_infer = 1.0;
  bool cosine_decay = true;
};

std::vector<DistillBatchReport> distill_meanflow(const nets::VelocityModel& model,
                                                 ad::ParameterSet& params,
                                                 const InstantTeacher& teacher,
                                                 const flow::ToyDistribution& dist,
                                                 const MeanFlowConfig& cfg, std::uint64_t seed,
                                                 const ReportFn& report = {});

}  // namespace disca::distill
