#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "disca/bench/checkpoint.hpp"
#include "disca/bench/config.hpp"
#include "disca/cache/cached_sampler.hpp"
#include "disca/ptrain/predictor_train.hpp"

namespace disca::bench {

// Progress lines from long stages ("stage: message").
using LogFn = std::function<void(const std::string&)>;

Digest digest(const Checkpoint& c);

struct LoadedModel {
  nets::VelocityModel model;
  ad::ParameterSet params;
};
LoadedModel velocity_model_of(const Checkpoint& c);

// Pipeline stages. Each returns a checkpoint naming its parent by digest.
Checkpoint train_base(const ExperimentConfig& cfg, const LogFn& log = {});
Checkpoint distill_guidance(const ExperimentConfig& cfg, const Checkpoint& base, const LogFn& log = {});
// Parent is the guidance-distilled model, or the base model for tasks without classes.
Checkpoint distill_mean(const ExperimentConfig& cfg, const Checkpoint& parent, const LogFn& log = {});

struct PredictorStage {
  Checkpoint predictor;
  Checkpoint discriminator;
  ptrain::PredictorTrainResult training;
};
// Sees the discriminator after every adversarial iteration.
using DiscriminatorObserver = std::function<void(const ptrain::GanReport&, const nets::Discriminator&,
                                                 const ad::ParameterSet&, const nets::SpectralState&)>;
// Throws NumericError if the adversarial phase stops on a non-finite value.
PredictorStage train_predictor_stage(const ExperimentConfig& cfg, const Checkpoint& meanflow, const LogFn& log = {},
                                     const DiscriminatorObserver& observe = {});

struct MetricsRecord {
  std::string run_id;
  std::string strategy;
  std::size_t full_evals = 0;
  std::size_t predictor_evals = 0;
  double w2 = 0.0;
  double energy_distance = 0.0;
  double wall_clock_ms = 0.0;
  std::size_t cache_bytes_peak = 0;
};

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const MetricsRecord& r);

// Seeded noise, labels and an independent data sample of bench.samples rows.
struct BenchSet {
  ad::Tensor noise;
  nets::ConditionBatch cond;  // class labels only
  ad::Tensor reference;
};
BenchSet bench_set(const ExperimentConfig& cfg);

struct Generated {
  ad::Tensor x0;
  cache::NfeReport report;
  double wall_clock_ms = 0.0;
};

// Mean-velocity sampling of the bench noise in fixed-size row chunks spread
// over `threads` workers. strategy "none" runs every step of the schedule in
// full; otherwise the schedule is walked with the cache strategy.
Generated generate(const ExperimentConfig& cfg, const LoadedModel& mean, const cache::StepSchedule& schedule,
                   const std::string& strategy, const std::optional<cache::PredictorHandle>& predictor,
                   const BenchSet& set, std::size_t threads);

// Euler sampling of an instantaneous model (guidance input fed g_infer).
Generated generate_euler(const ExperimentConfig& cfg, const LoadedModel& instant, std::size_t steps,
                         const BenchSet& set, std::size_t threads);

cache::StepSchedule bench_schedule(const ExperimentConfig& cfg);

MetricsRecord score(const std::string& run_id, const std::string& strategy, const Generated& g,
                    const ad::Tensor& reference);

struct BenchInputs {
  const Checkpoint* meanflow = nullptr;
  const Checkpoint* predictor = nullptr;  // required by "disca"
  const Checkpoint* teacher = nullptr;    // optional Euler reference row
};

// One record per configured strategy (plus the teacher row when given).
// Optional `samples` receives strategy,x,y rows for plotting.
std::vector<MetricsRecord> run_bench(const ExperimentConfig& cfg, const BenchInputs& in, std::size_t threads,
                                     std::ostream* samples = nullptr, const LogFn& log = {});

struct PipelineResult {
  std::vector<MetricsRecord> records;
  std::vector<std::string> files;
};

// Every stage in order, writing checkpoints, gan.csv and metrics.csv to `out_dir`.
PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir, std::size_t threads,
                            const LogFn& log = {});

}  // namespace disca::bench
