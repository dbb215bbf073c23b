#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disca/distill/distill.hpp"
#include "disca/flow/path.hpp"
#include "disca/flow/toy_data.hpp"
#include "disca/nets/discriminator.hpp"
#include "disca/nets/predictor.hpp"
#include "disca/nets/velocity_model.hpp"
#include "disca/ptrain/predictor_train.hpp"

namespace disca::bench {

struct BackboneSpec {
  std::size_t hidden_dim = 64;
  std::size_t depth = 3;
  std::size_t time_embed_dim = 16;
  double time_scale = 1.0;
  std::size_t cfg_hidden = 16;
};

struct ScheduleSpec {
  std::size_t total_steps = 20;
  std::size_t max_interval = 2;
  std::size_t warmup_full = 0;
  // Explicit schedule JSON; when set it replaces the uniform plan. Relative
  // paths resolve against the config file's directory.
  std::string fixture;
};

struct BenchSpec {
  std::size_t samples = 2048;
  // Steps of the Euler reference run of the guidance-distilled teacher.
  std::size_t teacher_steps = 32;
  // Rows per sampling chunk. Fixed so that results do not depend on threads.
  std::size_t chunk_rows = 256;
  // "none" is the uncached sampler; see cache::parse_strategy for the rest.
  std::vector<std::string> strategies = {"none", "naive", "taylor1", "taylor2", "disca"};
};

/// Everything one pipeline run depends on. The seed drives every random
/// stream; the thread count never changes results.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string run_id = "run";
  flow::ToyDistribution data;
  BackboneSpec backbone;
  flow::FmTrainConfig base_train;
  distill::CfgDistillConfig cfg_distill;
  distill::MeanFlowConfig meanflow;
  nets::PredictorConfig predictor;
  nets::DiscriminatorConfig discriminator;  // empty scales: default_scales(depth)
  ptrain::PredictorTrainConfig predictor_train;
  ScheduleSpec schedule;
  BenchSpec bench;
};

// The laptop-sized setup used by the acceptance run.
ExperimentConfig desk_preset();

// Overlays the keys present in `text` on `base`. Unknown keys, wrong types and
// out-of-range values throw ConfigError. Data seed follows the root seed.
ExperimentConfig config_from_json(const std::string& text, const ExperimentConfig& base = desk_preset());
ExperimentConfig load_config(const std::string& path);
std::string to_json(const ExperimentConfig& c);
// Throws ConfigError.
void validate(const ExperimentConfig& c);

// Instantaneous backbone for the task (input width and class count from the data).
nets::VelocityModelConfig base_model_config(const ExperimentConfig& c);
nets::PredictorConfig predictor_config(const ExperimentConfig& c);
nets::DiscriminatorConfig discriminator_config(const ExperimentConfig& c);

std::string to_json(const nets::VelocityModelConfig& c);
std::string to_json(const nets::PredictorConfig& c);
std::string to_json(const nets::DiscriminatorConfig& c);
nets::VelocityModelConfig velocity_config_from_json(const std::string& text);
nets::PredictorConfig predictor_config_from_json(const std::string& text);
nets::DiscriminatorConfig discriminator_config_from_json(const std::string& text);

}  // namespace disca::bench
