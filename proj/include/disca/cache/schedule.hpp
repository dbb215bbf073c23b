#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "disca/flow/time_pair.hpp"

namespace disca::cache {

enum class StepMode { kFull, kPredict };

const char* to_string(StepMode m);

struct ScheduledStep {
  flow::TimePair pair;
  StepMode mode = StepMode::kFull;

  friend bool operator==(const ScheduledStep&, const ScheduledStep&) = default;
};

/// Decreasing-t walk from 1 to 0. Each FULL step refreshes the cache; each
/// PREDICT step is served from it. At most `max_interval - 1` PREDICT steps
/// follow a FULL one.
struct StepSchedule {
  std::vector<ScheduledStep> steps;
  std::size_t max_interval = 1;
  std::size_t warmup_full = 0;

  std::size_t size() const { return steps.size(); }
  std::size_t full_count() const;
  std::size_t predict_count() const;

  friend bool operator==(const StepSchedule&, const StepSchedule&) = default;
};

// Throws ContractViolation naming the first offending step index: pairs must
// be valid and contiguous, the first `warmup_full` steps (and at least step 0)
// FULL, and no PREDICT run longer than max_interval - 1.
void validate(const StepSchedule& s);

// Uniform pairs on `total_steps` intervals. Without `modes`: `warmup_full`
// FULL steps, then blocks of one FULL and N - 1 PREDICT, truncated at the end.
StepSchedule plan_schedule(std::size_t total_steps, std::size_t max_interval, std::size_t warmup_full,
                           const std::optional<std::vector<StepMode>>& modes = std::nullopt);

// {"max_interval": N, "warmup_full": W, "steps": [{"t":..,"r":..,"mode":"FULL"|"PREDICT"}, ...]}
std::string to_json(const StepSchedule& s);
// Parses and validates. Throws ConfigError on malformed JSON or fields.
StepSchedule schedule_from_json(const std::string& text);
StepSchedule load_schedule(const std::string& path);

}  // namespace disca::cache
