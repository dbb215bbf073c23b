#include "disca/cache/schedule.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "disca/errors.hpp"
#include "disca/flow/sampler.hpp"

namespace disca::cache {

namespace {

std::string at_step(std::size_t i) { return "schedule step " + std::to_string(i) + ": "; }

StepMode parse_mode(const std::string& s) {
  if (s == "FULL") return StepMode::kFull;
  if (s == "PREDICT") return StepMode::kPredict;
  throw ConfigError("schedule: unknown mode '" + s + "'");
}

}  // namespace

const char* to_string(StepMode m) { return m == StepMode::kFull ? "FULL" : "PREDICT"; }

std::size_t StepSchedule::full_count() const {
  return static_cast<std::size_t>(
      std::count_if(steps.begin(), steps.end(), [](const auto& s) { return s.mode == StepMode::kFull; }));
}

std::size_t StepSchedule::predict_count() const { return steps.size() - full_count(); }

void validate(const StepSchedule& s) {
  require(!s.steps.empty(), "schedule: no steps");
  require(s.max_interval >= 1, "schedule: max_interval must be >= 1");
  require(s.warmup_full < s.steps.size(), "schedule: warmup_full must be below the step count");
  std::size_t run = 0;
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    const ScheduledStep& st = s.steps[i];
    require(st.pair.valid(), at_step(i) + "invalid time pair");
    require(i == 0 || s.steps[i - 1].pair.r == st.pair.t, at_step(i) + "not contiguous with the previous step");
    if (st.mode == StepMode::kFull) {
      run = 0;
      continue;
    }
    require(i > 0, at_step(i) + "first step must be FULL");
    require(i >= s.warmup_full, at_step(i) + "PREDICT inside the warm-up");
    require(++run <= s.max_interval - 1,
            at_step(i) + "more than " + std::to_string(s.max_interval - 1) + " consecutive PREDICT steps");
  }
}

StepSchedule plan_schedule(std::size_t total_steps, std::size_t max_interval, std::size_t warmup_full,
                           const std::optional<std::vector<StepMode>>& modes) {
  require(total_steps >= 1, "plan_schedule: total_steps must be >= 1");
  require(max_interval >= 1, "plan_schedule: N must be >= 1");
  require(warmup_full < total_steps, "plan_schedule: warmup_full must be below total_steps");
  require(!modes || modes->size() == total_steps,
          "plan_schedule: explicit mode list has " + std::to_string(modes ? modes->size() : 0) +
              " entries for " + std::to_string(total_steps) + " steps");
  StepSchedule s;
  s.max_interval = max_interval;
  s.warmup_full = warmup_full;
  const auto pairs = flow::uniform_pairs(total_steps);
  for (std::size_t i = 0; i < total_steps; ++i) {
    StepMode m;
    if (modes)
      m = (*modes)[i];
    else
      m = (i < warmup_full || (i - warmup_full) % max_interval == 0) ? StepMode::kFull : StepMode::kPredict;
    s.steps.push_back({pairs[i], m});
  }
  validate(s);
  return s;
}

std::string to_json(const StepSchedule& s) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& st : s.steps) steps.push_back({{"t", st.pair.t}, {"r", st.pair.r}, {"mode", to_string(st.mode)}});
  nlohmann::json j = {{"max_interval", s.max_interval}, {"warmup_full", s.warmup_full}, {"steps", steps}};
  return j.dump(2);
}

StepSchedule schedule_from_json(const std::string& text) {
  StepSchedule s;
  try {
    const auto j = nlohmann::json::parse(text);
    s.max_interval = j.at("max_interval").get<std::size_t>();
    s.warmup_full = j.value("warmup_full", std::size_t{0});
    for (const auto& st : j.at("steps"))
      s.steps.push_back({{st.at("t").get<double>(), st.at("r").get<double>()},
                         parse_mode(st.at("mode").get<std::string>())});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
  try {
    validate(s);
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  return s;
}

StepSchedule load_schedule(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("schedule: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return schedule_from_json(ss.str());
}

}  // namespace disca::cache
