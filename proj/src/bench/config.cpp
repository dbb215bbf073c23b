#include "disca/bench/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "disca/cache/cached_sampler.hpp"
#include "disca/errors.hpp"

namespace disca::bench {

using nlohmann::json;

namespace {

// Reads `key` into `out` when present; `seen` collects the keys consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + path_ + k + "'");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: bad value for '" + path_ + key + "': " + e.what());
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string sub(const char* key) const { return path_ + key + "."; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError("config: " + msg);
}

json velocity_json(const nets::VelocityModelConfig& c) {
  return {{"input_dim", c.input_dim},       {"hidden_dim", c.hidden_dim},  {"depth", c.depth},
          {"time_embed_dim", c.time_embed_dim}, {"time_scale", c.time_scale}, {"condition_vocab", c.condition_vocab},
          {"accepts_r", c.accepts_r},       {"cfg_embed", c.cfg_embed},    {"cfg_hidden", c.cfg_hidden},
          {"g_min", c.g_min},               {"g_max", c.g_max}};
}

json predictor_json(const nets::PredictorConfig& c) {
  return {{"input_dim", c.input_dim},   {"hidden_dim", c.hidden_dim}, {"depth", c.depth},
          {"time_embed_dim", c.time_embed_dim}, {"time_scale", c.time_scale},
          {"condition_vocab", c.condition_vocab}, {"parameter_budget_ratio", c.parameter_budget_ratio}};
}

json discriminator_json(const nets::DiscriminatorConfig& c) {
  return {{"scales", c.scales}, {"feature_dim", c.feature_dim}, {"hidden_dim", c.hidden_dim},
          {"spectral_norm", c.spectral_norm}};
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
}

}  // namespace

ExperimentConfig desk_preset() {
  ExperimentConfig c;
  c.seed = 0;
  c.run_id = "desk";
  c.data.kind = flow::DistKind::kCheckerboard;

  c.base_train.iters = 3000;
  c.base_train.batch = 256;
  c.base_train.lr = 2e-3;

  c.cfg_distill.iters = 1500;
  c.cfg_distill.lr = 1e-3;

  c.meanflow.restrict.restrict_factor = 0.2;
  c.meanflow.iters = 3000;
  c.meanflow.lr = 1e-3;
  c.meanflow.g_infer = 1.0;

  c.predictor.hidden_dim = 16;
  c.predictor.depth = 1;
  c.predictor.time_embed_dim = 8;

  c.discriminator.hidden_dim = 32;
  // Paper-scale predictor lr (1e-4) barely moves a desk-sized predictor in
  // 1500 steps.
  c.predictor_train.lr_predictor = 1e-3;

  c.schedule.total_steps = 20;
  c.schedule.max_interval = 2;
  c.schedule.fixture = DISCA_FIXTURE_DIR "/n2_20.json";
  return c;
}

ExperimentConfig config_from_json(const std::string& text, const ExperimentConfig& base) {
  const json j = parse(text);
  ExperimentConfig c = base;
  {
    Section top(j, "");
    top.read("seed", c.seed);
    top.read("run_id", c.run_id);
    if (const json* d = top.child("data")) {
      Section s(*d, top.sub("data"));
      std::string kind = flow::to_string(c.data.kind);
      s.read("kind", kind);
      try {
        c.data.kind = flow::parse_dist_kind(kind);
      } catch (const ContractViolation& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
      s.read("sigma_d", c.data.sigma_d);
    }
    if (const json* d = top.child("backbone")) {
      Section s(*d, top.sub("backbone"));
      s.read("hidden_dim", c.backbone.hidden_dim);
      s.read("depth", c.backbone.depth);
      s.read("time_embed_dim", c.backbone.time_embed_dim);
      s.read("time_scale", c.backbone.time_scale);
      s.read("cfg_hidden", c.backbone.cfg_hidden);
    }
    if (const json* d = top.child("base_train")) {
      Section s(*d, top.sub("base_train"));
      s.read("iters", c.base_train.iters);
      s.read("batch", c.base_train.batch);
      s.read("lr", c.base_train.lr);
      s.read("label_dropout", c.base_train.label_dropout);
      s.read("cosine_decay", c.base_train.cosine_decay);
    }
    if (const json* d = top.child("cfg_distill")) {
      Section s(*d, top.sub("cfg_distill"));
      s.read("g_min", c.cfg_distill.cfg.g_min);
      s.read("g_max", c.cfg_distill.cfg.g_max);
      s.read("iters", c.cfg_distill.iters);
      s.read("batch", c.cfg_distill.batch);
      s.read("lr", c.cfg_distill.lr);
      s.read("cosine_decay", c.cfg_distill.cosine_decay);
    }
    if (const json* d = top.child("meanflow")) {
      Section s(*d, top.sub("meanflow"));
      s.read("restrict_factor", c.meanflow.restrict.restrict_factor);
      s.read("iters", c.meanflow.iters);
      s.read("batch", c.meanflow.batch);
      s.read("lr", c.meanflow.lr);
      s.read("clip_norm", c.meanflow.clip_norm);
      s.read("g_infer", c.meanflow.g_infer);
      s.read("cosine_decay", c.meanflow.cosine_decay);
    }
    if (const json* d = top.child("predictor")) {
      Section s(*d, top.sub("predictor"));
      s.read("hidden_dim", c.predictor.hidden_dim);
      s.read("depth", c.predictor.depth);
      s.read("time_embed_dim", c.predictor.time_embed_dim);
      s.read("time_scale", c.predictor.time_scale);
      s.read("parameter_budget_ratio", c.predictor.parameter_budget_ratio);
    }
    if (const json* d = top.child("discriminator")) {
      Section s(*d, top.sub("discriminator"));
      s.read("scales", c.discriminator.scales);
      s.read("hidden_dim", c.discriminator.hidden_dim);
      s.read("spectral_norm", c.discriminator.spectral_norm);
    }
    if (const json* d = top.child("predictor_train")) {
      Section s(*d, top.sub("predictor_train"));
      s.read("delta_max", c.predictor_train.delta_max);
      s.read("mse_iters", c.predictor_train.mse_iters);
      s.read("gan_iters", c.predictor_train.gan_iters);
      s.read("lambda_adv", c.predictor_train.lambda_adv);
      s.read("lr_predictor", c.predictor_train.lr_predictor);
      s.read("lr_discriminator", c.predictor_train.lr_discriminator);
      s.read("batch", c.predictor_train.batch);
    }
    if (const json* d = top.child("schedule")) {
      Section s(*d, top.sub("schedule"));
      s.read("total_steps", c.schedule.total_steps);
      s.read("max_interval", c.schedule.max_interval);
      s.read("warmup_full", c.schedule.warmup_full);
      s.read("fixture", c.schedule.fixture);
    }
    if (const json* d = top.child("bench")) {
      Section s(*d, top.sub("bench"));
      s.read("samples", c.bench.samples);
      s.read("teacher_steps", c.bench.teacher_steps);
      s.read("chunk_rows", c.bench.chunk_rows);
      s.read("strategies", c.bench.strategies);
    }
  }
  c.data.seed = c.seed;
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig c = config_from_json(ss.str());
  namespace fs = std::filesystem;
  if (!c.schedule.fixture.empty() && fs::path(c.schedule.fixture).is_relative())
    c.schedule.fixture = (fs::path(path).parent_path() / c.schedule.fixture).string();
  return c;
}

std::string to_json(const ExperimentConfig& c) {
  const json j = {
      {"seed", c.seed},
      {"run_id", c.run_id},
      {"data", {{"kind", flow::to_string(c.data.kind)}, {"sigma_d", c.data.sigma_d}}},
      {"backbone",
       {{"hidden_dim", c.backbone.hidden_dim},
        {"depth", c.backbone.depth},
        {"time_embed_dim", c.backbone.time_embed_dim},
        {"time_scale", c.backbone.time_scale},
        {"cfg_hidden", c.backbone.cfg_hidden}}},
      {"base_train",
       {{"iters", c.base_train.iters},
        {"batch", c.base_train.batch},
        {"lr", c.base_train.lr},
        {"label_dropout", c.base_train.label_dropout},
        {"cosine_decay", c.base_train.cosine_decay}}},
      {"cfg_distill",
       {{"g_min", c.cfg_distill.cfg.g_min},
        {"g_max", c.cfg_distill.cfg.g_max},
        {"iters", c.cfg_distill.iters},
        {"batch", c.cfg_distill.batch},
        {"lr", c.cfg_distill.lr},
        {"cosine_decay", c.cfg_distill.cosine_decay}}},
      {"meanflow",
       {{"restrict_factor", c.meanflow.restrict.restrict_factor},
        {"iters", c.meanflow.iters},
        {"batch", c.meanflow.batch},
        {"lr", c.meanflow.lr},
        {"clip_norm", c.meanflow.clip_norm},
        {"g_infer", c.meanflow.g_infer},
        {"cosine_decay", c.meanflow.cosine_decay}}},
      {"predictor",
       {{"hidden_dim", c.predictor.hidden_dim},
        {"depth", c.predictor.depth},
        {"time_embed_dim", c.predictor.time_embed_dim},
        {"time_scale", c.predictor.time_scale},
        {"parameter_budget_ratio", c.predictor.parameter_budget_ratio}}},
      {"discriminator",
       {{"scales", c.discriminator.scales},
        {"hidden_dim", c.discriminator.hidden_dim},
        {"spectral_norm", c.discriminator.spectral_norm}}},
      {"predictor_train",
       {{"delta_max", c.predictor_train.delta_max},
        {"mse_iters", c.predictor_train.mse_iters},
        {"gan_iters", c.predictor_train.gan_iters},
        {"lambda_adv", c.predictor_train.lambda_adv},
        {"lr_predictor", c.predictor_train.lr_predictor},
        {"lr_discriminator", c.predictor_train.lr_discriminator},
        {"batch", c.predictor_train.batch}}},
      {"schedule",
       {{"total_steps", c.schedule.total_steps},
        {"max_interval", c.schedule.max_interval},
        {"warmup_full", c.schedule.warmup_full},
        {"fixture", c.schedule.fixture}}},
      {"bench",
       {{"samples", c.bench.samples},
        {"teacher_steps", c.bench.teacher_steps},
        {"chunk_rows", c.bench.chunk_rows},
        {"strategies", c.bench.strategies}}},
  };
  return j.dump(2);
}

void validate(const ExperimentConfig& c) {
  check(c.data.sigma_d > 0.0, "data.sigma_d must be positive");
  check(c.backbone.hidden_dim > 0 && c.backbone.depth > 0, "backbone dimensions must be positive");
  check(c.backbone.time_embed_dim > 0 && c.backbone.time_embed_dim % 2 == 0, "backbone.time_embed_dim must be even");
  check(c.backbone.time_scale > 0.0, "backbone.time_scale must be positive");
  check(c.base_train.iters > 0 && c.base_train.batch > 0 && c.base_train.lr > 0.0, "base_train needs iters, batch, lr > 0");
  check(c.base_train.label_dropout >= 0.0 && c.base_train.label_dropout <= 1.0, "base_train.label_dropout outside [0, 1]");
  check(c.cfg_distill.iters > 0 && c.cfg_distill.batch > 0 && c.cfg_distill.lr > 0.0, "cfg_distill needs iters, batch, lr > 0");
  check(c.meanflow.iters > 0 && c.meanflow.batch > 0 && c.meanflow.lr > 0.0, "meanflow needs iters, batch, lr > 0");
  check(c.meanflow.clip_norm >= 0.0, "meanflow.clip_norm must be >= 0");
  check(c.predictor.hidden_dim > 0 && c.predictor.time_embed_dim % 2 == 0, "predictor dimensions invalid");
  check(c.predictor.parameter_budget_ratio > 0.0 && c.predictor.parameter_budget_ratio <= 0.04,
        "predictor.parameter_budget_ratio must lie in (0, 0.04]");
  check(c.discriminator.hidden_dim > 0, "discriminator.hidden_dim must be positive");
  check(c.bench.samples >= 2 && c.bench.teacher_steps >= 1 && c.bench.chunk_rows >= 1, "bench sizes invalid");
  check(c.schedule.total_steps >= 1 && c.schedule.max_interval >= 1, "schedule sizes invalid");
  check(c.schedule.warmup_full < c.schedule.total_steps, "schedule.warmup_full must be below total_steps");
  try {
    c.cfg_distill.cfg.validate();
    c.meanflow.restrict.validate();
    c.predictor_train.validate();
    for (const auto& s : c.bench.strategies)
      if (s != "none") cache::parse_strategy(s);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check(c.meanflow.g_infer >= c.cfg_distill.cfg.g_min && c.meanflow.g_infer <= c.cfg_distill.cfg.g_max,
        "meanflow.g_infer outside [g_min, g_max]");
}

nets::VelocityModelConfig base_model_config(const ExperimentConfig& c) {
  nets::VelocityModelConfig m;
  m.input_dim = c.data.dim();
  m.hidden_dim = c.backbone.hidden_dim;
  m.depth = c.backbone.depth;
  m.time_embed_dim = c.backbone.time_embed_dim;
  m.time_scale = c.backbone.time_scale;
  m.condition_vocab = c.data.num_classes();
  m.cfg_hidden = c.backbone.cfg_hidden;
  m.g_min = c.cfg_distill.cfg.g_min;
  m.g_max = c.cfg_distill.cfg.g_max;
  return m;
}

nets::PredictorConfig predictor_config(const ExperimentConfig& c) {
  nets::PredictorConfig p = c.predictor;
  p.input_dim = c.data.dim();
  p.condition_vocab = c.data.num_classes();
  return p;
}

nets::DiscriminatorConfig discriminator_config(const ExperimentConfig& c) {
  nets::DiscriminatorConfig d = c.discriminator;
  if (d.scales.empty()) d.scales = nets::default_scales(c.backbone.depth);
  d.feature_dim = c.backbone.hidden_dim;
  return d;
}

std::string to_json(const nets::VelocityModelConfig& c) { return velocity_json(c).dump(); }
std::string to_json(const nets::PredictorConfig& c) { return predictor_json(c).dump(); }
std::string to_json(const nets::DiscriminatorConfig& c) { return discriminator_json(c).dump(); }

nets::VelocityModelConfig velocity_config_from_json(const std::string& text) {
  const json j = parse(text);
  nets::VelocityModelConfig c;
  Section s(j, "model.");
  s.read("input_dim", c.input_dim);
  s.read("hidden_dim", c.hidden_dim);
  s.read("depth", c.depth);
  s.read("time_embed_dim", c.time_embed_dim);
  s.read("time_scale", c.time_scale);
  s.read("condition_vocab", c.condition_vocab);
  s.read("accepts_r", c.accepts_r);
  s.read("cfg_embed", c.cfg_embed);
  s.read("cfg_hidden", c.cfg_hidden);
  s.read("g_min", c.g_min);
  s.read("g_max", c.g_max);
  return c;
}

nets::PredictorConfig predictor_config_from_json(const std::string& text) {
  const json j = parse(text);
  nets::PredictorConfig c;
  Section s(j, "predictor.");
  s.read("input_dim", c.input_dim);
  s.read("hidden_dim", c.hidden_dim);
  s.read("depth", c.depth);
  s.read("time_embed_dim", c.time_embed_dim);
  s.read("time_scale", c.time_scale);
  s.read("condition_vocab", c.condition_vocab);
  s.read("parameter_budget_ratio", c.parameter_budget_ratio);
  return c;
}

nets::DiscriminatorConfig discriminator_config_from_json(const std::string& text) {
  const json j = parse(text);
  nets::DiscriminatorConfig c;
  Section s(j, "discriminator.");
  s.read("scales", c.scales);
  s.read("feature_dim", c.feature_dim);
  s.read("hidden_dim", c.hidden_dim);
  s.read("spectral_norm", c.spectral_norm);
  return c;
}

}  // namespace disca::bench
