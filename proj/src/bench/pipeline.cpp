#include "disca/bench/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <thread>

#include "disca/bench/metrics.hpp"
#include "disca/errors.hpp"
#include "disca/flow/sampler.hpp"

namespace disca::bench {

namespace {

void say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

ad::Tensor row_slice(const ad::Tensor& t, std::size_t begin, std::size_t end) {
  const std::size_t c = t.cols();
  return ad::Tensor({end - begin, c}, std::vector<double>(t.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                                                          t.data().begin() + static_cast<std::ptrdiff_t>(end * c)));
}

void put_rows(ad::Tensor& dst, std::size_t begin, const ad::Tensor& src) {
  std::copy(src.data().begin(), src.data().end(), dst.data().begin() + static_cast<std::ptrdiff_t>(begin * dst.cols()));
}

// Runs fn(chunk) for every chunk; chunk boundaries never depend on `threads`.
void parallel_chunks(std::size_t chunks, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, chunks));
  if (threads == 1) {
    for (std::size_t i = 0; i < chunks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < chunks;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// Conditioning the velocity network expects for these rows.
nets::ConditionBatch model_condition(const nets::VelocityModel& m, const nets::ConditionBatch& labels, double g) {
  nets::ConditionBatch c = labels;
  if (m.config().condition_vocab == 0) c.class_ids.assign(c.rows(), nets::kNullClass);
  if (m.config().cfg_embed) c = c.with_cfg(g);
  return c;
}

Checkpoint make_checkpoint(Stage stage, const Checkpoint* parent, std::string config, ad::ParameterSet params) {
  Checkpoint c;
  c.stage = stage;
  if (parent) c.parent = Lineage{parent->stage, digest(*parent)};
  c.config = std::move(config);
  c.params = std::move(params);
  return c;
}

void require_stage(const Checkpoint& c, std::initializer_list<Stage> ok, const char* what) {
  for (Stage s : ok)
    if (c.stage == s) return;
  throw LineageError(std::string(what) + ": got a " + to_string(c.stage) + " checkpoint");
}

std::function<void(std::size_t, const distill::DistillBatchReport&)> every(const LogFn& log, const char* stage,
                                                                           std::size_t total) {
  if (!log) return {};
  return [log, stage, total](std::size_t it, const distill::DistillBatchReport& r) {
    if ((it + 1) % std::max<std::size_t>(1, total / 10) == 0)
      log(std::string(stage) + ": iter " + std::to_string(it + 1) + "/" + std::to_string(total) +
          " loss " + std::to_string(r.loss));
  };
}

}  // namespace

Digest digest(const Checkpoint& c) { return digest_of(serialize(c)); }

LoadedModel velocity_model_of(const Checkpoint& c) {
  require_stage(c, {Stage::kBaseFm, Stage::kCfgDistilled, Stage::kMeanFlow}, "velocity model");
  nets::VelocityModel m(velocity_config_from_json(c.config));
  return {m, c.params};
}

Checkpoint train_base(const ExperimentConfig& cfg, const LogFn& log) {
  nets::VelocityModel m(base_model_config(cfg));
  Rng rng(derive_seed(cfg.seed, "init-base"));
  ad::ParameterSet p = m.init(rng);
  const std::size_t total = cfg.base_train.iters;
  flow::train_flow_matching(m, p, cfg.data, cfg.base_train, derive_seed(cfg.seed, "train-base"),
                            [&](std::size_t it, double loss) {
                              if (log && (it + 1) % std::max<std::size_t>(1, total / 10) == 0)
                                log("train-base: iter " + std::to_string(it + 1) + "/" + std::to_string(total) +
                                    " loss " + std::to_string(loss));
                            });
  if (!p.all_finite()) throw NumericError("train-base", "train-base: non-finite weights");
  return make_checkpoint(Stage::kBaseFm, nullptr, to_json(m.config()), std::move(p));
}

Checkpoint distill_guidance(const ExperimentConfig& cfg, const Checkpoint& base, const LogFn& log) {
  require_stage(base, {Stage::kBaseFm}, "distill-cfg");
  const LoadedModel teacher = velocity_model_of(base);
  if (teacher.model.config().condition_vocab == 0)
    throw ConfigError("distill-cfg: the task has no classes to guide");
  nets::VelocityModelConfig sc = teacher.model.config();
  sc.cfg_embed = true;
  nets::VelocityModel student(sc);
  Rng rng(derive_seed(cfg.seed, "init-cfg"));
  ad::ParameterSet p = student.init_from(teacher.params, rng);
  distill::distill_cfg(student, p, distill::model_cfg_teacher(teacher.model, teacher.params), cfg.data,
                       cfg.cfg_distill, derive_seed(cfg.seed, "distill-cfg"),
                       every(log, "distill-cfg", cfg.cfg_distill.iters));
  if (!p.all_finite()) throw NumericError("distill-cfg", "distill-cfg: non-finite weights");
  return make_checkpoint(Stage::kCfgDistilled, &base, to_json(sc), std::move(p));
}

Checkpoint distill_mean(const ExperimentConfig& cfg, const Checkpoint& parent, const LogFn& log) {
  require_stage(parent, {Stage::kCfgDistilled, Stage::kBaseFm}, "distill-meanflow");
  const LoadedModel teacher = velocity_model_of(parent);
  if (parent.stage == Stage::kBaseFm && teacher.model.config().condition_vocab > 0)
    throw LineageError("distill-meanflow: class-conditional tasks distill from the guidance-distilled model");
  nets::VelocityModelConfig mc = teacher.model.config();
  mc.accepts_r = true;
  nets::VelocityModel student(mc);
  Rng rng(derive_seed(cfg.seed, "init-meanflow"));
  ad::ParameterSet p = student.init_from(teacher.params, rng);
  distill::distill_meanflow(student, p, distill::model_instant_teacher(teacher.model, teacher.params), cfg.data,
                            cfg.meanflow, derive_seed(cfg.seed, "distill-meanflow"),
                            every(log, "distill-meanflow", cfg.meanflow.iters));
  if (!p.all_finite()) throw NumericError("distill-meanflow", "distill-meanflow: non-finite weights");
  return make_checkpoint(Stage::kMeanFlow, &parent, to_json(mc), std::move(p));
}

PredictorStage train_predictor_stage(const ExperimentConfig& cfg, const Checkpoint& meanflow, const LogFn& log,
                                     const DiscriminatorObserver& observe) {
  require_stage(meanflow, {Stage::kMeanFlow}, "train-predictor");
  const LoadedModel mean = velocity_model_of(meanflow);
  if (auto w = cfg.predictor_train.warning(cfg.meanflow.restrict.restrict_factor)) say(log, "train-predictor: " + *w);
  const nets::Predictor pred(predictor_config(cfg), mean.model.parameter_count());
  const nets::Discriminator disc(discriminator_config(cfg), mean.model.config().depth);
  Rng rng(derive_seed(cfg.seed, "init-predictor"));
  ad::ParameterSet pp = pred.init(rng);
  ad::ParameterSet dp = disc.init(rng);
  nets::SpectralState sn = disc.init_spectral(rng);
  ad::OptimizerState dopt(ad::AdamHyper{cfg.predictor_train.lr_discriminator});
  const std::optional<double> g =
      mean.model.config().cfg_embed ? std::optional<double>(cfg.meanflow.g_infer) : std::nullopt;
  const std::size_t total = cfg.predictor_train.gan_iters;
  PredictorStage out;
  out.training = ptrain::train_predictor(
      mean.model, mean.params, pred, pp, {&disc, &dp, &sn, &dopt}, cfg.data, cfg.predictor_train, g,
      derive_seed(cfg.seed, "train-predictor"), [&](const ptrain::GanReport& r) {
        if (observe) observe(r, disc, dp, sn);
        if (log && (r.iteration + 1) % std::max<std::size_t>(1, total / 10) == 0)
          log("train-predictor: gan iter " + std::to_string(r.iteration + 1) + "/" + std::to_string(total) +
              " loss_P " + std::to_string(r.loss_p) + " loss_D " + std::to_string(r.loss_d));
      });
  if (out.training.aborted) throw NumericError("train-predictor", "train-predictor: " + *out.training.aborted);
  out.predictor = make_checkpoint(Stage::kPredictor, &meanflow, to_json(pred.config()), std::move(pp));
  out.discriminator = make_checkpoint(Stage::kDiscriminator, &meanflow, to_json(disc.config()), std::move(dp));
  return out;
}

void write_metrics_header(std::ostream& os) {
  os << "run_id,strategy,full_evals,predictor_evals,w2,energy_distance,wall_clock_ms,cache_bytes_peak\n";
}

void write_metrics_row(std::ostream& os, const MetricsRecord& r) {
  os << r.run_id << ',' << r.strategy << ',' << r.full_evals << ',' << r.predictor_evals << ','
     << std::setprecision(17) << r.w2 << ',' << r.energy_distance << ',' << std::setprecision(6) << std::fixed
     << r.wall_clock_ms << std::defaultfloat << ',' << r.cache_bytes_peak << '\n';
}

BenchSet bench_set(const ExperimentConfig& cfg) {
  const std::size_t n = cfg.bench.samples;
  BenchSet s;
  Rng rng(derive_seed(cfg.seed, "bench-noise"));
  s.noise = rng.normal_tensor({n, cfg.data.dim()});
  s.cond.class_ids = flow::sample_labeled(cfg.data, n, derive_seed(cfg.seed, "bench-labels")).labels;
  s.reference = flow::sample_data(cfg.data, n, derive_seed(cfg.seed, "bench-reference"));
  return s;
}

cache::StepSchedule bench_schedule(const ExperimentConfig& cfg) {
  if (!cfg.schedule.fixture.empty()) {
    cache::StepSchedule s = cache::load_schedule(cfg.schedule.fixture);
    if (s.size() != cfg.schedule.total_steps || s.max_interval != cfg.schedule.max_interval)
      throw ConfigError("schedule fixture " + cfg.schedule.fixture + " disagrees with total_steps/max_interval");
    return s;
  }
  return cache::plan_schedule(cfg.schedule.total_steps, cfg.schedule.max_interval, cfg.schedule.warmup_full);
}

Generated generate(const ExperimentConfig& cfg, const LoadedModel& mean, const cache::StepSchedule& schedule,
                   const std::string& strategy, const std::optional<cache::PredictorHandle>& predictor,
                   const BenchSet& set, std::size_t threads) {
  require(mean.model.config().accepts_r, "generate: needs a mean-velocity model");
  const std::size_t n = set.noise.rows(), chunk = cfg.bench.chunk_rows;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  const bool uncached = strategy == "none";
  const cache::Strategy st = uncached ? cache::Strategy::naive() : cache::parse_strategy(strategy);
  std::vector<flow::TimePair> pairs;
  for (const auto& s : schedule.steps) pairs.push_back(s.pair);

  Generated g;
  g.x0 = ad::Tensor(set.noise.shape());
  std::vector<cache::NfeReport> reports(chunks);
  const auto t0 = std::chrono::steady_clock::now();
  parallel_chunks(chunks, threads, [&](std::size_t i) {
    const std::size_t b = i * chunk, e = std::min(n, b + chunk);
    const nets::ConditionBatch labels = set.cond.slice(b, e);
    const auto u = flow::model_mean_velocity(mean.model, mean.params,
                                             model_condition(mean.model, labels, cfg.meanflow.g_infer));
    const ad::Tensor x1 = row_slice(set.noise, b, e);
    if (uncached) {
      put_rows(g.x0, b, flow::sample_mean_flow(u, x1, pairs));
      reports[i].full_evals = pairs.size();
      return;
    }
    nets::ConditionBatch pc = labels;
    if (mean.model.config().condition_vocab == 0) pc.class_ids.assign(pc.rows(), nets::kNullClass);
    cache::CachedSample out = cache::cached_sample(u, predictor, schedule, st, x1, pc);
    put_rows(g.x0, b, out.x0);
    reports[i] = out.report;
  });
  g.wall_clock_ms = ms_since(t0);
  // Counts are per trajectory batch; memory adds up over resident chunks.
  g.report = reports.front();
  g.report.cache_bytes_peak = 0;
  g.report.out_of_horizon = 0;
  for (const auto& r : reports) {
    g.report.cache_bytes_peak += r.cache_bytes_peak;
    g.report.out_of_horizon += r.out_of_horizon;
  }
  if (!g.x0.all_finite()) throw NumericError("sampler", "generate: non-finite samples for strategy " + strategy);
  return g;
}

Generated generate_euler(const ExperimentConfig& cfg, const LoadedModel& instant, std::size_t steps,
                         const BenchSet& set, std::size_t threads) {
  require(!instant.model.config().accepts_r, "generate_euler: needs an instantaneous model");
  const std::size_t n = set.noise.rows(), chunk = cfg.bench.chunk_rows;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  Generated g;
  g.x0 = ad::Tensor(set.noise.shape());
  const auto t0 = std::chrono::steady_clock::now();
  parallel_chunks(chunks, threads, [&](std::size_t i) {
    const std::size_t b = i * chunk, e = std::min(n, b + chunk);
    const auto c = model_condition(instant.model, set.cond.slice(b, e), cfg.meanflow.g_infer);
    put_rows(g.x0, b, flow::euler_sample(flow::model_velocity(instant.model, instant.params, c),
                                         row_slice(set.noise, b, e), steps));
  });
  g.wall_clock_ms = ms_since(t0);
  g.report.full_evals = steps;
  if (!g.x0.all_finite()) throw NumericError("sampler", "generate_euler: non-finite samples");
  return g;
}

MetricsRecord score(const std::string& run_id, const std::string& strategy, const Generated& g,
                    const ad::Tensor& reference) {
  MetricsRecord r;
  r.run_id = run_id;
  r.strategy = strategy;
  r.full_evals = g.report.full_evals;
  r.predictor_evals = g.report.predictor_evals;
  r.w2 = w2_distance(g.x0, reference);
  r.energy_distance = energy_distance(g.x0, reference);
  r.wall_clock_ms = g.wall_clock_ms;
  r.cache_bytes_peak = g.report.cache_bytes_peak;
  return r;
}

std::vector<MetricsRecord> run_bench(const ExperimentConfig& cfg, const BenchInputs& in, std::size_t threads,
                                     std::ostream* samples, const LogFn& log) {
  require(in.meanflow != nullptr, "bench: a mean-velocity checkpoint is required");
  require_stage(*in.meanflow, {Stage::kMeanFlow}, "bench");
  const Digest mean_digest = digest(*in.meanflow);
  const LoadedModel mean = velocity_model_of(*in.meanflow);
  const cache::StepSchedule schedule = bench_schedule(cfg);
  const BenchSet set = bench_set(cfg);

  std::optional<nets::Predictor> pred;
  std::optional<cache::PredictorHandle> handle;
  if (in.predictor) {
    require_stage(*in.predictor, {Stage::kPredictor}, "bench predictor");
    require_parent(*in.predictor, Stage::kMeanFlow, mean_digest);
    pred.emplace(predictor_config_from_json(in.predictor->config), mean.model.parameter_count());
    handle = cache::PredictorHandle{&*pred, &in.predictor->params, cfg.predictor_train.delta_max};
  }
  if (in.teacher && in.meanflow->parent && in.meanflow->parent->digest != digest(*in.teacher))
    throw LineageError("bench: the teacher is not the parent of the mean-velocity checkpoint");

  if (samples) *samples << "strategy,x,y\n";
  auto dump = [&](const std::string& name, const ad::Tensor& x) {
    if (!samples) return;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      *samples << name << ',' << std::setprecision(17) << x.at(i, 0) << ',';
      if (x.cols() > 1) *samples << x.at(i, 1);
      *samples << '\n';
    }
  };

  std::vector<MetricsRecord> out;
  if (in.teacher) {
    const Generated g = generate_euler(cfg, velocity_model_of(*in.teacher), cfg.bench.teacher_steps, set, threads);
    const std::string name = "teacher_euler" + std::to_string(cfg.bench.teacher_steps);
    out.push_back(score(cfg.run_id, name, g, set.reference));
    dump(name, g.x0);
    say(log, "bench: " + name + " w2 " + std::to_string(out.back().w2));
  }
  for (const std::string& s : cfg.bench.strategies) {
    std::optional<cache::PredictorHandle> h;
    if (s == "disca") {
      if (!handle) throw ConfigError("bench: strategy disca needs a predictor checkpoint");
      h = handle;
    }
    const Generated g = generate(cfg, mean, schedule, s, h, set, threads);
    out.push_back(score(cfg.run_id, s, g, set.reference));
    dump(s, g.x0);
    say(log, "bench: " + s + " w2 " + std::to_string(out.back().w2) + " full " +
                 std::to_string(out.back().full_evals) + " predicted " + std::to_string(out.back().predictor_evals));
  }
  return out;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir, std::size_t threads,
                            const LogFn& log) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  PipelineResult res;
  auto keep = [&](const std::string& name, const Checkpoint& c) {
    const std::string path = (fs::path(out_dir) / name).string();
    save_checkpoint(path, c);
    res.files.push_back(path);
  };
  const Checkpoint base = train_base(cfg, log);
  keep("base.ckpt", base);
  std::optional<Checkpoint> guided;
  if (cfg.data.num_classes() > 0) {
    guided = distill_guidance(cfg, base, log);
    keep("cfg.ckpt", *guided);
  }
  const Checkpoint& teacher = guided ? *guided : base;
  const Checkpoint mean = distill_mean(cfg, teacher, log);
  keep("meanflow.ckpt", mean);
  const PredictorStage ps = train_predictor_stage(cfg, mean, log);
  keep("predictor.ckpt", ps.predictor);
  keep("discriminator.ckpt", ps.discriminator);
  {
    const std::string path = (fs::path(out_dir) / "gan.csv").string();
    std::ofstream gan(path);
    ptrain::write_gan_csv_header(gan);
    for (const auto& r : ps.training.gan) ptrain::write_gan_csv_row(gan, r);
    res.files.push_back(path);
  }
  res.records = run_bench(cfg, {&mean, &ps.predictor, &teacher}, threads, nullptr, log);
  const std::string path = (fs::path(out_dir) / "metrics.csv").string();
  std::ofstream csv(path);
  write_metrics_header(csv);
  for (const auto& r : res.records) write_metrics_row(csv, r);
  res.files.push_back(path);
  return res;
}

}  // namespace disca::bench
