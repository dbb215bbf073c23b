// Command-line front end for the training, distillation and benchmark stages.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "disca/bench/checkpoint.hpp"
#include "disca/bench/config.hpp"
#include "disca/bench/pipeline.hpp"
#include "disca/bench/verify.hpp"
#include "disca/errors.hpp"

using namespace disca;
using namespace disca::bench;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kLineage = 3, kNumeric = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t threads = 1;
};

struct Inputs {
  std::string checkpoint, predictor, teacher, strategy = "disca";
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? desk_preset() : load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.data.seed = *c.seed;
  }
  validate(cfg);
  return cfg;
}

void log_line(const std::string& m) { std::cerr << m << '\n'; }

std::string out_file(const Common& c, const std::string& leaf) {
  fs::create_directories(c.out);
  return (fs::path(c.out) / leaf).string();
}

void save(const Common& c, const std::string& leaf, const Checkpoint& ck) {
  const std::string path = out_file(c, leaf);
  const Digest d = save_checkpoint(path, ck);
  std::cout << path << ' ' << hex(d) << '\n';
}

Checkpoint need(const std::string& path, const char* flag) {
  if (path.empty()) throw ConfigError(std::string("missing ") + flag);
  return load_checkpoint(path);
}

void append_metrics(const std::string& path, const std::vector<MetricsRecord>& rows) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) throw ConfigError("cannot write " + path);
  if (fresh) write_metrics_header(os);
  for (const auto& r : rows) write_metrics_row(os, r);
}

int run_verify(const Common& c, const Inputs& in) {
  const ExperimentConfig cfg = resolve(c);
  std::optional<std::string> dir;
  if (!in.checkpoint.empty()) dir = in.checkpoint;
  bool all = true;
  for (const auto& r : verify_invariants(cfg, dir)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    all = all && r.passed;
  }
  return all ? kOk : kOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Restricted mean-velocity distillation and learnable feature caching on toy flows"};
  app.require_subcommand(1);
  Common common;
  Inputs in;

  auto add_common = [&](CLI::App* s) {
    s->add_option("--config", common.config, "JSON experiment config (defaults to the desk preset)");
    s->add_option("--seed", common.seed, "Root seed, overriding the config");
    s->add_option("--out", common.out, "Output directory")->capture_default_str();
    s->add_option("--threads", common.threads, "Sampling worker threads")->check(CLI::PositiveNumber);
  };
  auto* base = app.add_subcommand("train-base", "Train the class-conditional flow-matching model");
  auto* cfg_cmd = app.add_subcommand("distill-cfg", "Distill guidance into a guidance-conditioned student");
  auto* mean = app.add_subcommand("distill-meanflow", "Distill a mean-velocity model with restricted intervals");
  auto* pred = app.add_subcommand("train-predictor", "Train the cache predictor (MSE warm-up then adversarial)");
  auto* sample = app.add_subcommand("sample", "Draw samples with one caching strategy and write them as CSV");
  auto* bench = app.add_subcommand("bench", "Score every configured strategy and append to metrics.csv");
  auto* run = app.add_subcommand("run", "All stages end to end");
  auto* verify = app.add_subcommand("verify", "Run the invariant checks, optionally on a run directory");
  auto* show = app.add_subcommand("show-config", "Print the effective config as JSON");
  for (auto* s : {base, cfg_cmd, mean, pred, sample, bench, run, verify, show}) add_common(s);
  for (auto* s : {cfg_cmd, mean, pred, sample, bench})
    s->add_option("--checkpoint", in.checkpoint, "Parent checkpoint (mean-velocity model for sample/bench)");
  verify->add_option("--checkpoint", in.checkpoint, "Run directory holding *.ckpt files");
  for (auto* s : {sample, bench}) s->add_option("--predictor", in.predictor, "Predictor checkpoint");
  bench->add_option("--teacher", in.teacher, "Guidance-distilled teacher for the Euler reference row");
  sample->add_option("--strategy", in.strategy, "none, naive, taylor<m> or disca")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*verify) return run_verify(common, in);
    const ExperimentConfig cfg = resolve(common);
    if (*show) {
      std::cout << to_json(cfg) << '\n';
    } else if (*base) {
      save(common, "base.ckpt", train_base(cfg, log_line));
    } else if (*cfg_cmd) {
      save(common, "cfg.ckpt", distill_guidance(cfg, need(in.checkpoint, "--checkpoint"), log_line));
    } else if (*mean) {
      save(common, "meanflow.ckpt", distill_mean(cfg, need(in.checkpoint, "--checkpoint"), log_line));
    } else if (*pred) {
      const PredictorStage ps = train_predictor_stage(cfg, need(in.checkpoint, "--checkpoint"), log_line);
      save(common, "predictor.ckpt", ps.predictor);
      save(common, "discriminator.ckpt", ps.discriminator);
      std::ofstream gan(out_file(common, "gan.csv"));
      ptrain::write_gan_csv_header(gan);
      for (const auto& r : ps.training.gan) ptrain::write_gan_csv_row(gan, r);
    } else if (*sample || *bench) {
      const Checkpoint m = need(in.checkpoint, "--checkpoint");
      std::optional<Checkpoint> p, t;
      if (!in.predictor.empty()) p = load_checkpoint(in.predictor);
      if (!in.teacher.empty()) t = load_checkpoint(in.teacher);
      ExperimentConfig c = cfg;
      if (*sample) {
        c.bench.strategies = {in.strategy};
        t.reset();
      }
      std::ofstream samples(out_file(common, "samples.csv"));
      const auto rows = run_bench(c, {&m, p ? &*p : nullptr, t ? &*t : nullptr}, common.threads, &samples, log_line);
      if (*bench) append_metrics(out_file(common, "metrics.csv"), rows);
      write_metrics_header(std::cout);
      for (const auto& r : rows) write_metrics_row(std::cout, r);
    } else if (*run) {
      const PipelineResult r = run_pipeline(cfg, common.out, common.threads, log_line);
      write_metrics_header(std::cout);
      for (const auto& row : r.records) write_metrics_row(std::cout, row);
    }
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const LineageError& e) {
    std::cerr << "lineage error: " << e.what() << '\n';
    return kLineage;
  } catch (const CorruptCheckpoint& e) {
    std::cerr << "corrupt checkpoint: " << e.what() << '\n';
    return kLineage;
  } catch (const UnsupportedVersion& e) {
    std::cerr << "unsupported checkpoint: " << e.what() << '\n';
    return kLineage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure in " << e.primitive() << ": " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
}
