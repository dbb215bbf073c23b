#include "disca/bench/verify.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "disca/bench/checkpoint.hpp"
#include "disca/bench/pipeline.hpp"
#include "disca/cache/cached_sampler.hpp"
#include "disca/flow/sampler.hpp"
#include "disca/rng.hpp"

namespace disca::bench {

namespace {

namespace fs = std::filesystem;

template <class F>
CheckResult check(const std::string& name, F body) {
  CheckResult r{name, false, ""};
  try {
    r.detail = body(r.passed);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("threw: ") + e.what();
  }
  return r;
}

std::string restricted_draws(bool& ok) {
  Rng rng(derive_seed(0, "verify-restrict"));
  const distill::RestrictConfig rc{0.2};
  double widest = 0.0;
  std::size_t bad = 0;
  for (int i = 0; i < 100000; ++i) {
    const flow::TimePair p = distill::sample_t_r(rc, rng);
    const double w = p.t - p.r;
    if (w < 0.0 || w > rc.restrict_factor || p.r < 0.0 || p.t > 1.0) ++bad;
    widest = std::max(widest, w);
  }
  ok = bad == 0 && widest >= 0.19;
  return std::to_string(bad) + " violations, widest interval " + std::to_string(widest);
}

std::string fixture_counts(bool& ok) {
  ok = true;
  std::ostringstream os;
  for (auto [n, full, pred] : {std::tuple{2, 13, 7}, std::tuple{3, 11, 9}, std::tuple{4, 8, 12}}) {
    const auto s = cache::load_schedule(std::string(DISCA_FIXTURE_DIR) + "/n" + std::to_string(n) + "_20.json");
    const bool good = s.size() == 20 && s.full_count() == static_cast<std::size_t>(full) &&
                      s.predict_count() == static_cast<std::size_t>(pred);
    ok = ok && good;
    os << (n == 2 ? "" : ", ") << "N=" << n << ": " << s.full_count() << " full/" << s.predict_count() << " predicted"
       << (good ? "" : " (wrong)");
  }
  return os.str();
}

// A degree-m polynomial history is forecast exactly by the order-m expansion.
std::string taylor_polynomials(bool& ok) {
  double worst = 0.0;
  for (std::size_t m = 0; m <= 2; ++m) {
    auto f = [m](double t) {
      double v = 0.7;
      for (std::size_t i = 1; i <= m; ++i) v += (0.3 * static_cast<double>(i) - 1.1) * std::pow(t, static_cast<double>(i));
      return v;
    };
    cache::CacheState s = cache::CacheState::taylor(m);
    cache::NfeReport rep;
    for (std::size_t j = m + 1; j-- > 0;) {
      const double t = 0.4 + 0.05 * static_cast<double>(j);
      cache_init([&](const ad::Tensor&, const flow::TimePair& p) { return ad::Tensor({1, 1}, f(p.t)); },
                 ad::Tensor({1, 1}), {t, t}, s, rep);
    }
    worst = std::max(worst, std::abs(cache::taylor_forecast(s, 0.33, m)[0] - f(0.33)));
  }
  ok = worst <= 1e-9;
  std::ostringstream os;
  os << "max error " << worst;
  return os.str();
}

struct RunFiles {
  std::optional<Checkpoint> base, cfg, mean, pred, disc;
  std::optional<Digest> base_d, cfg_d, mean_d;
};

RunFiles load_run(const std::string& dir) {
  RunFiles r;
  auto get = [&](const char* leaf, std::optional<Checkpoint>& slot, std::optional<Digest>* d) {
    const fs::path p = fs::path(dir) / leaf;
    if (!fs::exists(p)) return;
    Digest dg{};
    slot = load_checkpoint(p.string(), &dg);
    if (d) *d = dg;
  };
  get("base.ckpt", r.base, &r.base_d);
  get("cfg.ckpt", r.cfg, &r.cfg_d);
  get("meanflow.ckpt", r.mean, &r.mean_d);
  get("predictor.ckpt", r.pred, nullptr);
  get("discriminator.ckpt", r.disc, nullptr);
  return r;
}

std::string lineage_chain(const RunFiles& r, bool& ok) {
  std::ostringstream os;
  std::size_t links = 0;
  auto link = [&](const std::optional<Checkpoint>& child, Stage stage, const std::optional<Digest>& parent) {
    if (!child || !parent) return false;
    require_parent(*child, stage, *parent);
    ++links;
    return true;
  };
  link(r.cfg, Stage::kBaseFm, r.base_d);
  if (!link(r.mean, Stage::kCfgDistilled, r.cfg_d)) link(r.mean, Stage::kBaseFm, r.base_d);
  link(r.pred, Stage::kMeanFlow, r.mean_d);
  link(r.disc, Stage::kMeanFlow, r.mean_d);
  ok = links > 0;
  os << links << " parent links verified";
  return os.str();
}

std::string identity_target(const ExperimentConfig& cfg, const Checkpoint& mean, bool& ok) {
  const LoadedModel m = velocity_model_of(mean);
  Rng rng(derive_seed(cfg.seed, "verify-identity"));
  const std::size_t n = 64;
  const ad::Tensor x = rng.normal_tensor({n, cfg.data.dim()});
  ad::Tensor t({n, 1});
  for (std::size_t i = 0; i < n; ++i) t[i] = rng.uniform();
  const ad::Tensor v = rng.normal_tensor({n, cfg.data.dim()});
  nets::ConditionBatch c;
  c.class_ids = flow::sample_labeled(cfg.data, n, derive_seed(cfg.seed, "verify-labels")).labels;
  if (m.model.config().condition_vocab == 0) c.class_ids.assign(n, nets::kNullClass);
  if (m.model.config().cfg_embed) c = c.with_cfg(cfg.meanflow.g_infer);
  ok = distill::meanflow_target(m.model, m.params, x, t, t, v, c) == v;
  return ok ? "u_tgt equals v bitwise at t = r" : "u_tgt differs from v at t = r";
}

std::string all_full_equivalence(const ExperimentConfig& cfg, const Checkpoint& mean,
                                 const std::optional<Checkpoint>& pred, bool& ok) {
  ExperimentConfig small = cfg;
  small.bench.samples = 128;
  small.bench.chunk_rows = 64;
  const BenchSet set = bench_set(small);
  const LoadedModel m = velocity_model_of(mean);
  const cache::StepSchedule s = cache::plan_schedule(cfg.schedule.total_steps, 1, 0);
  std::optional<nets::Predictor> p;
  std::optional<cache::PredictorHandle> h;
  std::vector<std::string> names = {"naive", "taylor1", "taylor2"};
  if (pred) {
    p.emplace(predictor_config_from_json(pred->config), m.model.parameter_count());
    h = cache::PredictorHandle{&*p, &pred->params, cfg.predictor_train.delta_max};
    names.push_back("disca");
  }
  const ad::Tensor ref = generate(small, m, s, "none", std::nullopt, set, 1).x0;
  ok = true;
  std::string bad;
  for (const auto& name : names)
    if (!(generate(small, m, s, name, name == "disca" ? h : std::nullopt, set, 1).x0 == ref)) {
      ok = false;
      bad += " " + name;
    }
  return ok ? std::to_string(names.size()) + " strategies bit-identical to the uncached sampler" : "differs:" + bad;
}

}  // namespace

std::vector<CheckResult> verify_invariants(const ExperimentConfig& cfg, const std::optional<std::string>& run_dir) {
  std::vector<CheckResult> out;
  out.push_back(check("restricted interval draws", restricted_draws));
  out.push_back(check("schedule fixture counts", fixture_counts));
  out.push_back(check("taylor polynomial exactness", taylor_polynomials));
  if (!run_dir) return out;

  std::optional<RunFiles> run;
  out.push_back(check("checkpoints load", [&](bool& ok) {
    run = load_run(*run_dir);
    ok = run->base || run->cfg || run->mean || run->pred || run->disc;
    return ok ? std::string("digests verified") : "no checkpoints in " + *run_dir;
  }));
  if (!run) return out;
  out.push_back(check("lineage chain", [&](bool& ok) { return lineage_chain(*run, ok); }));
  if (run->mean) {
    out.push_back(check("t = r target identity", [&](bool& ok) { return identity_target(cfg, *run->mean, ok); }));
    out.push_back(check("all-FULL caching equivalence",
                        [&](bool& ok) { return all_full_equivalence(cfg, *run->mean, run->pred, ok); }));
  }
  return out;
}

}  // namespace disca::bench
