#include "disca/nets/predictor.hpp"

#include "disca/errors.hpp"
#include "disca/nets/layers.hpp"

namespace disca::nets {

namespace {

std::string blk(std::size_t i, const char* leaf) { return "blk" + std::to_string(i) + "." + leaf; }

struct Entry {
  std::string name;
  ad::Shape shape;
  bool orthogonal;  // otherwise zeros (or normal for the class table)
};

std::vector<Entry> layout(const PredictorConfig& c) {
  const std::size_t h = c.hidden_dim, e = c.time_embed_dim, d = c.input_dim;
  std::vector<Entry> s = {
      {"in.w", {h, 2 * d}, true},   {"in.b", {h}, false},
      {"temb.w", {h, e}, true},     {"temb.b", {h}, false},
      {"iemb.w", {h, e}, true},     {"iemb.b", {h}, false},
      {"out.w", {d, h + d}, false}, {"out.b", {d}, false},
  };
  if (c.condition_vocab > 0) s.push_back({"cls.table", {c.condition_vocab + 1, h}, false});
  for (std::size_t i = 1; i <= c.depth; ++i) {
    s.push_back({blk(i, "w1"), {h, h}, true});
    s.push_back({blk(i, "b1"), {h}, false});
    s.push_back({blk(i, "w2"), {h, h}, true});
    s.push_back({blk(i, "b2"), {h}, false});
  }
  return s;
}

}  // namespace

Predictor::Predictor(PredictorConfig cfg, std::size_t backbone_params) : cfg_(cfg) {
  require(cfg_.parameter_budget_ratio > 0.0 && cfg_.parameter_budget_ratio <= 0.04,
          "predictor: parameter_budget_ratio must lie in (0, 0.04]");
  require(cfg_.time_embed_dim % 2 == 0, "predictor: time_embed_dim must be even");
  const double limit = cfg_.parameter_budget_ratio * static_cast<double>(backbone_params);
  require(static_cast<double>(parameter_count()) <= limit,
          "predictor: " + std::to_string(parameter_count()) + " parameters exceed budget of " +
              std::to_string(limit) + " (" + std::to_string(backbone_params) + " backbone)");
}

std::size_t Predictor::parameter_count() const {
  std::size_t n = 0;
  for (const Entry& e : layout(cfg_)) n += ad::shape_size(e.shape);
  return n;
}

ad::ParameterSet Predictor::init(Rng& rng) const {
  ad::ParameterSet p;
  for (const Entry& e : layout(cfg_)) {
    if (e.name == "cls.table")
      p.set(e.name, rng.normal_tensor(e.shape));
    else if (e.orthogonal)
      p.set(e.name, orthogonal(e.shape[0], e.shape[1], rng));
    else
      p.set(e.name, ad::Tensor(e.shape));
  }
  // The readout starts as the identity on the cache: an untrained predictor
  // is naive reuse and training learns the correction.
  ad::Tensor& out = p.at("out.w");
  for (std::size_t j = 0; j < cfg_.input_dim; ++j) out.at(j, cfg_.hidden_dim + j) = 1.0;
  return p;
}

ad::Var Predictor::forward(ad::Tape& tape, const ad::ParamVars& p, ad::Var cache, ad::Var x,
                           ad::Var t, ad::Var r, const ConditionBatch& c) const {
  require(cache.shape() == x.shape() && x.value().cols() == cfg_.input_dim,
          "predictor: cache " + ad::shape_str(cache.shape()) + " incompatible with x " +
              ad::shape_str(x.shape()));
  const std::size_t rows = x.value().rows();
  require(t.value().rows() == rows && r.value().rows() == rows && c.rows() == rows,
          "predictor: batch size mismatch");

  ad::Var cond = ad::add(
      ad::affine(time_embed(ad::scale(t, cfg_.time_scale), cfg_.time_embed_dim), p.at("temb.w"), p.at("temb.b")),
      ad::affine(time_embed(ad::scale(ad::sub(t, r), cfg_.time_scale), cfg_.time_embed_dim), p.at("iemb.w"), p.at("iemb.b")));
  if (cfg_.condition_vocab > 0)
    cond = ad::add(cond, ad::matmul(tape.constant(class_one_hot(c, cfg_.condition_vocab)),
                                    p.at("cls.table")));

  ad::Var h = ad::affine(ad::concat_cols({cache, x}), p.at("in.w"), p.at("in.b"));
  for (std::size_t i = 1; i <= cfg_.depth; ++i) {
    ad::Var a = ad::gelu(ad::affine(ad::add(h, cond), p.at(blk(i, "w1")), p.at(blk(i, "b1"))));
    h = ad::add(h, ad::affine(a, p.at(blk(i, "w2")), p.at(blk(i, "b2"))));
  }
  return ad::affine(ad::concat_cols({h, cache}), p.at("out.w"), p.at("out.b"));
}

ad::Tensor Predictor::eval(const ad::ParameterSet& params, const cache::CacheState& state,
                           const ad::Tensor& x, double t, double r, const ConditionBatch& c) const {
  const ad::Tensor& cached = state.get();
  require(r >= 0.0 && r <= t && t <= 1.0, "predictor: invalid time pair");
  ad::Tape tape;
  ad::ParamVars p = ad::bind(tape, params, false);
  return forward(tape, p, tape.constant(cached), tape.constant(x),
                 tape.constant(column(x.rows(), t)), tape.constant(column(x.rows(), r)), c)
      .value();
}

}  // namespace disca::nets
