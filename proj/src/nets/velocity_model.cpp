#include "disca/nets/velocity_model.hpp"

#include "disca/errors.hpp"
#include "disca/nets/layers.hpp"

namespace disca::nets {

namespace {

std::string blk(std::size_t i, const char* leaf) { return "blk" + std::to_string(i) + "." + leaf; }

// Shapes of every parameter together with how it is initialized.
enum class Init { kOrthogonal, kZero, kNormal };

struct Spec {
  std::string name;
  ad::Shape shape;
  Init init;
};

std::vector<Spec> layout(const VelocityModelConfig& c) {
  const std::size_t h = c.hidden_dim, e = c.time_embed_dim;
  std::vector<Spec> s = {
      {"in.w", {h, c.input_dim}, Init::kOrthogonal},
      {"in.b", {h}, Init::kZero},
      {"temb.w1", {h, e}, Init::kOrthogonal},
      {"temb.b1", {h}, Init::kZero},
      {"temb.w2", {h, h}, Init::kOrthogonal},
      {"temb.b2", {h}, Init::kZero},
      {"out.w", {c.input_dim, h}, Init::kZero},
      {"out.b", {c.input_dim}, Init::kZero},
  };
  if (c.accepts_r) {
    s.push_back({"iemb.w1", {h, e}, Init::kOrthogonal});
    s.push_back({"iemb.b1", {h}, Init::kZero});
    s.push_back({"iemb.w2", {h, h}, Init::kZero});
    s.push_back({"iemb.b2", {h}, Init::kZero});
  }
  if (c.condition_vocab > 0) s.push_back({"cls.table", {c.condition_vocab + 1, h}, Init::kNormal});
  if (c.cfg_embed) {
    s.push_back({"cfg.lin", {h, 1}, Init::kZero});
    s.push_back({"cfg.w1", {c.cfg_hidden, 1}, Init::kOrthogonal});
    s.push_back({"cfg.b1", {c.cfg_hidden}, Init::kZero});
    s.push_back({"cfg.w2", {h, c.cfg_hidden}, Init::kZero});
    s.push_back({"cfg.b2", {h}, Init::kZero});
  }
  for (std::size_t i = 1; i <= c.depth; ++i) {
    s.push_back({blk(i, "w1"), {h, h}, Init::kOrthogonal});
    s.push_back({blk(i, "b1"), {h}, Init::kZero});
    s.push_back({blk(i, "w2"), {h, h}, Init::kOrthogonal});
    s.push_back({blk(i, "b2"), {h}, Init::kZero});
  }
  return s;
}

ad::Tensor make(const Spec& s, Rng& rng) {
  switch (s.init) {
    case Init::kOrthogonal:
      return orthogonal(s.shape[0], s.shape[1], rng);
    case Init::kNormal:
      return rng.normal_tensor(s.shape);
    case Init::kZero:
      break;
  }
  return ad::Tensor(s.shape);
}

}  // namespace

VelocityModel::VelocityModel(VelocityModelConfig cfg) : cfg_(cfg) {
  require(cfg_.input_dim > 0 && cfg_.hidden_dim > 0, "velocity model: dimensions must be positive");
  require(cfg_.depth >= 1, "velocity model: depth must be >= 1");
  require(cfg_.time_embed_dim % 2 == 0, "velocity model: time_embed_dim must be even");
  require(cfg_.time_scale > 0.0, "velocity model: time_scale must be positive");
  require(!cfg_.cfg_embed || (cfg_.g_min > 0.0 && cfg_.g_min <= cfg_.g_max),
          "velocity model: guidance range must satisfy 0 < g_min <= g_max");
}

ad::ParameterSet VelocityModel::init(Rng& rng) const { return init_from({}, rng); }

ad::ParameterSet VelocityModel::init_from(const ad::ParameterSet& from, Rng& rng) const {
  ad::ParameterSet p;
  for (const Spec& s : layout(cfg_)) {
    if (from.contains(s.name)) {
      require(from.at(s.name).shape() == s.shape,
              "init_from: shape mismatch for '" + s.name + "'");
      p.set(s.name, from.at(s.name));
    } else {
      p.set(s.name, make(s, rng));
    }
  }
  return p;
}

std::size_t VelocityModel::parameter_count() const {
  std::size_t n = 0;
  for (const Spec& s : layout(cfg_)) n += ad::shape_size(s.shape);
  return n;
}

void VelocityModel::validate_times(const ad::Tensor& t, const ad::Tensor* r) const {
  require(t.rank() == 2 && t.cols() == 1, "velocity model: t must be a [B,1] column");
  for (double v : t.data()) require(v >= 0.0 && v <= 1.0, "velocity model: t outside [0,1]");
  if (r) {
    require(cfg_.accepts_r, "velocity model: r passed to a model without interval input");
    require(r->shape() == t.shape(), "velocity model: r and t shapes differ");
    for (std::size_t i = 0; i < t.size(); ++i) {
      require((*r)[i] >= 0.0, "velocity model: r outside [0,1]");
      require((*r)[i] <= t[i], "velocity model: r > t (r=" + std::to_string((*r)[i]) +
                                   ", t=" + std::to_string(t[i]) + ")");
    }
  }
}

ad::Var VelocityModel::cfg_embed(ad::Tape& tape, const ad::ParamVars& p, ad::Var g) const {
  require(cfg_.cfg_embed, "cfg_embed: model has no guidance embedding");
  for (double v : g.value().data())
    require(v >= cfg_.g_min && v <= cfg_.g_max,
            "cfg_embed: g=" + std::to_string(v) + " outside [" + std::to_string(cfg_.g_min) + ", " +
                std::to_string(cfg_.g_max) + "]");
  ad::Var lin = ad::affine(g, p.at("cfg.lin"), tape.constant(ad::Tensor({cfg_.hidden_dim})));
  ad::Var hid = ad::gelu(ad::affine(g, p.at("cfg.w1"), p.at("cfg.b1")));
  return ad::add(lin, ad::affine(hid, p.at("cfg.w2"), p.at("cfg.b2")));
}

ad::Tensor VelocityModel::cfg_embed(const ad::ParameterSet& params, double g) const {
  ad::Tape tape;
  ad::ParamVars p = ad::bind(tape, params, false);
  ad::Var e = cfg_embed(tape, p, tape.constant(column(1, g)));
  return e.value().reshaped({cfg_.hidden_dim});
}

ad::Var VelocityModel::forward(ad::Tape& tape, const ad::ParamVars& p, ad::Var x, ad::Var t,
                               std::optional<ad::Var> r, const ConditionBatch& c,
                               std::vector<ad::Var>* taps) const {
  require(x.value().rank() == 2 && x.value().cols() == cfg_.input_dim,
          "velocity model: x must be [B," + std::to_string(cfg_.input_dim) + "], got " +
              ad::shape_str(x.shape()));
  const std::size_t rows = x.value().rows();
  require(t.value().rows() == rows, "velocity model: t rows differ from x rows");
  validate_times(t.value(), r ? &r->value() : nullptr);
  require(c.rows() == rows, "velocity model: condition rows differ from x rows");

  ad::Var te = ad::gelu(ad::affine(time_embed(ad::scale(t, cfg_.time_scale), cfg_.time_embed_dim), p.at("temb.w1"), p.at("temb.b1")));
  ad::Var cond = ad::affine(te, p.at("temb.w2"), p.at("temb.b2"));
  if (r) {
    ad::Var ie = ad::gelu(
        ad::affine(time_embed(ad::scale(ad::sub(t, *r), cfg_.time_scale), cfg_.time_embed_dim), p.at("iemb.w1"), p.at("iemb.b1")));
    cond = ad::add(cond, ad::affine(ie, p.at("iemb.w2"), p.at("iemb.b2")));
  }
  if (cfg_.condition_vocab > 0) {
    cond = ad::add(cond, ad::matmul(tape.constant(class_one_hot(c, cfg_.condition_vocab)),
                                    p.at("cls.table")));
  } else {
    for (int id : c.class_ids)
      require(id == kNullClass, "velocity model: class label given to an unconditional model");
  }
  if (cfg_.cfg_embed) {
    require(c.has_cfg(), "velocity model: guidance scale required by a CFG-distilled model");
    cond = ad::add(cond, cfg_embed(tape, p, tape.constant(ad::Tensor({rows, 1}, c.cfg_scales))));
  } else {
    require(!c.has_cfg(), "velocity model: guidance scale given to a model without cfg input");
  }

  ad::Var h = ad::add(ad::affine(x, p.at("in.w"), p.at("in.b")), cond);
  for (std::size_t i = 1; i <= cfg_.depth; ++i) {
    ad::Var a = ad::gelu(ad::affine(ad::add(h, cond), p.at(blk(i, "w1")), p.at(blk(i, "b1"))));
    h = ad::add(h, ad::affine(a, p.at(blk(i, "w2")), p.at(blk(i, "b2"))));
    if (taps) taps->push_back(h);
  }
  return ad::affine(h, p.at("out.w"), p.at("out.b"));
}

ad::Tensor VelocityModel::eval(const ad::ParameterSet& params, const ad::Tensor& x,
                               const ad::Tensor& t, const ad::Tensor* r,
                               const ConditionBatch& c) const {
  ad::Tape tape;
  ad::ParamVars p = ad::bind(tape, params, false);
  std::optional<ad::Var> rv;
  if (r) rv = tape.constant(*r);
  return forward(tape, p, tape.constant(x), tape.constant(t), rv, c).value();
}

ad::Tensor VelocityModel::eval(const ad::ParameterSet& params, const ad::Tensor& x, double t,
                               std::optional<double> r, const ConditionBatch& c) const {
  const ad::Tensor tc = column(x.rows(), t);
  if (!r) return eval(params, x, tc, nullptr, c);
  const ad::Tensor rc = column(x.rows(), *r);
  return eval(params, x, tc, &rc, c);
}

}  // namespace disca::nets
