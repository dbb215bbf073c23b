#include "disca/nets/discriminator.hpp"

#include <cmath>

#include "disca/ad/spectral.hpp"
#include "disca/errors.hpp"
#include "disca/nets/layers.hpp"

namespace disca::nets {

namespace {

std::string key(std::size_t k, const char* leaf) { return "s" + std::to_string(k) + "." + leaf; }

}  // namespace

std::vector<std::size_t> default_scales(std::size_t depth) {
  std::vector<std::size_t> s;
  for (std::size_t num : {1u, 2u, 3u}) {
    const std::size_t tap = (num * depth + 2) / 3;
    if (tap >= 1 && (s.empty() || tap > s.back())) s.push_back(tap);
  }
  return s;
}

Discriminator::Discriminator(DiscriminatorConfig cfg, std::size_t extractor_depth) : cfg_(std::move(cfg)) {
  require(!cfg_.scales.empty(), "discriminator: scales must be non-empty");
  for (std::size_t i = 0; i < cfg_.scales.size(); ++i) {
    require(cfg_.scales[i] >= 1 && cfg_.scales[i] <= extractor_depth,
            "discriminator: scale " + std::to_string(cfg_.scales[i]) + " outside extractor depth " +
                std::to_string(extractor_depth));
    require(i == 0 || cfg_.scales[i] > cfg_.scales[i - 1], "discriminator: scales must increase");
  }
}

std::vector<std::string> Discriminator::weight_names() const {
  std::vector<std::string> n;
  for (std::size_t k = 0; k < cfg_.scales.size(); ++k) {
    n.push_back(key(k, "w1"));
    n.push_back(key(k, "w2"));
  }
  return n;
}

ad::ParameterSet Discriminator::init(Rng& rng) const {
  ad::ParameterSet p;
  for (std::size_t k = 0; k < cfg_.scales.size(); ++k) {
    p.set(key(k, "w1"), orthogonal(cfg_.hidden_dim, cfg_.feature_dim, rng));
    p.set(key(k, "b1"), ad::Tensor({cfg_.hidden_dim}));
    p.set(key(k, "w2"), ad::Tensor({1, cfg_.hidden_dim}));
    p.set(key(k, "b2"), ad::Tensor({1}));
  }
  return p;
}

SpectralState Discriminator::init_spectral(Rng& rng) const {
  SpectralState sn;
  for (std::size_t k = 0; k < cfg_.scales.size(); ++k) {
    ad::Tensor u1 = rng.normal_tensor({cfg_.hidden_dim});
    sn[key(k, "w1")] = (1.0 / std::sqrt(ad::dot(u1, u1))) * u1;
    sn[key(k, "w2")] = ad::Tensor({1}, 1.0);
  }
  return sn;
}

ad::Var Discriminator::forward(ad::Tape& tape, const ad::ParamVars& p,
                               const std::vector<ad::Var>& features, SpectralState& sn,
                               bool refine) const {
  require(features.size() == cfg_.scales.size(),
          "discriminator: expected " + std::to_string(cfg_.scales.size()) + " feature scales, got " +
              std::to_string(features.size()));
  auto weight = [&](const std::string& name) {
    ad::Var w = p.at(name);
    if (!cfg_.spectral_norm) return w;
    ad::Tensor& u = sn.at(name);
    if (refine) return ad::spectral_normalize(w, u);
    ad::Tensor scratch = u;
    return ad::spectral_normalize(w, scratch);
  };
  ad::Var score;
  for (std::size_t k = 0; k < features.size(); ++k) {
    require(features[k].value().cols() == cfg_.feature_dim,
            "discriminator: feature width mismatch at scale " + std::to_string(k));
    ad::Var h = ad::gelu(ad::affine(features[k], weight(key(k, "w1")), p.at(key(k, "b1"))));
    ad::Var s = ad::affine(h, weight(key(k, "w2")), p.at(key(k, "b2")));
    score = score.valid() ? ad::add(score, s) : s;
  }
  (void)tape;
  return score;
}

ad::Tensor Discriminator::eval(const ad::ParameterSet& params, const std::vector<ad::Tensor>& features,
                               SpectralState sn) const {
  ad::Tape tape;
  ad::ParamVars p = ad::bind(tape, params, false);
  std::vector<ad::Var> fv;
  for (const auto& f : features) fv.push_back(tape.constant(f));
  return forward(tape, p, fv, sn, false).value();
}

std::map<std::string, ad::Tensor> Discriminator::effective_weights(const ad::ParameterSet& params,
                                                                   const SpectralState& sn) const {
  std::map<std::string, ad::Tensor> out;
  for (const auto& name : weight_names()) {
    const ad::Tensor& w = params.at(name);
    out[name] = cfg_.spectral_norm ? ad::spectral_normalize(w, sn.at(name)).weight : w;
  }
  return out;
}

}  // namespace disca::nets
