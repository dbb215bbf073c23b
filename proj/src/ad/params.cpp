#include "disca/ad/params.hpp"

#include <cmath>

#include "disca/errors.hpp"

namespace disca::ad {

void ParameterSet::set(const std::string& name, Tensor value) {
  require(value.all_finite(), "parameter '" + name + "' is not finite");
  entries_[name] = std::move(value);
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  require(it != entries_.end(), "missing parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = entries_.find(name);
  require(it != entries_.end(), "missing parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& [_, t] : entries_)
    if (!t.all_finite()) return false;
  return true;
}

ParamVars bind(Tape& tape, const ParameterSet& params, bool trainable) {
  ParamVars vars;
  for (const auto& [name, t] : params.entries())
    vars.emplace(name, trainable ? tape.input(t, std::nullopt, true) : tape.constant(t));
  return vars;
}

GradResult grad(const LossFn& loss_fn, const ParameterSet& params) {
  Tape tape;
  ParamVars vars = bind(tape, params, true);
  Var loss = loss_fn(tape, vars);
  require(loss.valid() && loss.value().size() == 1,
          "grad: loss function must return a scalar");
  tape.backward(loss);
  GradResult out;
  out.loss = loss.value()[0];
  for (const auto& [name, v] : vars) out.grads.emplace(name, tape.grad(v));
  return out;
}

JvpResult jvp(const TangentFn& fn, std::span<const Tensor> primals,
              std::span<const Tensor> tangents) {
  require(primals.size() == tangents.size(), "jvp: primal/tangent count mismatch");
  Tape tape;
  std::vector<Var> inputs;
  inputs.reserve(primals.size());
  for (std::size_t i = 0; i < primals.size(); ++i) {
    require_same_shape(primals[i], tangents[i], "jvp");
    inputs.push_back(tape.input(primals[i], tangents[i]));
  }
  std::vector<Var> outs = fn(tape, inputs);
  JvpResult r;
  for (const Var& o : outs) {
    r.outputs.push_back(o.value());
    r.tangents.push_back(o.tangent() ? *o.tangent() : Tensor::zeros_like(o.value()));
  }
  return r;
}

double global_norm(const Gradients& grads) {
  double acc = 0.0;
  for (const auto& [_, g] : grads)
    for (double v : g.data()) acc += v * v;
  return std::sqrt(acc);
}

double clip_global_norm(Gradients& grads, double max_norm) {
  const double n = global_norm(grads);
  if (n > max_norm && n > 0.0) {
    const double s = max_norm / n;
    for (auto& [_, g] : grads)
      for (double& v : g.data()) v *= s;
  }
  return n;
}

}  // namespace disca::ad
