#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "disca/ad/tape.hpp"
#include "disca/ad/tensor.hpp"

namespace disca::ad {

/// Named weights of one model. Names are kept sorted (std::map), which is
/// also the on-disk order.
class ParameterSet {
 public:
  void set(const std::string& name, Tensor value);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  void erase(const std::string& name) { entries_.erase(name); }

  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::size_t count() const;  // total scalar parameters
  std::size_t size() const { return entries_.size(); }

  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }
  void set_version(std::uint64_t v) { version_ = v; }

  bool all_finite() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::map<std::string, Tensor> entries_;
  std::uint64_t version_ = 0;
};

using Gradients = std::map<std::string, Tensor>;
using ParamVars = std::map<std::string, Var>;

// Places every entry on the tape: as gradient sinks when `trainable`, as
// constants otherwise (frozen networks).
ParamVars bind(Tape& tape, const ParameterSet& params, bool trainable);

struct GradResult {
  double loss = 0.0;
  Gradients grads;
};

using LossFn = std::function<Var(Tape&, const ParamVars&)>;

// Reverse-mode gradient of a scalar loss with respect to every parameter.
GradResult grad(const LossFn& loss_fn, const ParameterSet& params);

struct JvpResult {
  std::vector<Tensor> outputs;
  std::vector<Tensor> tangents;
};

using TangentFn = std::function<std::vector<Var>(Tape&, std::span<const Var>)>;

// Forward-mode directional derivative of `fn` at `primals` along `tangents`.
JvpResult jvp(const TangentFn& fn, std::span<const Tensor> primals,
              std::span<const Tensor> tangents);

double global_norm(const Gradients& grads);
// Rescales so the global norm is at most `max_norm`; returns the pre-clip norm.
double clip_global_norm(Gradients& grads, double max_norm);

}  // namespace disca::ad
