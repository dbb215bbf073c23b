#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "disca/ad/tensor.hpp"

namespace disca::ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  // Null when the node carries no tangent (i.e. a zero tangent).
  const Tensor* tangent() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records a computation for one reverse sweep and carries forward-mode
/// tangents alongside primal values. Any node whose inputs carry tangents gets
/// its own tangent computed eagerly, so a jvp is just a forward pass with
/// seeded inputs.
///
/// Closed primitive set (each has a reverse rule and a tangent rule):
///   add sub mul scale add_row mul_col matmul affine div_scalar
///   tanh gelu sin cos square max_const sum mean concat_cols slice_cols stopgrad
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf without gradient or tangent.
  Var constant(Tensor value);
  // Leaf with an optional tangent seed; `requires_grad` makes it a gradient sink.
  Var input(Tensor value, std::optional<Tensor> tangent = std::nullopt,
            bool requires_grad = false);

  // Reverse sweep from a single-element node. Callable once per tape.
  void backward(Var loss);

  // Gradient accumulated into `v` (zeros when nothing reached it).
  Tensor grad(Var v) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Used by primitives only.
  Var push(const char* op, Tensor value, std::optional<Tensor> tangent,
           std::initializer_list<Var> inputs, Backward backward);
  Var push(const char* op, Tensor value, std::optional<Tensor> tangent,
           const std::vector<Var>& inputs, Backward backward);
  void accumulate(std::size_t id, const Tensor& g);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor* tangent(std::size_t id) const {
    return nodes_[id].tangent ? &*nodes_[id].tangent : nullptr;
  }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "leaf";
    Tensor value;
    std::optional<Tensor> tangent;
    std::optional<Tensor> grad;
    bool requires_grad = false;
    Backward backward;
  };
  Var push_impl(const char* op, Tensor value, std::optional<Tensor> tangent,
                bool requires_grad, Backward backward);

  std::vector<Node> nodes_;
  bool swept_ = false;
};

// ---- primitives ------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
// a[B,H] + bias[H] broadcast over rows.
Var add_row(Var a, Var bias);
// a[B,H] * col[B,1], row i scaled by col[i].
Var mul_col(Var a, Var col);
Var matmul(Var a, Var b);
// x[B,in] * W[out,in]^T + b[out].
Var affine(Var x, Var weight, Var bias);
// a / s with s a single-element node.
Var div_scalar(Var a, Var s);
Var tanh(Var a);
// tanh-approximation GELU.
Var gelu(Var a);
Var sin(Var a);
Var cos(Var a);
Var square(Var a);
// max(a, c) elementwise; at a == c the subgradient is 0.
Var max_const(Var a, double c);
Var sum(Var a);
Var mean(Var a);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
// Identity forward; zero gradient and zero tangent.
Var stopgrad(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace disca::ad
