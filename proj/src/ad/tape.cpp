#include "disca/ad/tape.hpp"

#include <cmath>
#include <numbers>

#include "disca/errors.hpp"
#include "kernels.hpp"

namespace disca::ad {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor* Var::tangent() const { return tape_->tangent(id_); }

Var Tape::constant(Tensor value) { return push_impl("constant", std::move(value), {}, false, {}); }

Var Tape::input(Tensor value, std::optional<Tensor> tangent, bool requires_grad) {
  if (tangent) require_same_shape(value, *tangent, "input tangent");
  return push_impl("input", std::move(value), std::move(tangent), requires_grad, {});
}

Var Tape::push_impl(const char* op, Tensor value, std::optional<Tensor> tangent,
                    bool requires_grad, Backward backward) {
  if (!value.all_finite())
    throw NumericError(op, std::string("non-finite value produced by primitive '") + op + "'");
  if (tangent && !tangent->all_finite())
    throw NumericError(op, std::string("non-finite tangent produced by primitive '") + op + "'");
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.tangent = std::move(tangent);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(const char* op, Tensor value, std::optional<Tensor> tangent,
               std::initializer_list<Var> inputs, Backward backward) {
  bool rg = false;
  for (const Var& v : inputs) {
    require(v.tape() == this, std::string(op) + ": operand from a different tape");
    rg = rg || nodes_[v.id()].requires_grad;
  }
  return push_impl(op, std::move(value), std::move(tangent), rg, std::move(backward));
}

Var Tape::push(const char* op, Tensor value, std::optional<Tensor> tangent,
               const std::vector<Var>& inputs, Backward backward) {
  bool rg = false;
  for (const Var& v : inputs) {
    require(v.tape() == this, std::string(op) + ": operand from a different tape");
    rg = rg || nodes_[v.id()].requires_grad;
  }
  return push_impl(op, std::move(value), std::move(tangent), rg, std::move(backward));
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  require_same_shape(n.value, g, "gradient accumulation");
  if (!n.grad) {
    n.grad = g;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) (*n.grad)[i] += g[i];
  }
}

void Tape::backward(Var loss) {
  require(loss.tape() == this, "backward: loss from a different tape");
  require(loss.value().size() == 1, "backward: loss must be a scalar, got shape " +
                                        shape_str(loss.shape()));
  require(!swept_, "backward: tape already swept");
  swept_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Tensor(loss.shape(), 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad || !n.backward) continue;
    const Tensor g = *n.grad;
    if (!g.all_finite()) throw NumericError(n.op, std::string("non-finite gradient at '") + n.op + "'");
    n.backward(*this, g);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.grad ? *n.grad : Tensor::zeros_like(n.value);
}

namespace {

bool any_tangent(std::initializer_list<Var> vs) {
  for (const Var& v : vs)
    if (v.tangent()) return true;
  return false;
}

// Sum of optional tangents; missing ones count as zero.
Tensor tangent_or_zero(Var v) { return v.tangent() ? *v.tangent() : Tensor::zeros_like(v.value()); }

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out = a;
  for (double& v : out.data()) v = f(v);
  return out;
}

void check_matrix(Var a, const char* op) {
  require(a.value().rank() == 2, std::string(op) + ": expected rank-2 operand, got " +
                                     shape_str(a.shape()));
}

}  // namespace

Var add(Var a, Var b) {
  Tape& tp = *a.tape();
  Tensor out = a.value() + b.value();
  std::optional<Tensor> tan;
  if (any_tangent({a, b})) tan = tangent_or_zero(a) + tangent_or_zero(b);
  const auto ia = a.id(), ib = b.id();
  return tp.push("add", std::move(out), std::move(tan), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& tp = *a.tape();
  Tensor out = a.value() - b.value();
  std::optional<Tensor> tan;
  if (any_tangent({a, b})) tan = tangent_or_zero(a) - tangent_or_zero(b);
  const auto ia = a.id(), ib = b.id();
  return tp.push("sub", std::move(out), std::move(tan), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) t.accumulate(ib, -1.0 * g);
  });
}

Var mul(Var a, Var b) {
  Tape& tp = *a.tape();
  Tensor out = hadamard(a.value(), b.value());
  std::optional<Tensor> tan;
  if (any_tangent({a, b})) {
    Tensor t = Tensor::zeros_like(out);
    if (a.tangent()) t = t + hadamard(*a.tangent(), b.value());
    if (b.tangent()) t = t + hadamard(a.value(), *b.tangent());
    tan = std::move(t);
  }
  const auto ia = a.id(), ib = b.id();
  return tp.push("mul", std::move(out), std::move(tan), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, hadamard(g, t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, hadamard(g, t.value(ia)));
  });
}

Var scale(Var a, double c) {
  Tape& tp = *a.tape();
  std::optional<Tensor> tan;
  if (a.tangent()) tan = c * *a.tangent();
  const auto ia = a.id();
  return tp.push("scale", c * a.value(), std::move(tan), {a},
                 [ia, c](Tape& t, const Tensor& g) { t.accumulate(ia, c * g); });
}

Var add_row(Var a, Var bias) {
  check_matrix(a, "add_row");
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  require(bias.value().rank() == 1 && bias.value().size() == cols,
          "add_row: bias shape " + shape_str(bias.shape()) + " vs matrix " + shape_str(a.shape()));
  Tape& tp = *a.tape();
  Tensor out = a.value();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += bias.value()[j];
  std::optional<Tensor> tan;
  if (any_tangent({a, bias})) {
    Tensor t = tangent_or_zero(a);
    if (bias.tangent())
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) t[i * cols + j] += (*bias.tangent())[j];
    tan = std::move(t);
  }
  const auto ia = a.id(), ib = bias.id();
  return tp.push("add_row", std::move(out), std::move(tan), {a, bias},
                 [ia, ib, rows, cols](Tape& t, const Tensor& g) {
                   t.accumulate(ia, g);
                   if (t.requires_grad(ib)) {
                     Tensor gb({cols});
                     for (std::size_t i = 0; i < rows; ++i)
                       for (std::size_t j = 0; j < cols; ++j) gb[j] += g[i * cols + j];
                     t.accumulate(ib, gb);
                   }
                 });
}

Var mul_col(Var a, Var col) {
  check_matrix(a, "mul_col");
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  require(col.value().size() == rows && col.value().cols() == 1,
          "mul_col: column shape " + shape_str(col.shape()) + " vs matrix " + shape_str(a.shape()));
  Tape& tp = *a.tape();
  Tensor out = scale_rows(a.value(), col.value());
  std::optional<Tensor> tan;
  if (any_tangent({a, col})) {
    Tensor t = Tensor::zeros_like(out);
    if (a.tangent()) t = t + scale_rows(*a.tangent(), col.value());
    if (col.tangent()) t = t + scale_rows(a.value(), *col.tangent());
    tan = std::move(t);
  }
  const auto ia = a.id(), ic = col.id();
  return tp.push("mul_col", std::move(out), std::move(tan), {a, col},
                 [ia, ic, rows, cols](Tape& t, const Tensor& g) {
                   if (t.requires_grad(ia)) t.accumulate(ia, scale_rows(g, t.value(ic)));
                   if (t.requires_grad(ic)) {
                     const Tensor& av = t.value(ia);
                     Tensor gc = Tensor::zeros_like(t.value(ic));
                     for (std::size_t i = 0; i < rows; ++i)
                       for (std::size_t j = 0; j < cols; ++j) gc[i] += g[i * cols + j] * av[i * cols + j];
                     t.accumulate(ic, gc);
                   }
                 });
}

Var matmul(Var a, Var b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  require(a.value().cols() == b.value().rows(),
          "matmul: inner dimension mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tape& tp = *a.tape();
  Tensor out = kernels::gemm(a.value(), b.value());
  std::optional<Tensor> tan;
  if (any_tangent({a, b})) {
    Tensor t = Tensor::zeros_like(out);
    if (a.tangent()) t = t + kernels::gemm(*a.tangent(), b.value());
    if (b.tangent()) t = t + kernels::gemm(a.value(), *b.tangent());
    tan = std::move(t);
  }
  const auto ia = a.id(), ib = b.id();
  return tp.push("matmul", std::move(out), std::move(tan), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, kernels::gemm_nt(g, t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, kernels::gemm_tn(t.value(ia), g));
  });
}

Var affine(Var x, Var weight, Var bias) {
  check_matrix(x, "affine");
  check_matrix(weight, "affine");
  const std::size_t out_dim = weight.value().rows();
  require(x.value().cols() == weight.value().cols(),
          "affine: input width " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
  require(bias.value().rank() == 1 && bias.value().size() == out_dim,
          "affine: bias shape " + shape_str(bias.shape()));
  Tape& tp = *x.tape();
  const std::size_t rows = x.value().rows();
  Tensor out = kernels::gemm_nt(x.value(), weight.value());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += bias.value()[j];
  std::optional<Tensor> tan;
  if (any_tangent({x, weight, bias})) {
    Tensor t = Tensor::zeros_like(out);
    if (x.tangent()) t = t + kernels::gemm_nt(*x.tangent(), weight.value());
    if (weight.tangent()) t = t + kernels::gemm_nt(x.value(), *weight.tangent());
    if (bias.tangent())
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < out_dim; ++j) t[i * out_dim + j] += (*bias.tangent())[j];
    tan = std::move(t);
  }
  const auto ix = x.id(), iw = weight.id(), ib = bias.id();
  return tp.push("affine", std::move(out), std::move(tan), {x, weight, bias},
                 [ix, iw, ib, rows, out_dim](Tape& t, const Tensor& g) {
                   if (t.requires_grad(ix)) t.accumulate(ix, kernels::gemm(g, t.value(iw)));
                   if (t.requires_grad(iw)) t.accumulate(iw, kernels::gemm_tn(g, t.value(ix)));
                   if (t.requires_grad(ib)) {
                     Tensor gb({out_dim});
                     for (std::size_t i = 0; i < rows; ++i)
                       for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[i * out_dim + j];
                     t.accumulate(ib, gb);
                   }
                 });
}

Var div_scalar(Var a, Var s) {
  require(s.value().size() == 1, "div_scalar: divisor must have one element");
  const double sv = s.value()[0];
  require(sv != 0.0, "div_scalar: division by zero");
  Tape& tp = *a.tape();
  Tensor out = (1.0 / sv) * a.value();
  std::optional<Tensor> tan;
  if (any_tangent({a, s})) {
    Tensor t = Tensor::zeros_like(out);
    if (a.tangent()) t = t + (1.0 / sv) * *a.tangent();
    if (s.tangent()) t = t + (-(*s.tangent())[0] / (sv * sv)) * a.value();
    tan = std::move(t);
  }
  const auto ia = a.id(), is = s.id();
  return tp.push("div_scalar", std::move(out), std::move(tan), {a, s},
                 [ia, is, sv](Tape& t, const Tensor& g) {
                   if (t.requires_grad(ia)) t.accumulate(ia, (1.0 / sv) * g);
                   if (t.requires_grad(is)) {
                     Tensor gs = Tensor::zeros_like(t.value(is));
                     gs[0] = -dot(g, t.value(ia)) / (sv * sv);
                     t.accumulate(is, gs);
                   }
                 });
}

namespace {

// Elementwise op with derivative d(x) evaluated at the input.
template <typename F, typename D>
Var unary(const char* op, Var a, F f, D d) {
  Tape& tp = *a.tape();
  Tensor out = map(a.value(), f);
  std::optional<Tensor> tan;
  if (a.tangent()) {
    Tensor t = *a.tangent();
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] *= d(x[i]);
    tan = std::move(t);
  }
  const auto ia = a.id();
  return tp.push(op, std::move(out), std::move(tan), {a}, [ia, d](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= d(x[i]);
    t.accumulate(ia, gx);
  });
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu_f(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double gelu_d(double x) {
  const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

}  // namespace

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double x) {
                 const double y = std::tanh(x);
                 return 1.0 - y * y;
               });
}

Var gelu(Var a) { return unary("gelu", a, gelu_f, gelu_d); }

Var sin(Var a) {
  return unary("sin", a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

Var cos(Var a) {
  return unary("cos", a, [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var max_const(Var a, double c) {
  return unary("max_const", a, [c](double x) { return x > c ? x : c; },
               [c](double x) { return x > c ? 1.0 : 0.0; });
}

Var sum(Var a) {
  Tape& tp = *a.tape();
  std::optional<Tensor> tan;
  if (a.tangent()) tan = Tensor::scalar(ad::sum(*a.tangent()));
  const auto ia = a.id();
  return tp.push("sum", Tensor::scalar(ad::sum(a.value())), std::move(tan), {a},
                 [ia](Tape& t, const Tensor& g) {
                   t.accumulate(ia, Tensor(t.value(ia).shape(), g[0]));
                 });
}

Var mean(Var a) {
  require(a.value().size() > 0, "mean of empty tensor");
  const double inv = 1.0 / static_cast<double>(a.value().size());
  Tape& tp = *a.tape();
  std::optional<Tensor> tan;
  if (a.tangent()) tan = Tensor::scalar(ad::sum(*a.tangent()) * inv);
  const auto ia = a.id();
  return tp.push("mean", Tensor::scalar(ad::sum(a.value()) * inv), std::move(tan), {a},
                 [ia, inv](Tape& t, const Tensor& g) {
                   t.accumulate(ia, Tensor(t.value(ia).shape(), g[0] * inv));
                 });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t rows = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  bool tangent = false;
  for (const Var& p : parts) {
    check_matrix(p, "concat_cols");
    require(p.value().rows() == rows, "concat_cols: row count mismatch");
    widths.push_back(p.value().cols());
    total += p.value().cols();
    tangent = tangent || p.tangent();
  }
  auto assemble = [&](auto get) {
    Tensor out({rows, total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const Tensor* src = get(parts[k]);
      if (src)
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + off + j] = (*src)[i * widths[k] + j];
      off += widths[k];
    }
    return out;
  };
  Tensor out = assemble([](Var v) { return &v.value(); });
  std::optional<Tensor> tan;
  if (tangent) tan = assemble([](Var v) { return v.tangent(); });
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  Tape& tp = *parts.front().tape();
  return tp.push("concat_cols", std::move(out), std::move(tan), parts,
                 [ids, widths, rows, total](Tape& t, const Tensor& g) {
                   std::size_t off = 0;
                   for (std::size_t k = 0; k < ids.size(); ++k) {
                     if (t.requires_grad(ids[k])) {
                       Tensor gk({rows, widths[k]});
                       for (std::size_t i = 0; i < rows; ++i)
                         for (std::size_t j = 0; j < widths[k]; ++j) gk[i * widths[k] + j] = g[i * total + off + j];
                       t.accumulate(ids[k], gk);
                     }
                     off += widths[k];
                   }
                 });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  check_matrix(a, "slice_cols");
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  require(begin < end && end <= cols, "slice_cols: range [" + std::to_string(begin) + "," +
                                          std::to_string(end) + ") outside width " +
                                          std::to_string(cols));
  const std::size_t w = end - begin;
  auto cut = [&](const Tensor& src) {
    Tensor out({rows, w});
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * w + j] = src[i * cols + begin + j];
    return out;
  };
  std::optional<Tensor> tan;
  if (a.tangent()) tan = cut(*a.tangent());
  const auto ia = a.id();
  Tape& tp = *a.tape();
  return tp.push("slice_cols", cut(a.value()), std::move(tan), {a},
                 [ia, rows, cols, begin, w](Tape& t, const Tensor& g) {
                   Tensor ga({rows, cols});
                   for (std::size_t i = 0; i < rows; ++i)
                     for (std::size_t j = 0; j < w; ++j) ga[i * cols + begin + j] = g[i * w + j];
                   t.accumulate(ia, ga);
                 });
}

Var stopgrad(Var a) { return a.tape()->constant(a.value()); }

}  // namespace disca::ad
