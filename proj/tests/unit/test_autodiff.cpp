#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "disca/ad/optim.hpp"
#include "disca/ad/params.hpp"
#include "disca/ad/spectral.hpp"
#include "disca/ad/tape.hpp"
#include "disca/errors.hpp"
#include "disca/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace disca;
using namespace disca::ad;
using disca::testing::rel_error;

namespace {

using Builder = std::function<Var(const std::vector<Var>&)>;

struct PrimitiveCase {
  std::string name;
  std::vector<Shape> shapes;
  Builder build;
  // Maps raw normal draws into the primitive's comfortable domain.
  std::function<void(std::vector<Tensor>&)> condition = [](std::vector<Tensor>&) {};
};

std::vector<PrimitiveCase> primitive_cases() {
  auto away_from = [](double c) {
    return [c](std::vector<Tensor>& in) {
      for (double& v : in[0].data())
        if (std::abs(v - c) < 1e-2) v += 0.05;
    };
  };
  return {
      {"add", {{3, 4}, {3, 4}}, [](const auto& v) { return add(v[0], v[1]); }},
      {"sub", {{3, 4}, {3, 4}}, [](const auto& v) { return sub(v[0], v[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](const auto& v) { return mul(v[0], v[1]); }},
      {"scale", {{3, 4}}, [](const auto& v) { return scale(v[0], -1.7); }},
      {"add_row", {{3, 4}, {4}}, [](const auto& v) { return add_row(v[0], v[1]); }},
      {"mul_col", {{3, 4}, {3, 1}}, [](const auto& v) { return mul_col(v[0], v[1]); }},
      {"matmul", {{3, 4}, {4, 2}}, [](const auto& v) { return matmul(v[0], v[1]); }},
      {"affine", {{3, 4}, {2, 4}, {2}}, [](const auto& v) { return affine(v[0], v[1], v[2]); }},
      {"div_scalar",
       {{3, 4}, {1}},
       [](const auto& v) { return div_scalar(v[0], v[1]); },
       [](std::vector<Tensor>& in) { in[1][0] = 1.5 + std::abs(in[1][0]); }},
      {"tanh", {{3, 4}}, [](const auto& v) { return tanh(v[0]); }},
      {"gelu", {{3, 4}}, [](const auto& v) { return gelu(v[0]); }},
      {"sin", {{3, 4}}, [](const auto& v) { return sin(v[0]); }},
      {"cos", {{3, 4}}, [](const auto& v) { return cos(v[0]); }},
      {"square", {{3, 4}}, [](const auto& v) { return square(v[0]); }},
      {"max_const", {{3, 4}}, [](const auto& v) { return max_const(v[0], 0.1); }, away_from(0.1)},
      {"sum", {{3, 4}}, [](const auto& v) { return sum(v[0]); }},
      {"mean", {{3, 4}}, [](const auto& v) { return mean(v[0]); }},
      {"concat_cols",
       {{3, 2}, {3, 3}},
       [](const auto& v) { return concat_cols({v[0], v[1]}); }},
      {"slice_cols", {{3, 5}}, [](const auto& v) { return slice_cols(v[0], 1, 4); }},
  };
}

// Scalar probe: sum(build(inputs) * weights), weights a fixed random constant.
Var probe(Tape& tape, const Builder& build, const std::vector<Var>& in, const Tensor& weights) {
  Var out = build(in);
  return sum(mul(out, tape.constant(weights)));
}

Tensor output_shape_weights(const PrimitiveCase& pc, const std::vector<Tensor>& in, Rng& rng) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : in) vars.push_back(tape.constant(t));
  return rng.normal_tensor(pc.build(vars).shape());
}

double probe_value(const PrimitiveCase& pc, const std::vector<Tensor>& in, const Tensor& w) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : in) vars.push_back(tape.constant(t));
  return probe(tape, pc.build, vars, w).value().item();
}

std::vector<Tensor> random_inputs(const PrimitiveCase& pc, Rng& rng) {
  std::vector<Tensor> in;
  for (const auto& s : pc.shapes) in.push_back(rng.normal_tensor(s));
  pc.condition(in);
  return in;
}

// Small two-layer net used by several checks: sum(w3 * tanh(W2 gelu(W1 x + b1) + b2)).
ParameterSet small_net(Rng& rng, std::size_t in = 8, std::size_t hidden = 6) {
  ParameterSet p;
  p.set("w1", rng.normal_tensor({hidden, in}, 0.5));
  p.set("b1", rng.normal_tensor({hidden}, 0.1));
  p.set("w2", rng.normal_tensor({3, hidden}, 0.5));
  p.set("b2", rng.normal_tensor({3}, 0.1));
  return p;
}

Var small_net_forward(const ParamVars& p, Var x) {
  Var h = gelu(affine(x, p.at("w1"), p.at("b1")));
  return tanh(affine(h, p.at("w2"), p.at("b2")));
}

}  // namespace

TEST_CASE("grad of sum(w^2) at w=3 is 6") {
  ParameterSet p;
  p.set("w", Tensor({1}, 3.0));
  GradResult r = grad([](Tape&, const ParamVars& v) { return sum(square(v.at("w"))); }, p);
  CHECK(r.loss == 9.0);
  CHECK(r.grads.at("w")[0] == 6.0);
}

TEST_CASE("perfect linear fit has zero gradient") {
  ParameterSet p;
  p.set("w", Tensor({1}, 1.0));
  GradResult r = grad(
      [](Tape& t, const ParamVars& v) {
        Var x = t.constant(Tensor({1}, 2.0));
        Var y = t.constant(Tensor({1}, 2.0));
        return mean(square(sub(mul(v.at("w"), x), y)));
      },
      p);
  CHECK(r.loss == 0.0);
  CHECK(r.grads.at("w")[0] == 0.0);
}

TEST_CASE("random two-layer net gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, "ad-net"));
    ParameterSet p = small_net(rng);
    const Tensor x = rng.normal_tensor({5, 8});
    const Tensor w = rng.normal_tensor({5, 3});
    auto loss = [&](Tape& t, const ParamVars& v) {
      return sum(mul(small_net_forward(v, t.constant(x)), t.constant(w)));
    };
    GradResult r = grad(loss, p);
    auto f = [&](const ParameterSet& q) {
      Tape t;
      return loss(t, bind(t, q, false)).value().item();
    };
    const Gradients fd = disca::testing::fd_gradient(f, p);
    CHECK(rel_error(disca::testing::flatten(r.grads), disca::testing::flatten(fd)) < 1e-4);
  }
}

TEST_CASE("every primitive: reverse and tangent rules match central differences") {
  for (const PrimitiveCase& pc : primitive_cases()) {
    {
      for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(derive_seed(seed, pc.name));
        std::vector<Tensor> in = random_inputs(pc, rng);
        const Tensor w = output_shape_weights(pc, in, rng);

        Tape tape;
        std::vector<Var> vars;
        for (const auto& t : in) vars.push_back(tape.input(t, std::nullopt, true));
        Var loss = probe(tape, pc.build, vars, w);
        tape.backward(loss);

        for (std::size_t k = 0; k < in.size(); ++k) {
          Tensor fd = Tensor::zeros_like(in[k]);
          for (std::size_t i = 0; i < in[k].size(); ++i) {
            std::vector<Tensor> plus = in, minus = in;
            plus[k][i] += 1e-5;
            minus[k][i] -= 1e-5;
            fd[i] = (probe_value(pc, plus, w) - probe_value(pc, minus, w)) / 2e-5;
          }
          CHECK_MESSAGE(rel_error(tape.grad(vars[k]), fd) < 1e-4, pc.name, " input ", k);
        }

        // Tangent rule along a random direction in all inputs at once.
        std::vector<Tensor> dir;
        for (const auto& t : in) dir.push_back(rng.normal_tensor(t.shape()));
        Tape ft;
        std::vector<Var> fv;
        for (std::size_t k = 0; k < in.size(); ++k) fv.push_back(ft.input(in[k], dir[k]));
        Var out = pc.build(fv);
        const Tensor tangent = out.tangent() ? *out.tangent() : Tensor::zeros_like(out.value());
        auto eval_at = [&](double h) {
          Tape t;
          std::vector<Var> v;
          for (std::size_t k = 0; k < in.size(); ++k) v.push_back(t.constant(in[k] + h * dir[k]));
          return pc.build(v).value();
        };
        const Tensor fd_dir = (1.0 / 2e-5) * (eval_at(1e-5) - eval_at(-1e-5));
        CHECK_MESSAGE(rel_error(tangent, fd_dir) < 1e-4, pc.name, " tangent");
      }
    }
  }
}

TEST_CASE("max_const at the tie has zero subgradient") {
  Tape tape;
  Var a = tape.input(Tensor({3}, std::vector<double>{-1.0, 0.0, 2.0}), Tensor({3}, 1.0), true);
  Var m = max_const(a, 0.0);
  CHECK((*m.tangent())[1] == 0.0);
  tape.backward(sum(m));
  const Tensor g = tape.grad(a);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 1.0);
}

TEST_CASE("stopgrad is identity forward with zero gradient and zero tangent") {
  Tape tape;
  Var a = tape.input(Tensor({2}, std::vector<double>{1.5, -2.0}), Tensor({2}, 1.0), true);
  Var s = stopgrad(a);
  CHECK(s.value() == a.value());
  CHECK(s.tangent() == nullptr);
  tape.backward(sum(mul(s, a)));
  // d/da of sg(a)*a is sg(a) only.
  CHECK(tape.grad(a) == a.value());
}

TEST_CASE("jvp of x^2 at 3 along 1") {
  const std::vector<Tensor> x = {Tensor({1}, 3.0)}, d = {Tensor({1}, 1.0)};
  JvpResult r = jvp([](Tape&, std::span<const Var> v) { return std::vector<Var>{square(v[0])}; },
                    x, d);
  CHECK(r.outputs[0][0] == 9.0);
  CHECK(r.tangents[0][0] == 6.0);
}

TEST_CASE("jvp of a constant linear map along (v, 0, 1)") {
  Rng rng(7);
  const Tensor A = rng.normal_tensor({3, 3});
  const Tensor x = rng.normal_tensor({4, 3}), v = rng.normal_tensor({4, 3});
  const std::vector<Tensor> primals = {x, Tensor({4, 1}, 0.2), Tensor({4, 1}, 0.7)};
  const std::vector<Tensor> tangents = {v, Tensor({4, 1}, 0.0), Tensor({4, 1}, 1.0)};
  JvpResult r = jvp(
      [&](Tape& t, std::span<const Var> in) {
        return std::vector<Var>{matmul(in[0], t.constant(A))};
      },
      primals, tangents);
  Tape t;
  const Tensor expect = matmul(t.constant(v), t.constant(A)).value();
  CHECK(rel_error(r.tangents[0], expect) < 1e-14);
}

TEST_CASE("jvp of a random net matches directional differences and chain rule") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, "ad-jvp"));
    const ParameterSet p = small_net(rng);
    const Tensor x = rng.normal_tensor({5, 8}), d = rng.normal_tensor({5, 8});
    auto f = [&](const Tensor& xin) {
      Tape t;
      return small_net_forward(bind(t, p, false), t.constant(xin)).value();
    };
    JvpResult r = jvp(
        [&](Tape& t, std::span<const Var> in) {
          return std::vector<Var>{small_net_forward(bind(t, p, false), in[0])};
        },
        std::vector<Tensor>{x}, std::vector<Tensor>{d});
    CHECK(r.outputs[0] == f(x));
    CHECK(rel_error(r.tangents[0], disca::testing::fd_directional(f, x, d)) < 1e-4);

    // Chain rule: tangent of the composition equals feeding the inner tangent
    // through the outer map's own jvp.
    auto inner = [&](Tape& t, Var xin) {
      return gelu(affine(xin, t.constant(p.at("w1")), t.constant(p.at("b1"))));
    };
    auto outer = [&](Tape& t, Var h) {
      return tanh(affine(h, t.constant(p.at("w2")), t.constant(p.at("b2"))));
    };
    JvpResult ri = jvp([&](Tape& t, std::span<const Var> in) { return std::vector<Var>{inner(t, in[0])}; },
                       std::vector<Tensor>{x}, std::vector<Tensor>{d});
    JvpResult ro = jvp([&](Tape& t, std::span<const Var> in) { return std::vector<Var>{outer(t, in[0])}; },
                       ri.outputs, ri.tangents);
    CHECK(rel_error(ro.tangents[0], r.tangents[0]) < 1e-12);
  }
}

TEST_CASE("<grad, d> equals the jvp tangent for scalar outputs") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, "ad-dual"));
    const ParameterSet p = small_net(rng);
    const Tensor x = rng.normal_tensor({5, 8}), d = rng.normal_tensor({5, 8});
    Tape tape;
    Var xi = tape.input(x, d, true);
    Var y = sum(small_net_forward(bind(tape, p, false), xi));
    const double tangent = y.tangent()->item();
    tape.backward(y);
    CHECK(rel_error(dot(tape.grad(xi), d), tangent) < 1e-6);
  }
}

TEST_CASE("gradient and jvp contracts") {
  Tape tape;
  Var a = tape.input(Tensor({2, 2}, 1.0), std::nullopt, true);
  CHECK_THROWS_AS(tape.backward(square(a)), ContractViolation);

  Tape t2;
  Var big = t2.input(Tensor({1}, 1e200), std::nullopt, true);
  try {
    (void)square(big);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.primitive() == "square");
  }

  const std::vector<Tensor> x = {Tensor({2}, 1.0)}, d = {Tensor({3}, 1.0)};
  CHECK_THROWS_AS(jvp([](Tape&, std::span<const Var> v) { return std::vector<Var>{v[0]}; }, x, d),
                  ContractViolation);
}

TEST_CASE("computation is deterministic") {
  Rng r1(3), r2(3);
  const ParameterSet p = small_net(r1);
  CHECK(p == small_net(r2));
  const Tensor x = r1.normal_tensor({5, 8});
  auto loss = [&](Tape& t, const ParamVars& v) { return mean(small_net_forward(v, t.constant(x))); };
  GradResult a = grad(loss, p), b = grad(loss, p);
  CHECK(a.loss == b.loss);
  CHECK(a.grads == b.grads);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  ParameterSet p;
  p.set("w", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}));
  const ParameterSet before = p;
  OptimizerState s;
  adam_step(p, {{"w", Tensor({3})}}, s);
  CHECK(p == before);
  CHECK(s.step_count == 1);
}

TEST_CASE("adam: first step with unit gradient moves by -lr") {
  ParameterSet p;
  p.set("w", Tensor({1}, 0.0));
  OptimizerState s(AdamHyper{0.1, 0.9, 0.999, 1e-8});
  adam_step(p, {{"w", Tensor({1}, 1.0)}}, s);
  // m_hat = 1, v_hat = 1: step = -0.1 * 1 / (1 + 1e-8).
  CHECK(p.at("w")[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("adam: converges on a quadratic") {
  ParameterSet p;
  p.set("w", Tensor({1}, 5.0));
  OptimizerState s(AdamHyper{0.05});
  for (int i = 0; i < 1000; ++i) {
    const double w = p.at("w")[0];
    adam_step(p, {{"w", Tensor({1}, 2.0 * (w - 1.5))}}, s);
  }
  CHECK(std::abs(p.at("w")[0] - 1.5) < 1e-3);
}

TEST_CASE("adam: non-finite gradient leaves parameters untouched") {
  ParameterSet p;
  p.set("a", Tensor({1}, 1.0));
  p.set("b", Tensor({1}, 2.0));
  const ParameterSet before = p;
  OptimizerState s;
  Gradients g = {{"a", Tensor({1}, 1.0)}, {"b", Tensor({1}, std::nan(""))}};
  CHECK_THROWS_AS(adam_step(p, g, s), NumericError);
  CHECK(p == before);
  CHECK(s.step_count == 0);
  CHECK_THROWS_AS(OptimizerState(AdamHyper{1e-3, 1.0}), ContractViolation);
}

namespace {

double sigma_max(const Tensor& w) {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      w.ptr(), static_cast<Eigen::Index>(w.rows()), static_cast<Eigen::Index>(w.cols()));
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

}  // namespace

TEST_CASE("spectral_normalize: 3I becomes I") {
  const Tensor w = Tensor::matrix(2, 2, {3, 0, 0, 3});
  SpectralResult r = spectral_normalize(w, Tensor({2}, std::vector<double>{0.6, 0.8}));
  CHECK(rel_error(r.weight, Tensor::matrix(2, 2, {1, 0, 0, 1})) < 1e-15);
  CHECK(r.sigma == doctest::Approx(3.0));
  CHECK_FALSE(r.degenerate);
}

TEST_CASE("spectral_normalize: power iteration converges to the top singular value") {
  Tensor u({2}, std::vector<double>{0.6, 0.8});
  const Tensor d = Tensor::matrix(2, 2, {2, 0, 0, 1});
  SpectralResult r;
  for (int i = 0; i < 20; ++i) {
    r = spectral_normalize(d, u);
    u = r.u_state;
  }
  CHECK(std::abs(sigma_max(r.weight) - 1.0) < 1e-6);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, "sn"));
    const Tensor w = rng.normal_tensor({4, 3});
    Tensor s = rng.normal_tensor({4});
    for (int i = 0; i < 50; ++i) s = spectral_normalize(w, s).u_state;
    const SpectralResult c = spectral_normalize(w, s);
    const double sm = sigma_max(c.weight);
    CHECK(sm >= 0.99);
    CHECK(sm <= 1.01);
  }
}

TEST_CASE("spectral_normalize is scale-equivariant in direction") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, "sn-scale"));
    const Tensor w = rng.normal_tensor({4, 3});
    Tensor u = rng.normal_tensor({4});
    for (int i = 0; i < 50; ++i) u = spectral_normalize(w, u).u_state;
    for (double c : {0.01, 0.5, 3.0, 1e3}) {
      const Tensor a = spectral_normalize(w, u).weight;
      const Tensor b = spectral_normalize(c * w, u).weight;
      CHECK(max_abs(a - b) <= 1e-12);
    }
  }
}

TEST_CASE("spectral_normalize: zero matrix is degenerate") {
  const Tensor z({3, 2});
  SpectralResult r = spectral_normalize(z, Tensor({3}, 1.0));
  CHECK(r.degenerate);
  CHECK(r.weight == z);
}

TEST_CASE("spectral_normalize on the tape matches the plain version and its gradient") {
  Rng rng(11);
  const Tensor w = rng.normal_tensor({4, 3});
  const Tensor u0 = rng.normal_tensor({4});
  Tensor u = u0;
  Tape tape;
  Var wv = tape.input(w, std::nullopt, true);
  Var n = spectral_normalize(wv, u);
  const SpectralResult plain = spectral_normalize(w, u0);
  CHECK(rel_error(n.value(), plain.weight) < 1e-14);
  CHECK(u == plain.u_state);

  // Oracle: with the refined u and v held fixed, f(W) = <C, W> / (u^T W v).
  const Tensor c = rng.normal_tensor({4, 3});
  tape.backward(sum(mul(n, tape.constant(c))));
  std::vector<double> v(3, 0.0);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t i = 0; i < 4; ++i) v[j] += w.at(i, j) * u0[i];
  double vn = 0.0;
  for (double e : v) vn += e * e;
  for (double& e : v) e /= std::sqrt(vn);
  auto f = [&](const ParameterSet& q) {
    const Tensor& wq = q.at("w");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        num += c.at(i, j) * wq.at(i, j);
        den += u[i] * wq.at(i, j) * v[j];
      }
    return num / den;
  };
  ParameterSet p;
  p.set("w", w);
  const Gradients fd = disca::testing::fd_gradient(f, p);
  CHECK(rel_error(tape.grad(wv), fd.at("w")) < 1e-6);
}
