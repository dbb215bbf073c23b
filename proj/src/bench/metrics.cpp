#include "disca/bench/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "disca/errors.hpp"

namespace disca::bench {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_sets(const ad::Tensor& a, const ad::Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "w2: inputs must be [n, d]");
  require(a.rows() == b.rows(), "w2: sample counts differ (" + std::to_string(a.rows()) + " vs " +
                                    std::to_string(b.rows()) + ")");
  require(a.cols() == b.cols(), "w2: dimensions differ");
  require(a.cols() == 1 || a.cols() == 2, "w2: only d = 1 or d = 2 is supported");
  require(a.rows() >= 1, "w2: empty sets");
}

Mat sq_dist(const ad::Tensor& a, const ad::Tensor& b) {
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  Mat c(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = a.at(i, k) - b.at(j, k);
        s += diff * diff;
      }
      c(i, j) = s;
    }
  return c;
}

}  // namespace

std::vector<std::size_t> min_cost_assignment(const std::vector<double>& cost, std::size_t n) {
  require(cost.size() == n * n, "assignment: cost matrix is not n x n");
  // Shortest augmenting paths with row/column potentials (1-based, slot 0 is virtual).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of_row(n);
  for (std::size_t j = 1; j <= n; ++j) col_of_row[p[j] - 1] = j - 1;
  return col_of_row;
}

double sinkhorn_w2(const ad::Tensor& a, const ad::Tensor& b, const SinkhornOptions& opt) {
  check_sets(a, b);
  const std::size_t n = a.rows();
  const Eigen::Index N = static_cast<Eigen::Index>(n);
  const Mat c = sq_dist(a, b);
  const double scale = c.mean();
  if (scale == 0.0) return 0.0;
  const double eps_final = opt.epsilon_rel * scale;
  const double w = 1.0 / static_cast<double>(n);

  // Stabilized scaling iterations: the plan is diag(u) K diag(v) with
  // K = exp((f + g - C) / eps); large scalings are folded into f and g.
  Eigen::VectorXd f = Eigen::VectorXd::Zero(N), g = f, u = Eigen::VectorXd::Ones(N), v = u;
  Mat k;
  double eps = scale;
  auto rebuild = [&] {
    f.array() += eps * u.array().log();
    g.array() += eps * v.array().log();
    u.setOnes();
    v.setOnes();
    k = (((-c).colwise() + f).rowwise() + g.transpose()).array() / eps;
    k = k.array().exp();
  };
  rebuild();
  std::size_t iters = 0;
  while (true) {
    const bool last = eps == eps_final;
    for (std::size_t it = 0; (last || it < 50) && iters < opt.max_iters; ++it, ++iters) {
      u = (w / (k * v).array()).matrix();
      v = (w / (k.transpose() * u).array()).matrix();
      if (u.array().log().abs().maxCoeff() > 30.0 || v.array().log().abs().maxCoeff() > 30.0 ||
          !u.allFinite() || !v.allFinite())
        rebuild();
      if (last && it % 10 == 9) {
        const double err = (u.array() * (k * v).array() - w).abs().sum();
        if (err < opt.tolerance) break;
      }
    }
    if (last || iters >= opt.max_iters) break;
    rebuild();
    eps = std::max(eps / 4.0, eps_final);
    rebuild();
  }
  const Mat plan = (u.asDiagonal() * k * v.asDiagonal());
  return std::sqrt(std::max((plan.array() * c.array()).sum(), 0.0));
}

double w2_distance(const ad::Tensor& a, const ad::Tensor& b, const SinkhornOptions& opt) {
  check_sets(a, b);
  const std::size_t n = a.rows();
  if (a.cols() == 1) {
    std::vector<double> x(a.data().begin(), a.data().end()), y(b.data().begin(), b.data().end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(s / static_cast<double>(n));
  }
  if (n > kExactAssignmentLimit) return sinkhorn_w2(a, b, opt);
  const Mat c = sq_dist(a, b);
  const std::vector<double> cost(c.data(), c.data() + c.size());
  const std::vector<std::size_t> match = min_cost_assignment(cost, n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(match[i]));
  return std::sqrt(s / static_cast<double>(n));
}

double energy_distance(const ad::Tensor& a, const ad::Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.cols(), "energy_distance: inputs must be [n, d]");
  require(a.rows() >= 2 && b.rows() >= 2, "energy_distance: need at least two points per set");
  auto mean_dist = [](const ad::Tensor& x, const ad::Tensor& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < y.rows(); ++j) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < x.cols(); ++k) d2 += (x.at(i, k) - y.at(j, k)) * (x.at(i, k) - y.at(j, k));
        s += std::sqrt(d2);
      }
    return s / static_cast<double>(x.rows() * y.rows());
  };
  return std::max(0.0, 2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b));
}

}  // namespace disca::bench
