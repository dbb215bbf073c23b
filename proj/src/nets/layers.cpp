#include "disca/nets/layers.hpp"

#include <Eigen/QR>
#include <cmath>

#include "disca/errors.hpp"

namespace disca::nets {

ConditionBatch ConditionBatch::uniform(const Condition& c, std::size_t rows) {
  ConditionBatch b;
  b.class_ids.assign(rows, c.class_id.value_or(kNullClass));
  if (c.cfg_scale) b.cfg_scales.assign(rows, *c.cfg_scale);
  return b;
}

ConditionBatch ConditionBatch::slice(std::size_t begin, std::size_t end) const {
  require(begin <= end && end <= rows(), "ConditionBatch::slice out of range");
  ConditionBatch b;
  b.class_ids.assign(class_ids.begin() + static_cast<std::ptrdiff_t>(begin),
                     class_ids.begin() + static_cast<std::ptrdiff_t>(end));
  if (has_cfg())
    b.cfg_scales.assign(cfg_scales.begin() + static_cast<std::ptrdiff_t>(begin),
                        cfg_scales.begin() + static_cast<std::ptrdiff_t>(end));
  return b;
}

ConditionBatch ConditionBatch::with_cfg(double g) const {
  ConditionBatch b = *this;
  b.cfg_scales.assign(rows(), g);
  return b;
}

ConditionBatch ConditionBatch::as_null() const {
  ConditionBatch b = *this;
  b.class_ids.assign(rows(), kNullClass);
  return b;
}

namespace {

std::vector<double> frequencies(std::size_t dim) {
  require(dim > 0 && dim % 2 == 0, "time_embed: dim must be even and positive, got " +
                                       std::to_string(dim));
  const std::size_t half = dim / 2;
  std::vector<double> w(half);
  for (std::size_t k = 0; k < half; ++k)
    w[k] = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
  return w;
}

}  // namespace

ad::Tensor time_embed(double s, std::size_t dim) {
  const auto w = frequencies(dim);
  const std::size_t half = dim / 2;
  ad::Tensor out({dim});
  for (std::size_t k = 0; k < half; ++k) {
    out[k] = std::sin(w[k] * s);
    out[half + k] = std::cos(w[k] * s);
  }
  return out;
}

ad::Var time_embed(ad::Var s, std::size_t dim) {
  auto w = frequencies(dim);
  require(s.value().rank() == 2 && s.value().cols() == 1, "time_embed: expected a [B,1] column");
  const std::size_t half = w.size();
  ad::Var phase = ad::matmul(s, s.tape()->constant(ad::Tensor({1, half}, std::move(w))));
  return ad::concat_cols({ad::sin(phase), ad::cos(phase)});
}

ad::Tensor orthogonal(std::size_t rows, std::size_t cols, Rng& rng, double gain) {
  const std::size_t big = std::max(rows, cols), small = std::min(rows, cols);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(big), static_cast<Eigen::Index>(small));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  // Sign fix so the distribution is uniform over orthogonal matrices.
  Eigen::MatrixXd r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  ad::Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out[i * cols + j] = gain * (rows >= cols ? q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                                               : q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
  return out;
}

ad::Tensor class_one_hot(const ConditionBatch& c, std::size_t vocab) {
  ad::Tensor out({c.rows(), vocab + 1});
  for (std::size_t i = 0; i < c.rows(); ++i) {
    const int id = c.class_ids[i];
    require(id == kNullClass || (id >= 0 && static_cast<std::size_t>(id) < vocab),
            "class id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab));
    out[i * (vocab + 1) + static_cast<std::size_t>(id + 1)] = 1.0;
  }
  return out;
}

ad::Tensor column(std::size_t rows, double v) { return ad::Tensor({rows, 1}, v); }

}  // namespace disca::nets
