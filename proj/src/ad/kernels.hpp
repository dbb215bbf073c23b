#pragma once

#include <Eigen/Core>

#include "disca/ad/tensor.hpp"

// Dense GEMM kernels backing matmul/affine. Row-major maps over Tensor storage.
namespace disca::ad::kernels {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

inline CMap view(const Tensor& t) {
  return CMap(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline MMap view(Tensor& t) {
  return MMap(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

// A[m,k] * B[k,n]
inline Tensor gemm(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  view(out).noalias() = view(a) * view(b);
  return out;
}

// A[m,k] * B[n,k]^T
inline Tensor gemm_nt(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.rows()});
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

// A[k,m]^T * B[k,n]
inline Tensor gemm_tn(const Tensor& a, const Tensor& b) {
  Tensor out({a.cols(), b.cols()});
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

}  // namespace disca::ad::kernels
