#pragma once

#include <cstddef>

#include "disca/ad/tape.hpp"
#include "disca/ad/tensor.hpp"
#include "disca/nets/condition.hpp"
#include "disca/rng.hpp"

namespace disca::nets {

/// Sinusoidal features [sin(w_k s), cos(w_k s)] with w_k = 10000^(-2k/dim),
/// k = 0 .. dim/2-1. `dim` must be even.
ad::Tensor time_embed(double s, std::size_t dim);

// Batched tape version: s is a [B,1] column, result is [B, dim].
ad::Var time_embed(ad::Var s, std::size_t dim);

// [rows, cols] matrix with orthonormal rows or columns (whichever is fewer),
// scaled by `gain`.
ad::Tensor orthogonal(std::size_t rows, std::size_t cols, Rng& rng, double gain = 1.0);

// [B, vocab+1] one-hot rows; kNullClass maps to column 0.
ad::Tensor class_one_hot(const ConditionBatch& c, std::size_t vocab);

// Constant [B,1] column filled with `v`.
ad::Tensor column(std::size_t rows, double v);

}  // namespace disca::nets
