// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "easwin/autograd.hpp"

namespace easwin {

/// Additive logit that blocks an attention position. Rows whose maximum is
/// at or below half this value are treated as fully masked.
inline constexpr double kMaskedLogit = -1e9;

/// Wrap a tensor as a graph leaf that never receives gradient.
template <typename T>
Variable<T> constant(Tensor<T> value) {
  return Variable<T>(std::move(value), false);
}

/// Batched matrix product a[..., m, k] @ b[..., k, n]; batch extents
/// broadcast numpy-style.
template <typename T>
Variable<T> matmul(const Variable<T>& a, const Variable<T>& b);

/// Elementwise ops with numpy broadcasting.
template <typename T>
Variable<T> add(const Variable<T>& a, const Variable<T>& b);
template <typename T>
Variable<T> mul(const Variable<T>& a, const Variable<T>& b);

template <typename T>
Variable<T> scale(const Variable<T>& a, T factor);

/// Softmax over the last axis computed with max subtraction. A row that is
/// masked everywhere yields zeros.
template <typename T>
Variable<T> softmax_lastdim(const Variable<T>& x);

template <typename T>
Variable<T> layer_norm(const Variable<T>& x, const Variable<T>& gamma, const Variable<T>& beta,
                       T eps = T(1e-5));

/// Exact (erf) GELU.
template <typename T>
Variable<T> gelu(const Variable<T>& x);

template <typename T>
Variable<T> reshape(const Variable<T>& x, Shape shape);

/// Axis permutation; out.shape[i] = x.shape[axes[i]]. Copies.
template <typename T>
Variable<T> permute(const Variable<T>& x, const std::vector<Index>& axes);

/// Views x as rows of `row_width` values and gathers rows by index; -1 rows
/// are zero. Result has `out_shape` (numel == idx.size() * row_width).
template <typename T>
Variable<T> gather_rows(const Variable<T>& x, Index row_width, std::span<const Index> idx,
                        Shape out_shape);

template <typename T>
Variable<T> sum_all(const Variable<T>& x);
template <typename T>
Variable<T> mean_all(const Variable<T>& x);

/// Mean binary cross-entropy on logits, stable softplus form.
/// Labels are 0 (real) or 1 (generated).
template <typename T>
Variable<T> bce_with_logits(const Variable<T>& logits, std::span<const int> labels);

Shape broadcast_shapes(const Shape& a, const Shape& b);

}  // namespace easwin
