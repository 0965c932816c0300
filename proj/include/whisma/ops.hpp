// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Every function checks shapes and finiteness of
// its inputs, returns a fresh tensor, and never mutates its arguments.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "whisma/tensor.hpp"

namespace whisma {

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

namespace ops {

// Elementwise / structural helpers.
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& a, T factor);
template <typename T> BasicTensor<T> sum(const BasicTensor<T>& a);
template <typename T> BasicTensor<T> transpose(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> slice_rows(const BasicTensor<T>& a, std::size_t begin, std::size_t end);
template <typename T> BasicTensor<T> concat_rows(const std::vector<BasicTensor<T>>& parts);
/// Appends `extra` zero rows.
template <typename T> BasicTensor<T> pad_rows(const BasicTensor<T>& a, std::size_t extra);

/// [m,k] x [k,n] -> [m,n]
template <typename T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// x[T, in] * W[out, in]^T + b[out]; `bias` may be undefined.
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

/// x[Cin, T] conv w[Cout, Cin, K] + b[Cout] -> [Cout, floor((T + 2 pad - K) / stride) + 1]
template <typename T>
BasicTensor<T> conv1d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t pad);

/// Row-wise layer normalization of [T, d] with affine gamma/beta [d].
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps = T(1e-5));

/// Exact (erf) GELU.
template <typename T> BasicTensor<T> gelu(const BasicTensor<T>& x);

/// Softmax along the last axis.
template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& x);

/// table[V, d] gathered at ids -> [n, d]
template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const std::int32_t> ids);

/// Multi-head attention over pre-projected q[Tq, d], k/v[Tk, d]. Query row i
/// is at absolute position `offset + i` for causal masking.
template <typename T>
BasicTensor<T> attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                         const BasicTensor<T>& v, std::size_t heads, bool causal,
                         std::size_t offset = 0);

/// Mean token cross-entropy of logits[T, V] against targets[T] over positions
/// where mask is true. Returns 0 when no position is selected.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                             const std::vector<bool>& mask);

/// Summed (not averaged) cross-entropy; callers normalize across a batch.
template <typename T>
BasicTensor<T> cross_entropy_sum(const BasicTensor<T>& logits,
                                 std::span<const std::int32_t> targets,
                                 const std::vector<bool>& mask);

}  // namespace ops
}  // namespace whisma
