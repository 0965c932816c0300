// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense compute kernels. The default namespace holds the OpenMP versions;
// `reference` holds straightforward serial loops used by the tests and the
// benchmark as a baseline. Both reduce in the same order, so results agree
// bit for bit regardless of thread count.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace whisma::kernels {

// Below this many multiply-adds a parallel region costs more than it saves.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

/// y[j] += a * x[j]
template <typename T>
inline void axpy(std::size_t n, T a, const T* __restrict x, T* __restrict y) {
  for (std::size_t j = 0; j < n; ++j) y[j] += a * x[j];
}

/// C[M,N] (+)= op(A) * op(B); op(A) is [M,K], op(B) is [K,N].
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c, bool accumulate) {
  const bool par = m * n * k >= kParallelThreshold;
  // op(B) is materialized as [K,N] so the inner loop runs over contiguous
  // columns; every output still accumulates p in ascending order.
  std::vector<T> bt;
  if (trans_b) {
    bt.resize(k * n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    }
    b = bt.data();
  }
#pragma omp parallel if (par)
  {
    std::vector<T> acc(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      T* crow = c + i * n;
      std::fill(acc.begin(), acc.end(), T(0));
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        const T* brow = b + p * n;
        axpy(n, av, brow, acc.data());
      }
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += acc[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] = acc[j];
      }
    }
  }
}

/// Output length of a 1-D convolution.
constexpr std::size_t conv1d_out_len(std::size_t len, std::size_t kernel, std::size_t stride,
                                     std::size_t pad) {
  return (len + 2 * pad - kernel) / stride + 1;
}

/// y[Cout, Tout] = conv(x[Cin, T], w[Cout, Cin, K]) + bias[Cout].
template <typename T>
void conv1d(const T* x, std::size_t c_in, std::size_t len, const T* w, const T* bias,
            std::size_t c_out, std::size_t kernel, std::size_t stride, std::size_t pad, T* y) {
  const std::size_t out_len = conv1d_out_len(len, kernel, stride, pad);
  const std::size_t patch = c_in * kernel;
  // im2col: cols[(c, k), t]
  std::vector<T> cols(patch * out_len, T(0));
  const bool par = patch * out_len * c_out >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t cc = 0; cc < static_cast<std::ptrdiff_t>(c_in); ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    for (std::size_t kk = 0; kk < kernel; ++kk) {
      T* row = cols.data() + (c * kernel + kk) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + kk) -
                                   static_cast<std::ptrdiff_t>(pad);
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) row[t] = x[c * len + src];
      }
    }
  }
  gemm(false, false, c_out, out_len, patch, w, cols.data(), y, false);
  for (std::size_t o = 0; o < c_out; ++o) {
    const T bo = bias ? bias[o] : T(0);
    for (std::size_t t = 0; t < out_len; ++t) y[o * out_len + t] += bo;
  }
}

/// Multi-head scaled dot-product attention over row-major [T, d] inputs.
/// Query row i sits at absolute position `offset + i`; with `causal`, keys
/// beyond that position receive an additive -inf before the softmax.
/// `probs` receives the [heads, Tq, Tk] attention weights when non-null.
template <typename T>
void attention(const T* q, const T* k, const T* v, std::size_t tq, std::size_t tk,
               std::size_t d, std::size_t heads, bool causal, std::size_t offset, T* out,
               T* probs) {
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const bool par = heads * tq * tk * dh >= kParallelThreshold;
  // Keys transposed per head to [h][p][j] so the score loop runs over
  // contiguous j; each score still accumulates p in ascending order.
  std::vector<T> kt(d * tk);
  for (std::size_t j = 0; j < tk; ++j) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t p = 0; p < dh; ++p) kt[(h * dh + p) * tk + j] = k[j * d + h * dh + p];
    }
  }
#pragma omp parallel if (par)
  {
    std::vector<T> w(tk);
    std::vector<T> o(dh);
#pragma omp for schedule(static) collapse(2)
    for (std::ptrdiff_t hh = 0; hh < static_cast<std::ptrdiff_t>(heads); ++hh) {
      for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(tq); ++ii) {
        const auto h = static_cast<std::size_t>(hh);
        const auto i = static_cast<std::size_t>(ii);
        const T* qi = q + i * d + h * dh;
        std::fill(w.begin(), w.end(), T(0));
        for (std::size_t p = 0; p < dh; ++p) {
          const T qp = qi[p];
          const T* krow = kt.data() + (h * dh + p) * tk;
          axpy(tk, qp, krow, w.data());
        }
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < tk; ++j) {
          T s = w[j] * scale;
          if (causal && j > offset + i) s += -std::numeric_limits<T>::infinity();
          w[j] = s;
          if (s > mx) mx = s;
        }
        T sum = T(0);
        for (std::size_t j = 0; j < tk; ++j) {
          w[j] = std::exp(w[j] - mx);
          sum += w[j];
        }
        for (std::size_t j = 0; j < tk; ++j) w[j] /= sum;
        std::fill(o.begin(), o.end(), T(0));
        for (std::size_t j = 0; j < tk; ++j) axpy(dh, w[j], v + j * d + h * dh, o.data());
        std::copy(o.begin(), o.end(), out + i * d + h * dh);
        if (probs) {
          T* pi = probs + (h * tq + i) * tk;
          for (std::size_t j = 0; j < tk; ++j) pi[j] = w[j];
        }
      }
    }
  }
}

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = T(0);
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        const T bv = trans_b ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

template <typename T>
void conv1d(const T* x, std::size_t c_in, std::size_t len, const T* w, const T* bias,
            std::size_t c_out, std::size_t kernel, std::size_t stride, std::size_t pad, T* y) {
  const std::size_t out_len = conv1d_out_len(len, kernel, stride, pad);
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t t = 0; t < out_len; ++t) {
      T s = T(0);
      for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t kk = 0; kk < kernel; ++kk) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + kk) -
                                     static_cast<std::ptrdiff_t>(pad);
          const T xv = (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) ? x[c * len + src]
                                                                              : T(0);
          s += w[(o * c_in + c) * kernel + kk] * xv;
        }
      }
      y[o * out_len + t] = s + (bias ? bias[o] : T(0));
    }
  }
}

template <typename T>
void attention(const T* q, const T* k, const T* v, std::size_t tq, std::size_t tk,
               std::size_t d, std::size_t heads, bool causal, std::size_t offset, T* out) {
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<T> mask(tq * tk, T(0));
  if (causal) {
    for (std::size_t i = 0; i < tq; ++i)
      for (std::size_t j = offset + i + 1; j < tk; ++j)
        mask[i * tk + j] = -std::numeric_limits<T>::infinity();
  }
  std::vector<T> w(tk);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < tq; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < tk; ++j) {
        T s = T(0);
        for (std::size_t p = 0; p < dh; ++p) s += q[i * d + h * dh + p] * k[j * d + h * dh + p];
        w[j] = s * scale + mask[i * tk + j];
        mx = std::max(mx, w[j]);
      }
      T sum = T(0);
      for (std::size_t j = 0; j < tk; ++j) {
        w[j] = std::exp(w[j] - mx);
        sum += w[j];
      }
      for (std::size_t p = 0; p < dh; ++p) {
        T o = T(0);
        for (std::size_t j = 0; j < tk; ++j) o += (w[j] / sum) * v[j * d + h * dh + p];
        out[i * d + h * dh + p] = o;
      }
    }
  }
}

}  // namespace reference
}  // namespace whisma::kernels
