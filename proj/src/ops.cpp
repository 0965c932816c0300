// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "whisma/kernels.hpp"

namespace whisma::ops {
namespace {

template <typename T>
using Impl = detail::TensorImpl<T>;

template <typename T>
void check_finite(const char* op, const BasicTensor<T>& t) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string(op) + ": non-finite input value in tensor " +
                           shape_str(t.shape()));
    }
  }
}

[[noreturn]] void shape_fail(const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

template <typename T>
void require_rank(const char* op, const BasicTensor<T>& t, std::size_t rank, const char* name) {
  if (!t.defined()) shape_fail(op, std::string(name) + " is undefined");
  if (t.rank() != rank) {
    shape_fail(op, std::string(name) + " must be rank " + std::to_string(rank) + ", got " +
                       shape_str(t.shape()));
  }
}

// Builds the output node. The backward closure is attached only when some
// input needs gradient; it reaches inputs through node.inputs.
template <typename T>
BasicTensor<T> make_node(const char* op, Shape shape, std::vector<T> data,
                         std::vector<BasicTensor<T>> inputs,
                         std::function<void(Impl<T>&)> backward) {
  auto impl = std::make_shared<Impl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->op = op;
  bool needs = false;
  if (!grad_enabled()) inputs.clear();
  for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
  if (needs) {
    impl->requires_grad = true;
    for (auto& in : inputs) impl->inputs.push_back(in.impl_ptr());
    impl->backward = std::move(backward);
  }
  return BasicTensor<T>(std::move(impl));
}

// Gradient buffer of input i, or nullptr when that input is frozen.
template <typename T>
T* grad_of(Impl<T>& node, std::size_t i) {
  auto& in = node.inputs.at(i);
  if (!in || !in->requires_grad) return nullptr;
  return in->ensure_grad().data();
}

template <typename T>
const T* data_of(Impl<T>& node, std::size_t i) {
  return node.inputs.at(i)->data.data();
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    shape_fail("add", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  check_finite("add", a);
  check_finite("add", b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_node<T>("add", a.shape(), std::move(out), {a, b}, [](Impl<T>& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* g = grad_of(n, k))
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    shape_fail("mul", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  check_finite("mul", a);
  check_finite("mul", b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_node<T>("mul", a.shape(), std::move(out), {a, b}, [](Impl<T>& n) {
    const T* av = data_of(n, 0);
    const T* bv = data_of(n, 1);
    if (T* g = grad_of(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * bv[i];
    if (T* g = grad_of(n, 1))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * av[i];
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  check_finite("scale", a);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_node<T>("scale", a.shape(), std::move(out), {a}, [factor](Impl<T>& n) {
    if (T* g = grad_of(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * factor;
  });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  check_finite("sum", a);
  T s = T(0);
  for (T v : a.data()) s += v;
  return make_node<T>("sum", {1}, {s}, {a}, [](Impl<T>& n) {
    if (T* g = grad_of(n, 0)) {
      const std::size_t len = n.inputs[0]->data.size();
      for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[0];
    }
  });
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  require_rank("transpose", a, 2, "input");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
  return make_node<T>("transpose", {c, r}, std::move(out), {a}, [r, c](Impl<T>& n) {
    if (T* g = grad_of(n, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[j * r + i];
  });
}

template <typename T>
BasicTensor<T> slice_rows(const BasicTensor<T>& a, std::size_t begin, std::size_t end) {
  if (!a.defined() || a.rank() == 0) shape_fail("slice_rows", "input must have rank >= 1");
  if (begin > end || end > a.dim(0)) {
    shape_fail("slice_rows", "range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                 ") outside " + shape_str(a.shape()));
  }
  const std::size_t row = a.size() / std::max<std::size_t>(a.dim(0), 1);
  Shape shape = a.shape();
  shape[0] = end - begin;
  std::vector<T> out(a.data().begin() + begin * row, a.data().begin() + end * row);
  return make_node<T>("slice_rows", shape, std::move(out), {a}, [begin, row](Impl<T>& n) {
    if (T* g = grad_of(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[begin * row + i] += n.grad[i];
  });
}

template <typename T>
BasicTensor<T> concat_rows(const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) shape_fail("concat_rows", "no inputs");
  Shape shape = parts.front().shape();
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  std::vector<T> out;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      shape_fail("concat_rows", "trailing dims differ: " + shape_str(p.shape()) + " vs " +
                                    shape_str(shape));
    }
    check_finite("concat_rows", p);
    offsets.push_back(out.size());
    rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  shape[0] = rows;
  return make_node<T>("concat_rows", shape, std::move(out), parts,
                      [offsets](Impl<T>& n) {
                        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                          if (T* g = grad_of(n, k)) {
                            const std::size_t len = n.inputs[k]->data.size();
                            for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[offsets[k] + i];
                          }
                        }
                      });
}

template <typename T>
BasicTensor<T> pad_rows(const BasicTensor<T>& a, std::size_t extra) {
  if (extra == 0) return a;
  Shape shape = a.shape();
  shape[0] = extra;
  return concat_rows<T>({a, BasicTensor<T>::zeros(shape)});
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank("matmul", a, 2, "lhs");
  require_rank("matmul", b, 2, "rhs");
  if (a.dim(1) != b.dim(0)) {
    shape_fail("matmul", "inner dims differ: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  }
  check_finite("matmul", a);
  check_finite("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  kernels::gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data(), false);
  return make_node<T>("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Impl<T>& node) {
    if (T* g = grad_of(node, 0))
      kernels::gemm(false, true, m, k, n, node.grad.data(), data_of(node, 1), g, true);
    if (T* g = grad_of(node, 1))
      kernels::gemm(true, false, k, n, m, data_of(node, 0), node.grad.data(), g, true);
  });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  require_rank("linear", x, 2, "input");
  require_rank("linear", weight, 2, "weight");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in) {
    shape_fail("linear", "input " + shape_str(x.shape()) + " incompatible with weight " +
                             shape_str(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    shape_fail("linear", "bias " + shape_str(bias.shape()) + " does not match " +
                             std::to_string(out_dim) + " outputs");
  }
  check_finite("linear", x);
  check_finite("linear", weight);
  if (has_bias) check_finite("linear", bias);
  std::vector<T> out(rows * out_dim);
  kernels::gemm(false, true, rows, out_dim, in, x.data().data(), weight.data().data(),
                out.data(), false);
  if (has_bias) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < out_dim; ++o) out[r * out_dim + o] += bias.data()[o];
  }
  std::vector<BasicTensor<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_node<T>("linear", {rows, out_dim}, std::move(out), std::move(inputs),
                      [rows, in, out_dim, has_bias](Impl<T>& n) {
                        const T* dy = n.grad.data();
                        if (T* g = grad_of(n, 0))
                          kernels::gemm(false, false, rows, in, out_dim, dy, data_of(n, 1), g,
                                        true);
                        if (T* g = grad_of(n, 1))
                          kernels::gemm(true, false, out_dim, in, rows, dy, data_of(n, 0), g,
                                        true);
                        if (has_bias) {
                          if (T* g = grad_of(n, 2))
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t o = 0; o < out_dim; ++o) g[o] += dy[r * out_dim + o];
                        }
                      });
}

template <typename T>
BasicTensor<T> conv1d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t pad) {
  require_rank("conv1d", x, 2, "input [channels, time]");
  require_rank("conv1d", weight, 3, "weight [out, in, kernel]");
  const std::size_t c_in = x.dim(0), len = x.dim(1);
  const std::size_t c_out = weight.dim(0), kernel = weight.dim(2);
  if (weight.dim(1) != c_in) {
    shape_fail("conv1d", "input channels " + std::to_string(c_in) + " vs weight " +
                             shape_str(weight.shape()));
  }
  if (stride == 0) shape_fail("conv1d", "stride must be positive");
  if (len + 2 * pad < kernel) {
    shape_fail("conv1d", "input length " + std::to_string(len) + " shorter than kernel " +
                             std::to_string(kernel));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != c_out)) {
    shape_fail("conv1d", "bias " + shape_str(bias.shape()) + " does not match " +
                             std::to_string(c_out) + " channels");
  }
  check_finite("conv1d", x);
  check_finite("conv1d", weight);
  if (has_bias) check_finite("conv1d", bias);
  const std::size_t out_len = kernels::conv1d_out_len(len, kernel, stride, pad);
  std::vector<T> out(c_out * out_len);
  kernels::conv1d(x.data().data(), c_in, len, weight.data().data(),
                  has_bias ? bias.data().data() : nullptr, c_out, kernel, stride, pad,
                  out.data());
  std::vector<BasicTensor<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_node<T>(
      "conv1d", {c_out, out_len}, std::move(out), std::move(inputs),
      [=](Impl<T>& n) {
        const std::size_t patch = c_in * kernel;
        const T* xv = data_of(n, 0);
        const T* dy = n.grad.data();
        auto src_index = [&](std::size_t t, std::size_t kk) {
          return static_cast<std::ptrdiff_t>(t * stride + kk) - static_cast<std::ptrdiff_t>(pad);
        };
        if (T* g = grad_of(n, 1)) {
          std::vector<T> cols(patch * out_len, T(0));
          for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t kk = 0; kk < kernel; ++kk)
              for (std::size_t t = 0; t < out_len; ++t) {
                const auto s = src_index(t, kk);
                if (s >= 0 && s < static_cast<std::ptrdiff_t>(len))
                  cols[(c * kernel + kk) * out_len + t] = xv[c * len + s];
              }
          kernels::gemm(false, true, c_out, patch, out_len, dy, cols.data(), g, true);
        }
        if (T* g = grad_of(n, 0)) {
          std::vector<T> dcols(patch * out_len);
          kernels::gemm(true, false, patch, out_len, c_out, data_of(n, 1), dy, dcols.data(),
                        false);
          for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t kk = 0; kk < kernel; ++kk)
              for (std::size_t t = 0; t < out_len; ++t) {
                const auto s = src_index(t, kk);
                if (s >= 0 && s < static_cast<std::ptrdiff_t>(len))
                  g[c * len + s] += dcols[(c * kernel + kk) * out_len + t];
              }
        }
        if (has_bias) {
          if (T* g = grad_of(n, 2))
            for (std::size_t o = 0; o < c_out; ++o)
              for (std::size_t t = 0; t < out_len; ++t) g[o] += dy[o * out_len + t];
        }
      });
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps) {
  require_rank("layer_norm", x, 2, "input");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (gamma.size() != d || beta.size() != d) {
    shape_fail("layer_norm", "affine params " + shape_str(gamma.shape()) + "/" +
                                 shape_str(beta.shape()) + " do not match width " +
                                 std::to_string(d));
  }
  check_finite("layer_norm", x);
  check_finite("layer_norm", gamma);
  check_finite("layer_norm", beta);
  std::vector<T> out(x.size()), xhat(x.size()), rstd(rows);
  const T* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += xv[r * d + j];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      const T c = xv[r * d + j] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xv[r * d + j] - mean) * rstd[r];
      out[r * d + j] = xhat[r * d + j] * gamma.data()[j] + beta.data()[j];
    }
  }
  return make_node<T>("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                      [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Impl<T>& n) {
                        const T* dy = n.grad.data();
                        const T* g = data_of(n, 1);
                        if (T* gg = grad_of(n, 1))
                          for (std::size_t i = 0; i < rows * d; ++i) gg[i % d] += dy[i] * xhat[i];
                        if (T* gb = grad_of(n, 2))
                          for (std::size_t i = 0; i < rows * d; ++i) gb[i % d] += dy[i];
                        if (T* gx = grad_of(n, 0)) {
                          for (std::size_t r = 0; r < rows; ++r) {
                            T m1 = T(0), m2 = T(0);
                            for (std::size_t j = 0; j < d; ++j) {
                              const T dxh = dy[r * d + j] * g[j];
                              m1 += dxh;
                              m2 += dxh * xhat[r * d + j];
                            }
                            m1 /= static_cast<T>(d);
                            m2 /= static_cast<T>(d);
                            for (std::size_t j = 0; j < d; ++j) {
                              const T dxh = dy[r * d + j] * g[j];
                              gx[r * d + j] += rstd[r] * (dxh - m1 - xhat[r * d + j] * m2);
                            }
                          }
                        }
                      });
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  check_finite("gelu", x);
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    out[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  }
  return make_node<T>("gelu", x.shape(), std::move(out), {x}, [inv_sqrt2](Impl<T>& n) {
    if (T* g = grad_of(n, 0)) {
      const T* xv = data_of(n, 0);
      const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        const T v = xv[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
        g[i] += n.grad[i] * (cdf + v * pdf);
      }
    }
  });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x) {
  if (!x.defined() || x.rank() == 0) shape_fail("softmax", "input must have rank >= 1");
  check_finite("softmax", x);
  const std::size_t d = x.shape().back();
  const std::size_t rows = d ? x.size() / d : 0;
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * d;
    T mx = *std::max_element(in, in + d);
    T s = T(0);
    for (std::size_t j = 0; j < d; ++j) s += (out[r * d + j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= s;
  }
  auto y = out;
  return make_node<T>("softmax", x.shape(), std::move(out), {x},
                      [rows, d, y = std::move(y)](Impl<T>& n) {
                        if (T* g = grad_of(n, 0)) {
                          for (std::size_t r = 0; r < rows; ++r) {
                            T dot = T(0);
                            for (std::size_t j = 0; j < d; ++j)
                              dot += n.grad[r * d + j] * y[r * d + j];
                            for (std::size_t j = 0; j < d; ++j)
                              g[r * d + j] += y[r * d + j] * (n.grad[r * d + j] - dot);
                          }
                        }
                      });
}

template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const std::int32_t> ids) {
  require_rank("embedding", table, 2, "table");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<T> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      shape_fail("embedding", "id " + std::to_string(ids[i]) + " outside table " +
                                  shape_str(table.shape()));
    }
    std::copy_n(table.data().begin() + ids[i] * d, d, out.begin() + i * d);
  }
  check_finite("embedding", table);
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return make_node<T>("embedding", {ids.size(), d}, std::move(out), {table},
                      [d, saved = std::move(saved)](Impl<T>& n) {
                        if (T* g = grad_of(n, 0))
                          for (std::size_t i = 0; i < saved.size(); ++i)
                            for (std::size_t j = 0; j < d; ++j)
                              g[saved[i] * d + j] += n.grad[i * d + j];
                      });
}

template <typename T>
BasicTensor<T> attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                         const BasicTensor<T>& v, std::size_t heads, bool causal,
                         std::size_t offset) {
  require_rank("attention", q, 2, "query");
  require_rank("attention", k, 2, "key");
  require_rank("attention", v, 2, "value");
  const std::size_t tq = q.dim(0), tk = k.dim(0), d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != tk) {
    shape_fail("attention", "q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                                ", v " + shape_str(v.shape()) + " are inconsistent");
  }
  if (heads == 0 || d % heads != 0) {
    shape_fail("attention", "width " + std::to_string(d) + " not divisible by " +
                                std::to_string(heads) + " heads");
  }
  if (causal && tk > 0 && offset + 1 > tk) {
    shape_fail("attention", "causal offset " + std::to_string(offset) + " exceeds key length " +
                                std::to_string(tk));
  }
  check_finite("attention", q);
  check_finite("attention", k);
  check_finite("attention", v);
  std::vector<T> out(tq * d);
  const bool track =
      grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  std::vector<T> probs(track ? heads * tq * tk : 0);
  kernels::attention(q.data().data(), k.data().data(), v.data().data(), tq, tk, d, heads, causal,
                     offset, out.data(), track ? probs.data() : nullptr);
  return make_node<T>(
      "attention", {tq, d}, std::move(out), {q, k, v},
      [=, probs = std::move(probs)](Impl<T>& n) {
        const std::size_t dh = d / heads;
        const T sc = T(1) / std::sqrt(static_cast<T>(dh));
        const T* qv = data_of(n, 0);
        const T* kv = data_of(n, 1);
        const T* vv = data_of(n, 2);
        T* gq = grad_of(n, 0);
        T* gk = grad_of(n, 1);
        T* gv = grad_of(n, 2);
        const T* dout = n.grad.data();
        std::vector<T> dp(tk);
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t i = 0; i < tq; ++i) {
            const T* p = probs.data() + (h * tq + i) * tk;
            const T* doi = dout + i * d + h * dh;
            T dot = T(0);
            for (std::size_t j = 0; j < tk; ++j) {
              T s = T(0);
              for (std::size_t c = 0; c < dh; ++c) s += doi[c] * vv[j * d + h * dh + c];
              dp[j] = s;
              dot += p[j] * s;
            }
            for (std::size_t j = 0; j < tk; ++j) {
              if (p[j] == T(0)) continue;
              if (gv)
                for (std::size_t c = 0; c < dh; ++c) gv[j * d + h * dh + c] += p[j] * doi[c];
              const T ds = p[j] * (dp[j] - dot) * sc;
              if (gq)
                for (std::size_t c = 0; c < dh; ++c) gq[i * d + h * dh + c] += ds * kv[j * d + h * dh + c];
              if (gk)
                for (std::size_t c = 0; c < dh; ++c) gk[j * d + h * dh + c] += ds * qv[i * d + h * dh + c];
            }
          }
        }
      });
}

namespace {

template <typename T>
BasicTensor<T> cross_entropy_impl(const char* op, const BasicTensor<T>& logits,
                                  std::span<const std::int32_t> targets,
                                  const std::vector<bool>& mask, bool average) {
  require_rank(op, logits, 2, "logits");
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != rows || mask.size() != rows) {
    shape_fail(op, "logits " + shape_str(logits.shape()) + " vs " +
                       std::to_string(targets.size()) + " targets / " +
                       std::to_string(mask.size()) + " mask entries");
  }
  check_finite(op, logits);
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      shape_fail(op, "target id " + std::to_string(targets[r]) + " outside vocab " +
                         std::to_string(vocab));
    }
    ++count;
  }
  const T norm = (average && count) ? T(1) / static_cast<T>(count) : T(1);
  std::vector<T> probs(rows * vocab, T(0));
  T loss = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    const T* l = logits.data().data() + r * vocab;
    const T mx = *std::max_element(l, l + vocab);
    T s = T(0);
    for (std::size_t j = 0; j < vocab; ++j) s += (probs[r * vocab + j] = std::exp(l[j] - mx));
    for (std::size_t j = 0; j < vocab; ++j) probs[r * vocab + j] /= s;
    loss += (std::log(s) + mx - l[targets[r]]);
  }
  loss *= norm;
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  return make_node<T>(op, {1}, {loss}, {logits},
                      [rows, vocab, norm, mask, tgt = std::move(tgt),
                       probs = std::move(probs)](Impl<T>& n) {
                        if (T* g = grad_of(n, 0)) {
                          const T up = n.grad[0] * norm;
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (!mask[r]) continue;
                            for (std::size_t j = 0; j < vocab; ++j)
                              g[r * vocab + j] += up * probs[r * vocab + j];
                            g[r * vocab + tgt[r]] -= up;
                          }
                        }
                      });
}

}  // namespace

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                             const std::vector<bool>& mask) {
  return cross_entropy_impl("cross_entropy", logits, targets, mask, true);
}

template <typename T>
BasicTensor<T> cross_entropy_sum(const BasicTensor<T>& logits,
                                 std::span<const std::int32_t> targets,
                                 const std::vector<bool>& mask) {
  return cross_entropy_impl("cross_entropy", logits, targets, mask, false);
}

#define WHISMA_INSTANTIATE_OPS(T)                                                             \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                    \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                         \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                   \
  template BasicTensor<T> slice_rows(const BasicTensor<T>&, std::size_t, std::size_t);        \
  template BasicTensor<T> concat_rows(const std::vector<BasicTensor<T>>&);                    \
  template BasicTensor<T> pad_rows(const BasicTensor<T>&, std::size_t);                       \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);               \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                 const BasicTensor<T>&);                                      \
  template BasicTensor<T> conv1d(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                 const BasicTensor<T>&, std::size_t, std::size_t);            \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                     const BasicTensor<T>&, T);                               \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                        \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                     \
  template BasicTensor<T> embedding(const BasicTensor<T>&, std::span<const std::int32_t>);    \
  template BasicTensor<T> attention(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                    const BasicTensor<T>&, std::size_t, bool, std::size_t);   \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::span<const std::int32_t>, \
                                        const std::vector<bool>&);                            \
  template BasicTensor<T> cross_entropy_sum(const BasicTensor<T>&,                            \
                                            std::span<const std::int32_t>,                    \
                                            const std::vector<bool>&);

WHISMA_INSTANTIATE_OPS(float)
WHISMA_INSTANTIATE_OPS(double)

#undef WHISMA_INSTANTIATE_OPS

}  // namespace whisma::ops
