// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <omp.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "grad_cases.hpp"

#include "whisma/checkpoint.hpp"
#include "whisma/diagnostics.hpp"
#include "whisma/init.hpp"
#include "whisma/kernels.hpp"
#include "whisma/ops.hpp"
#include "whisma/optim.hpp"

using namespace whisma;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// Runs `f` with several thread counts and returns whether every result
// matches `expected` bit for bit.
template <typename F>
bool thread_invariant(const std::vector<float>& expected, F f) {
  const int saved = omp_get_max_threads();
  bool ok = true;
  for (int threads : {1, 2, 3, 4}) {
    omp_set_num_threads(threads);
    ok = ok && same_bits(expected, f());
  }
  omp_set_num_threads(saved);
  return ok;
}

Tensor64 leaf64(Shape s, Rng& rng) { return grad::leaf(std::move(s), rng); }

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("data length must equal the product of the shape") {
    CHECK_THROWS_AS(Tensor::from({2, 3}, std::vector<float>(5)), ShapeError);
    CHECK(Tensor::zeros({2, 3}).size() == 6);
  }

  TEST_CASE("grad has the shape of data once populated") {
    auto w = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
    ops::sum(ops::mul(w, w)).backward();
    REQUIRE(w.has_grad());
    CHECK(w.grad().size() == w.size());
    CHECK(w.grad()[3] == doctest::Approx(8.0));
  }

  TEST_CASE("backward on a non-scalar throws") {
    auto w = Tensor::from({2}, {1, 2}, true);
    CHECK_THROWS_AS(ops::scale(w, 2.0f).backward(), ShapeError);
  }

  TEST_CASE("a frozen tensor never accumulates gradient") {
    auto x = Tensor::from({1, 2}, {1, 2});
    auto w = Tensor::from({2, 2}, {1, 0, 0, 1});
    auto b = Tensor::from({2}, {0, 0}, true);
    ops::sum(ops::linear(x, w, b)).backward();
    CHECK_FALSE(w.has_grad());
    CHECK(b.has_grad());
  }

  TEST_CASE("a graph of frozen tensors allocates no gradients and records no closures") {
    Rng rng(3);
    auto a = normal_tensor<float>({3, 4}, 1.0, rng, false);
    auto b = normal_tensor<float>({4, 2}, 1.0, rng, false);
    auto y = ops::matmul(a, b);
    auto loss = ops::sum(ops::softmax(y));
    CHECK_FALSE(y.requires_grad());
    CHECK(y.impl()->backward == nullptr);
    loss.backward();
    CHECK_FALSE(a.has_grad());
    CHECK_FALSE(b.has_grad());
    CHECK_FALSE(y.has_grad());
    CHECK_FALSE(loss.has_grad());
  }

  TEST_CASE("NoGradGuard suppresses graph recording") {
    auto w = Tensor::from({2}, {1, 2}, true);
    Tensor y;
    {
      NoGradGuard g;
      y = ops::scale(w, 3.0f);
    }
    CHECK_FALSE(y.requires_grad());
    CHECK(grad_enabled());
  }

  TEST_CASE("identical seeds give bit-identical tensors") {
    Rng a(42), b(42);
    auto x = normal_tensor<float>({8, 8}, 1.0, a, false);
    auto y = normal_tensor<float>({8, 8}, 1.0, b, false);
    CHECK(std::memcmp(x.data().data(), y.data().data(), x.size() * sizeof(float)) == 0);
  }
}

TEST_SUITE("primitives") {
  TEST_CASE("conv1d output length") {
    auto x = Tensor::zeros({4, 10});
    auto w = Tensor::zeros({2, 4, 3});
    auto y = ops::conv1d(x, w, Tensor{}, 2, 1);
    CHECK(y.dim(0) == 2);
    CHECK(y.dim(1) == 5);
    CHECK(kernels::conv1d_out_len(3000, 3, 2, 1) == 1500);
  }

  TEST_CASE("softmax of zeros is uniform") {
    auto y = ops::softmax(Tensor::zeros({1, 4}));
    for (float v : y.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-7));
  }

  TEST_CASE("linear with the identity") {
    auto y = ops::linear(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 2}, {1, 0, 0, 1}),
                         Tensor::from({2}, {0, 0}));
    CHECK(y.data()[0] == 1.0f);
    CHECK(y.data()[1] == 2.0f);
  }

  TEST_CASE("gradient of sum(W x) is the outer product structure") {
    auto x = Tensor::from({2, 3}, {1, 2, 3, -1, 0, 4});
    auto w = Tensor::from({2, 3}, std::vector<float>(6, 0.5f), true);
    ops::sum(ops::linear(x, w, Tensor{})).backward();
    // d/dW[o, i] = sum_t x[t, i] for every output row o
    const float col[3] = {0, 2, 7};
    for (std::size_t o = 0; o < 2; ++o) {
      for (std::size_t i = 0; i < 3; ++i) CHECK(w.grad()[o * 3 + i] == doctest::Approx(col[i]));
    }
  }

  TEST_CASE("softmax rows sum to one") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      std::uniform_int_distribution<std::size_t> dim(1, 40);
      const std::size_t r = dim(rng), c = dim(rng);
      auto x = normal_tensor<float>({r, c}, 5.0, rng, false);
      auto y = ops::softmax(x);
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < c; ++j) s += y.at(i, j);
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
    }
  }

  TEST_CASE("causal attention ignores future keys") {
    Rng rng(4);
    auto q = normal_tensor<float>({5, 8}, 1.0, rng, false);
    auto k = normal_tensor<float>({5, 8}, 1.0, rng, false);
    auto v = normal_tensor<float>({5, 8}, 1.0, rng, false);
    auto y1 = ops::attention(q, k, v, 2, true);
    auto v2 = v.detach();
    for (std::size_t j = 0; j < 8; ++j) v2.mutable_data()[4 * 8 + j] += 10.0f;
    auto y2 = ops::attention(q, k, v2, 2, true);
    for (std::size_t i = 0; i < 4 * 8; ++i) CHECK(y1.data()[i] == y2.data()[i]);
  }

  TEST_CASE("cross_entropy ignores masked positions") {
    auto logits = Tensor::from({2, 3}, {1, 2, 3, 0, 0, 0}, true);
    const std::vector<std::int32_t> t{2, 0};
    auto loss = ops::cross_entropy(logits, std::span<const std::int32_t>(t), {true, false});
    const double expected = -std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
    CHECK(loss.item() == doctest::Approx(expected));
    loss.backward();
    for (std::size_t j = 3; j < 6; ++j) CHECK(logits.grad()[j] == 0.0f);
    auto none = ops::cross_entropy(logits, std::span<const std::int32_t>(t), {false, false});
    CHECK(none.item() == 0.0f);
  }

  TEST_CASE("shape errors name the op and the dims") {
    auto a = Tensor::zeros({2, 3}), b = Tensor::zeros({2, 4});
    try {
      ops::add(a, b);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("add") != std::string::npos);
      CHECK(msg.find("[2, 3]") != std::string::npos);
      CHECK(msg.find("[2, 4]") != std::string::npos);
    }
    CHECK_THROWS_AS(ops::matmul(a, a), ShapeError);
    CHECK_THROWS_AS(ops::conv1d(Tensor::zeros({3, 10}), Tensor::zeros({2, 4, 3}), Tensor{}, 1, 1), ShapeError);
    CHECK_THROWS_AS(ops::attention(a, a, a, 2, false), ShapeError);
  }

  TEST_CASE("non-finite inputs are rejected") {
    auto x = Tensor::from({1, 2}, {1.0f, std::nanf("")});
    CHECK_THROWS_AS(ops::softmax(x), NonFiniteError);
    CHECK_THROWS_AS(ops::gelu(Tensor::from({1}, {INFINITY})), NonFiniteError);
  }
}

TEST_SUITE("gradcheck") {
  // Each primitive against the test-side central-difference oracle.
  TEST_CASE("every primitive and the composed aligner match central differences in float64") {
    auto cases = grad::primitives(17);
    cases.push_back(grad::aligner(3));
    for (auto& c : cases) {
      CAPTURE(c.name);
      CHECK(grad::check(c.loss, c.leaves) < 1e-4);
    }
  }

  TEST_CASE("library gradient suite passes, including the composed aligner") {
    for (const auto& r : diagnostics::gradient_suite(5)) {
      CAPTURE(r.name);
      CAPTURE(r.detail);
      CHECK(r.pass);
    }
  }

  TEST_CASE("library gradcheck detects a wrong gradient") {
    Rng rng(1);
    auto x = leaf64({3}, rng);
    // loss uses the data through a path the graph does not see.
    auto loss = [x]() mutable {
      auto d = x.detach();
      return ops::add(ops::sum(ops::mul(d, d)), ops::scale(ops::sum(x), 0.0));
    };
    CHECK(diagnostics::gradcheck(loss, {x}) > 0.5);
  }
}

TEST_SUITE("kernels") {
  TEST_CASE("parallel gemm is bit-identical to the serial reference") {
    Rng rng(1);
    for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {7, 5, 3}, {64, 48, 80}, {130, 17, 33}}) {
      for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
          const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
          std::vector<float> ref(m * n);
          kernels::reference::gemm(ta, tb, m, n, k, a.data(), b.data(), ref.data(), false);
          CHECK(thread_invariant(ref, [&] {
            std::vector<float> c(m * n);
            kernels::gemm(ta, tb, m, n, k, a.data(), b.data(), c.data(), false);
            return c;
          }));
        }
      }
    }
  }

  TEST_CASE("parallel conv1d is bit-identical to the serial reference") {
    Rng rng(2);
    for (auto [cin, len, cout, stride] : {std::array<std::size_t, 4>{3, 10, 4, 2}, {80, 300, 64, 1}, {64, 301, 64, 2}}) {
      const auto x = random_vec(cin * len, rng), w = random_vec(cout * cin * 3, rng), b = random_vec(cout, rng);
      const std::size_t out = kernels::conv1d_out_len(len, 3, stride, 1);
      std::vector<float> ref(cout * out);
      kernels::reference::conv1d(x.data(), cin, len, w.data(), b.data(), cout, 3, stride, 1, ref.data());
      CHECK(thread_invariant(ref, [&] {
        std::vector<float> y(cout * out);
        kernels::conv1d(x.data(), cin, len, w.data(), b.data(), cout, 3, stride, 1, y.data());
        return y;
      }));
    }
  }

  TEST_CASE("parallel attention is bit-identical to the serial reference") {
    Rng rng(3);
    for (auto [tq, tk, d, heads, causal, offset] :
         {std::array<std::size_t, 6>{1, 1, 4, 1, 0, 0}, {6, 6, 8, 2, 1, 0}, {3, 9, 16, 4, 1, 6}, {200, 200, 64, 4, 0, 0}}) {
      const auto q = random_vec(tq * d, rng), k = random_vec(tk * d, rng), v = random_vec(tk * d, rng);
      std::vector<float> ref(tq * d);
      kernels::reference::attention(q.data(), k.data(), v.data(), tq, tk, d, heads, causal != 0, offset, ref.data());
      CHECK(thread_invariant(ref, [&] {
        std::vector<float> y(tq * d);
        kernels::attention(q.data(), k.data(), v.data(), tq, tk, d, heads, causal != 0, offset, y.data(),
                           static_cast<float*>(nullptr));
        return y;
      }));
    }
  }
}

TEST_SUITE("adamw") {
  TEST_CASE("zero gradient and zero weight decay leave the parameter unchanged") {
    auto p = Tensor::from({3}, {1, -2, 3}, true);
    ops::sum(ops::mul(p, Tensor::zeros({3}))).backward();
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt({{"p", p}}, cfg);
    opt.step();
    CHECK(p.data()[0] == 1.0f);
    CHECK(p.data()[1] == -2.0f);
    CHECK(p.data()[2] == 3.0f);
    CHECK_FALSE(p.has_grad());
    CHECK(opt.steps() == 1);
  }

  TEST_CASE("constant gradient over k steps matches a scalar reference loop") {
    const double g = 0.3, lr = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01;
    auto p = Tensor::from({1}, {0.5f}, true);
    AdamW opt({{"p", p}}, {lr, b1, b2, eps, wd});
    double x = 0.5, m = 0, v = 0;
    for (int t = 1; t <= 25; ++t) {
      ops::scale(ops::sum(p), static_cast<float>(g)).backward();
      opt.step();
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      x -= lr * wd * x;
      x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
      CHECK(p.data()[0] == doctest::Approx(x).epsilon(1e-5));
    }
    CHECK(opt.first_moment(0)[0] == doctest::Approx(m).epsilon(1e-5));
  }

  TEST_CASE("frozen parameters and missing gradients are errors") {
    auto frozen = Tensor::from({1}, {1});
    CHECK_THROWS_AS(AdamW({{"frozen.w", frozen}}, {}), Error);
    auto a = Tensor::from({1}, {1}, true), b = Tensor::from({1}, {1}, true);
    ops::sum(a).backward();
    AdamW opt({{"a", a}, {"b", b}}, {});
    try {
      opt.step();
      FAIL("expected missing-gradient error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("for: b") != std::string::npos);
    }
  }

  TEST_CASE("gradient clipping caps the global norm") {
    auto a = Tensor::from({2}, {0, 0}, true);
    ops::sum(ops::mul(a, Tensor::from({2}, {3, 4}))).backward();
    std::vector<NamedParam> ps{{"a", a}};
    CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
    CHECK(a.grad()[0] == doctest::Approx(0.6));
    CHECK(a.grad()[1] == doctest::Approx(0.8));
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save and load round-trip values, header and hash") {
    Rng rng(5);
    std::vector<NamedParam> ps{{"b.w", normal_tensor<float>({3, 2}, 1.0, rng, true)},
                               {"a.bias", normal_tensor<float>({4}, 1.0, rng, false)}};
    Checkpoint ck;
    ck.config_hash = 0x1234abcdULL;
    ck.config_json = R"({"seed": 1})";
    ck.add(ps);
    const auto path = std::filesystem::temp_directory_path() / "whisma_ck_test.ckpt";
    ck.save(path);
    const auto back = Checkpoint::load(path);
    CHECK(back.version == kSubstrateVersion);
    CHECK(back.config_hash == ck.config_hash);
    CHECK(back.config_json == ck.config_json);
    std::vector<NamedParam> fresh{{"b.w", Tensor::zeros({3, 2}, true)}, {"a.bias", Tensor::zeros({4})}};
    back.restore(fresh);
    CHECK(hash_params(fresh) == hash_params(ps));
    std::vector<NamedParam> wrong{{"b.w", Tensor::zeros({2, 3})}};
    CHECK_THROWS_AS(back.restore(wrong), ShapeError);
    std::vector<NamedParam> missing{{"c", Tensor::zeros({1})}};
    CHECK_THROWS_AS(back.restore(missing), Error);
    std::filesystem::remove(path);
  }

  TEST_CASE("bad magic is rejected") {
    const auto path = std::filesystem::temp_directory_path() / "whisma_bad.ckpt";
    { std::ofstream(path) << "NOTACKPT"; }
    CHECK_THROWS_AS(Checkpoint::load(path), Error);
    std::filesystem::remove(path);
  }

  TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(hex64(255) == "00000000000000ff");
  }
}
