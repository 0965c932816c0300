// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// OpenMP kernels against their serial references, at encoder and decoder
// sizes. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "whisma/kernels.hpp"

namespace {

std::vector<float> random_vec(std::size_t n) {
  std::mt19937_64 rng(n);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool kParallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n), b = random_vec(n * n);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      whisma::kernels::gemm(false, true, n, n, n, a.data(), b.data(), c.data(), false);
    } else {
      whisma::kernels::reference::gemm(false, true, n, n, n, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

// Encoder front conv: [c_in, len] -> [c_out, len / stride].
template <bool kParallel>
void BM_Conv1d(benchmark::State& state) {
  const std::size_t c = 64, len = static_cast<std::size_t>(state.range(0)), kernel = 3, stride = 2, pad = 1;
  const auto x = random_vec(c * len), w = random_vec(c * c * kernel), bias = random_vec(c);
  std::vector<float> y(c * whisma::kernels::conv1d_out_len(len, kernel, stride, pad));
  for (auto _ : state) {
    if constexpr (kParallel) {
      whisma::kernels::conv1d(x.data(), c, len, w.data(), bias.data(), c, kernel, stride, pad, y.data());
    } else {
      whisma::kernels::reference::conv1d(x.data(), c, len, w.data(), bias.data(), c, kernel, stride, pad, y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool kParallel>
void BM_Attention(benchmark::State& state) {
  const std::size_t t = static_cast<std::size_t>(state.range(0)), d = 64, heads = 4;
  const auto q = random_vec(t * d), k = random_vec(t * d), v = random_vec(t * d);
  std::vector<float> out(t * d);
  for (auto _ : state) {
    if constexpr (kParallel) {
      whisma::kernels::attention(q.data(), k.data(), v.data(), t, t, d, heads, true, 0, out.data(),
                                 static_cast<float*>(nullptr));
    } else {
      whisma::kernels::reference::attention(q.data(), k.data(), v.data(), t, t, d, heads, true, 0, out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Conv1d<false>)->Name("conv1d/reference")->Arg(3000);
BENCHMARK(BM_Conv1d<true>)->Name("conv1d/parallel")->Arg(3000);
BENCHMARK(BM_Attention<false>)->Name("attention/reference")->Arg(256)->Arg(1500);
BENCHMARK(BM_Attention<true>)->Name("attention/parallel")->Arg(256)->Arg(1500);

BENCHMARK_MAIN();
