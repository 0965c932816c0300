// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "whisma/tensor.hpp"

namespace whisma {

using Rng = std::mt19937_64;

template <typename T>
BasicTensor<T> normal_tensor(Shape shape, double stddev, Rng& rng, bool trainable) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> values(num_elements(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return BasicTensor<T>::from(std::move(shape), std::move(values), trainable);
}

template <typename T>
BasicTensor<T> constant_tensor(Shape shape, T value, bool trainable) {
  std::vector<T> values(num_elements(shape), value);
  return BasicTensor<T>::from(std::move(shape), std::move(values), trainable);
}

/// Derives an independent stream from a base seed and a salt.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace whisma
