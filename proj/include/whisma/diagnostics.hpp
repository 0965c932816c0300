// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Self-checks run by `whisma selftest`: finite-difference gradient checks,
// the LoRA identity/freeze contract and the encoder/aligner shape law.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "whisma/tensor.hpp"

namespace whisma::diagnostics {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;      // measured quantity (error, count, ...)
  double threshold = 0.0;  // pass bound
  std::string detail;
  double seconds = 0.0;
};

/// Relative error between backward gradients of `loss` and central
/// differences with step `eps`: per tensor, max |a - n| over
/// max(|a| + |n|), then the max over `params`.
double gradcheck(const std::function<Tensor64()>& loss, std::vector<Tensor64> params,
                 double eps = 1e-3);

/// One check per primitive plus the composed aligner, float64, bound 1e-4.
std::vector<CheckResult> gradient_suite(std::uint64_t seed);

/// Bit-identical logits with zero-initialized B on `n_sequences` random
/// sequences; after one step base hashes unchanged and a LoRA matrix moved.
CheckResult lora_identity_check(std::uint64_t seed, std::size_t n_sequences = 100);

/// 30 s of audio -> 3000 mel frames -> 1500 encoder frames -> 375 embeddings.
CheckResult shape_law_check(std::uint64_t seed);

}  // namespace whisma::diagnostics
