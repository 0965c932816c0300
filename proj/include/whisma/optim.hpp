// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "whisma/tensor.hpp"

namespace whisma {

using NamedParam = NamedTensor<float>;

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled-weight-decay Adam. Moments are kept per parameter in the order
/// the parameters were registered.
class AdamW {
 public:
  AdamW(std::vector<NamedParam> params, AdamWConfig config);

  /// Applies one update and clears gradients. Throws if any parameter is
  /// frozen or has no gradient.
  void step();

  std::int64_t steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<NamedParam>& params() const { return params_; }
  const std::vector<float>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<float>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<NamedParam> params_;
  AdamWConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::int64_t t_ = 0;
};

/// Scales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::vector<NamedParam>& params, double max_norm);

}  // namespace whisma
