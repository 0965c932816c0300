// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/optim.hpp"

#include <cmath>

namespace whisma {

AdamW::AdamW(std::vector<NamedParam> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  std::string frozen;
  for (const auto& p : params_) {
    if (!p.tensor.trainable()) frozen += (frozen.empty() ? "" : ", ") + p.name;
    m_.emplace_back(p.tensor.size(), 0.0f);
    v_.emplace_back(p.tensor.size(), 0.0f);
  }
  if (!frozen.empty()) throw Error("adamw: frozen parameters passed to optimizer: " + frozen);
}

void AdamW::step() {
  std::string missing;
  for (const auto& p : params_) {
    if (!p.tensor.trainable()) throw Error("adamw: parameter became frozen: " + p.name);
    if (!p.tensor.has_grad()) missing += (missing.empty() ? "" : ", ") + p.name;
  }
  if (!missing.empty()) throw Error("adamw: missing gradients for: " + missing);

  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(config_.beta1);
  const float b2 = static_cast<float>(config_.beta2);
  const float decay = static_cast<float>(1.0 - config_.lr * config_.weight_decay);
  const float step_size = static_cast<float>(config_.lr / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(config_.eps);

  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].tensor;
    auto data = p.mutable_data();
    auto grad = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const float g = grad[j];
      m[j] = b1 * m[j] + (1.0f - b1) * g;
      v[j] = b2 * v[j] + (1.0f - b2) * g * g;
      data[j] *= decay;
      data[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
    p.zero_grad();
  }
}

double clip_grad_norm(std::vector<NamedParam>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const float factor = static_cast<float>(max_norm / norm);
    for (auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      // Gradients live on the leaf; scale them through the impl.
      for (float& g : p.tensor.impl()->grad) g *= factor;
    }
  }
  return norm;
}

}  // namespace whisma
