// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Float32 building blocks shared by the encoder and the decoder.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "whisma/init.hpp"
#include "whisma/ops.hpp"
#include "whisma/optim.hpp"

namespace whisma {

/// Low-rank update (alpha / rank) * B * A added to a frozen projection.
struct LoraAdapter {
  Tensor a;  // [rank, in]
  Tensor b;  // [out, rank], zero at injection
  std::size_t rank = 8;
  double alpha = 16.0;

  double scaling() const { return alpha / static_cast<double>(rank); }
  /// The adapter's additive contribution to the projection output.
  Tensor delta(const Tensor& x) const;
};

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out], may be undefined
  std::optional<LoraAdapter> lora;

  static Linear make(std::size_t in, std::size_t out, Rng& rng, bool trainable, bool with_bias = true);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm make(std::size_t d, bool trainable);
  Tensor forward(const Tensor& x) const { return ops::layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

/// Cached keys and values for one attention layer during generation.
struct LayerCache {
  Tensor keys;
  Tensor values;
};

/// Pre-norm transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
struct TransformerBlock {
  LayerNorm ln1, ln2;
  Linear q, k, v, o;
  Linear fc1, fc2;
  std::size_t heads = 4;

  static TransformerBlock make(std::size_t d, std::size_t heads, std::size_t ff, Rng& rng,
                               bool trainable);
  /// With a cache, `x` holds only the new rows; keys/values are appended.
  Tensor forward(const Tensor& x, bool causal, LayerCache* cache = nullptr) const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

/// Fixed sinusoidal position table [rows, d].
Tensor sinusoidal_positions(std::size_t rows, std::size_t d);

void set_trainable(std::vector<NamedParam>& params, bool trainable);

}  // namespace whisma
