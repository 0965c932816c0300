// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/layers.hpp"

#include <cmath>

namespace whisma {

Tensor LoraAdapter::delta(const Tensor& x) const {
  const Tensor low = ops::linear(x, a, Tensor{});
  return ops::scale(ops::linear(low, b, Tensor{}), static_cast<float>(scaling()));
}

Linear Linear::make(std::size_t in, std::size_t out, Rng& rng, bool trainable, bool with_bias) {
  Linear l;
  l.weight = normal_tensor<float>({out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng, trainable);
  if (with_bias) l.bias = constant_tensor<float>({out}, 0.0f, trainable);
  return l;
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = ops::linear(x, weight, bias);
  if (lora) y = ops::add(y, lora->delta(x));
  return y;
}

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

LayerNorm LayerNorm::make(std::size_t d, bool trainable) {
  return {constant_tensor<float>({d}, 1.0f, trainable), constant_tensor<float>({d}, 0.0f, trainable)};
}

void LayerNorm::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

TransformerBlock TransformerBlock::make(std::size_t d, std::size_t heads, std::size_t ff, Rng& rng,
                                        bool trainable) {
  TransformerBlock b;
  b.heads = heads;
  b.ln1 = LayerNorm::make(d, trainable);
  b.ln2 = LayerNorm::make(d, trainable);
  b.q = Linear::make(d, d, rng, trainable);
  b.k = Linear::make(d, d, rng, trainable);
  b.v = Linear::make(d, d, rng, trainable);
  b.o = Linear::make(d, d, rng, trainable);
  b.fc1 = Linear::make(d, ff, rng, trainable);
  b.fc2 = Linear::make(ff, d, rng, trainable);
  return b;
}

Tensor TransformerBlock::forward(const Tensor& x, bool causal, LayerCache* cache) const {
  const Tensor h = ln1.forward(x);
  Tensor keys = k.forward(h);
  Tensor values = v.forward(h);
  std::size_t offset = 0;
  if (cache) {
    if (cache->keys.defined()) {
      offset = cache->keys.rows();
      keys = ops::concat_rows<float>({cache->keys, keys});
      values = ops::concat_rows<float>({cache->values, values});
    }
    cache->keys = keys;
    cache->values = values;
  }
  const Tensor attn = ops::attention(q.forward(h), keys, values, heads, causal, offset);
  const Tensor x1 = ops::add(x, o.forward(attn));
  const Tensor m = fc2.forward(ops::gelu(fc1.forward(ln2.forward(x1))));
  return ops::add(x1, m);
}

void TransformerBlock::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  ln1.collect(prefix + ".ln1", out);
  q.collect(prefix + ".attn.q", out);
  k.collect(prefix + ".attn.k", out);
  v.collect(prefix + ".attn.v", out);
  o.collect(prefix + ".attn.o", out);
  ln2.collect(prefix + ".ln2", out);
  fc1.collect(prefix + ".mlp.fc1", out);
  fc2.collect(prefix + ".mlp.fc2", out);
}

Tensor sinusoidal_positions(std::size_t rows, std::size_t d) {
  std::vector<float> values(rows * d);
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      values[t * d + i] = static_cast<float>(std::sin(static_cast<double>(t) * freq));
      if (i + 1 < d) values[t * d + i + 1] = static_cast<float>(std::cos(static_cast<double>(t) * freq));
    }
  }
  return Tensor::from({rows, d}, std::move(values));
}

void set_trainable(std::vector<NamedParam>& params, bool trainable) {
  for (auto& p : params) p.tensor.set_trainable(trainable);
}

}  // namespace whisma
