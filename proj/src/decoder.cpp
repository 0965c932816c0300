// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/decoder.hpp"

#include <cmath>
#include <utility>

namespace whisma {

void DecoderConfig::validate() const {
  if (vocab_size == 0) throw Error("decoder: vocab_size must be positive");
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw Error("decoder: d_model " + std::to_string(d_model) + " not divisible by " +
                std::to_string(n_heads) + " heads");
  }
  if (max_positions == 0) throw Error("decoder: max_positions must be positive");
}

Decoder::Decoder(DecoderConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.d_model;
  tok_emb_ = normal_tensor<float>({config_.vocab_size, d}, 1.0, rng, false);
  pos_emb_ = normal_tensor<float>({config_.max_positions, d}, 0.1, rng, false);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    blocks_.push_back(TransformerBlock::make(d, config_.n_heads, d * config_.ff_mult, rng, false));
  }
  ln_f_ = LayerNorm::make(d, false);
  head_ = normal_tensor<float>({config_.vocab_size, d}, 1.0 / std::sqrt(static_cast<double>(d)),
                               rng, false);
}

const LoraConfig& Decoder::lora_config() const {
  if (!lora_) throw Error("decoder: no LoRA adapters injected");
  return *lora_;
}

const Linear& Decoder::projection(std::size_t layer, const std::string& name) const {
  const auto& b = blocks_.at(layer);
  if (name == "q") return b.q;
  if (name == "k") return b.k;
  if (name == "v") return b.v;
  if (name == "o") return b.o;
  throw Error("decoder: unknown projection '" + name + "'");
}

Linear& Decoder::projection(std::size_t layer, const std::string& name) {
  return const_cast<Linear&>(std::as_const(*this).projection(layer, name));
}

void Decoder::inject_lora(const LoraConfig& lora, std::uint64_t seed) {
  if (lora_) throw Error("inject_lora: adapters already injected");
  if (lora.rank == 0) throw Error("inject_lora: rank must be positive");
  Rng rng(seed);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    for (const auto& target : lora.targets) {
      Linear& proj = projection(l, target);
      const std::size_t in = proj.weight.dim(1), out = proj.weight.dim(0);
      LoraAdapter adapter;
      adapter.rank = lora.rank;
      adapter.alpha = lora.alpha;
      adapter.a = normal_tensor<float>({lora.rank, in}, 1.0 / std::sqrt(static_cast<double>(in)),
                                       rng, true);
      adapter.b = constant_tensor<float>({out, lora.rank}, 0.0f, true);
      proj.lora = std::move(adapter);
    }
  }
  lora_ = lora;
}

Tensor Decoder::embed(const MultimodalSequence& seq, const Tensor& speech,
                      std::size_t position_offset) const {
  const std::size_t len = seq.ids.size();
  if (position_offset + len > config_.max_positions) {
    throw ShapeError("decoder: sequence of " + std::to_string(position_offset + len) +
                     " positions exceeds max_positions " + std::to_string(config_.max_positions));
  }
  if (seq.speech_begin + seq.speech_len > len) {
    throw ShapeError("decoder: speech span exceeds sequence length");
  }
  Tensor x = ops::embedding(tok_emb_, seq.ids);
  if (seq.speech_len > 0) {
    if (!speech.defined() || speech.rank() != 2 || speech.dim(0) != seq.speech_len ||
        speech.dim(1) != config_.d_model) {
      throw ShapeError("decoder: splice-length mismatch, span of " + std::to_string(seq.speech_len) +
                       " placeholders vs speech " +
                       (speech.defined() ? shape_str(speech.shape()) : std::string("undefined")));
    }
    const std::size_t end = seq.speech_begin + seq.speech_len;
    std::vector<Tensor> parts;
    if (seq.speech_begin > 0) parts.push_back(ops::slice_rows(x, 0, seq.speech_begin));
    parts.push_back(speech);
    if (end < len) parts.push_back(ops::slice_rows(x, end, len));
    x = ops::concat_rows(parts);
  }
  return ops::add(x, ops::slice_rows(pos_emb_, position_offset, position_offset + len));
}

Tensor Decoder::forward_embedded(const Tensor& x, DecoderCache* cache) const {
  Tensor h = x;
  if (cache && cache->layers.size() != blocks_.size()) cache->layers.resize(blocks_.size());
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    h = blocks_[l].forward(h, true, cache ? &cache->layers[l] : nullptr);
  }
  if (cache) cache->length += x.rows();
  return ops::linear(ln_f_.forward(h), head_, Tensor{});
}

Tensor Decoder::forward(const MultimodalSequence& seq, const Tensor& speech) const {
  return forward_embedded(embed(seq, speech));
}

Generation Decoder::generate_greedy(const MultimodalSequence& prefix, const Tensor& speech,
                                    std::size_t max_new, const Tokenizer& tokenizer) const {
  if (max_new == 0) throw Error("generate_greedy: max_new must be at least 1");
  NoGradGuard no_grad;
  DecoderCache cache;
  Tensor logits = forward_embedded(embed(prefix, speech), &cache);
  Generation gen;
  const std::size_t vocab = config_.vocab_size;
  while (true) {
    const auto last = logits.data().subspan((logits.rows() - 1) * vocab, vocab);
    TokenId best = 0;
    for (std::size_t j = 1; j < vocab; ++j) {
      if (last[j] > last[static_cast<std::size_t>(best)]) best = static_cast<TokenId>(j);
    }
    if (best == id_of(Special::kEndTurn)) break;
    gen.ids.push_back(best);
    if (gen.ids.size() >= max_new) {
      gen.truncated = true;
      break;
    }
    if (cache.length + 1 > config_.max_positions) {
      gen.truncated = true;
      break;
    }
    MultimodalSequence step;
    step.ids = {best};
    logits = forward_embedded(embed(step, Tensor{}, cache.length), &cache);
  }
  gen.text = tokenizer.decode(gen.ids);
  return gen;
}

std::vector<NamedParam> Decoder::base_parameters() const {
  std::vector<NamedParam> out;
  out.push_back({"decoder.tok_emb", tok_emb_});
  out.push_back({"decoder.pos_emb", pos_emb_});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    blocks_[l].collect("decoder.layers." + std::to_string(l), out);
  }
  ln_f_.collect("decoder.ln_f", out);
  out.push_back({"decoder.head", head_});
  return out;
}

std::vector<NamedParam> Decoder::lora_parameters() const {
  std::vector<NamedParam> out;
  if (!lora_) return out;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    for (const auto& target : lora_->targets) {
      const auto& adapter = *projection(l, target).lora;
      const std::string prefix = "lora.layers." + std::to_string(l) + "." + target;
      out.push_back({prefix + ".A", adapter.a});
      out.push_back({prefix + ".B", adapter.b});
    }
  }
  return out;
}

void Decoder::set_base_trainable(bool trainable) {
  auto params = base_parameters();
  set_trainable(params, trainable);
}

}  // namespace whisma
