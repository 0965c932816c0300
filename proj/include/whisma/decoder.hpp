// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "whisma/layers.hpp"
#include "whisma/tokenizer.hpp"

namespace whisma {

struct DecoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ff_mult = 4;
  std::size_t max_positions = 512;

  void validate() const;
};

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 16.0;
  std::vector<std::string> targets{"q", "k", "v", "o"};
};

/// Token ids where [speech_begin, speech_begin + speech_len) is a run of
/// speech placeholders replaced by embeddings at forward time. `loss_mask`
/// marks supervised token positions (the tokens to be predicted).
struct MultimodalSequence {
  std::vector<TokenId> ids;
  std::size_t speech_begin = 0;
  std::size_t speech_len = 0;
  std::vector<bool> loss_mask;

  std::size_t size() const { return ids.size(); }
};

struct DecoderCache {
  std::vector<LayerCache> layers;
  std::size_t length = 0;
};

struct Generation {
  std::vector<TokenId> ids;  // excludes the stop token
  std::string text;
  bool truncated = false;
};

/// Causal transformer language model with optional LoRA on attention
/// projections. Base weights are frozen unless explicitly unfrozen.
class Decoder {
 public:
  Decoder(DecoderConfig config, std::uint64_t seed);

  const DecoderConfig& config() const { return config_; }

  /// Wraps every targeted attention projection; A ~ N(0, 1/in), B = 0.
  void inject_lora(const LoraConfig& lora, std::uint64_t seed);
  bool has_lora() const { return lora_.has_value(); }
  const LoraConfig& lora_config() const;

  /// Token embeddings with the speech rows spliced in, plus positions
  /// starting at `position_offset`.
  Tensor embed(const MultimodalSequence& seq, const Tensor& speech,
               std::size_t position_offset = 0) const;

  /// logits [T, vocab]
  Tensor forward(const MultimodalSequence& seq, const Tensor& speech) const;

  /// Runs already-embedded rows; with a cache, only new rows are given.
  Tensor forward_embedded(const Tensor& x, DecoderCache* cache = nullptr) const;

  /// Argmax decoding until end-of-turn or `max_new` tokens; ties go to the
  /// lowest id. Uses a per-call key/value cache.
  Generation generate_greedy(const MultimodalSequence& prefix, const Tensor& speech,
                             std::size_t max_new, const Tokenizer& tokenizer) const;

  std::vector<NamedParam> base_parameters() const;
  std::vector<NamedParam> lora_parameters() const;
  void set_base_trainable(bool trainable);

  /// Projection `name` in {q, k, v, o} of layer `layer`.
  const Linear& projection(std::size_t layer, const std::string& name) const;
  Linear& projection(std::size_t layer, const std::string& name);

 private:
  DecoderConfig config_;
  Tensor tok_emb_;
  Tensor pos_emb_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm ln_f_;
  Tensor head_;
  std::optional<LoraConfig> lora_;
};

}  // namespace whisma
