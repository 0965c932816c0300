// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// The assembled speech-LLM: frozen encoder, trainable aligner, decoder with
// LoRA adapters, and the tokenizer that goes with it.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "whisma/aligner.hpp"
#include "whisma/checkpoint.hpp"
#include "whisma/decoder.hpp"
#include "whisma/encoder.hpp"
#include "whisma/tokenizer.hpp"

namespace whisma {

struct ModelConfig {
  EncoderConfig encoder;
  AlignerConfig aligner;    // d_enc / d_dec are taken from encoder / decoder
  DecoderConfig decoder;    // vocab_size is taken from the tokenizer
  LoraConfig lora;
  std::uint64_t seed = 0;
};

class WhismaModel {
 public:
  WhismaModel(ModelConfig config, Tokenizer tokenizer);

  const ModelConfig& config() const { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  const SpeechEncoder& encoder() const { return encoder_; }
  const ModalityAligner<float>& aligner() const { return aligner_; }
  const Decoder& decoder() const { return decoder_; }
  Decoder& decoder() { return decoder_; }

  /// Speech embeddings spliced per utterance.
  std::size_t speech_len() const;
  /// Frozen encoder output [T_mel / 2, d_enc]; never part of a graph.
  Tensor encode(const MelSpectrogram& mel) const;
  /// Aligned embeddings [speech_len, d_dec] from encoder output.
  Tensor align(const Tensor& encoded) const { return aligner_.align(encoded).embeddings; }

  /// Aligner weights followed by LoRA matrices.
  std::vector<NamedParam> trainable_parameters() const;
  /// Encoder and base decoder weights.
  std::vector<NamedParam> frozen_parameters() const;
  std::vector<NamedParam> all_parameters() const;

  void save(const std::filesystem::path& path, std::uint64_t config_hash,
            const std::string& config_json) const;
  /// Restores every parameter from `path`; shapes must match.
  void load_weights(const std::filesystem::path& path);

 private:
  ModelConfig config_;
  Tokenizer tokenizer_;
  SpeechEncoder encoder_;
  ModalityAligner<float> aligner_;
  Decoder decoder_;
};

}  // namespace whisma
