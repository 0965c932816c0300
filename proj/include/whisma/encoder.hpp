// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "whisma/audio.hpp"
#include "whisma/layers.hpp"

namespace whisma {

struct EncoderConfig {
  std::size_t n_mels = 80;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ff_mult = 4;
  std::vector<std::size_t> conv_strides{1, 2};
  double clip_seconds = 30.0;

  /// Throws unless the conv strides multiply to 2 and dims are consistent.
  void validate() const;
  std::size_t mel_frames() const;
  std::size_t downsampling() const;
  MelConfig mel_config() const;
};

/// Frozen Whisper-style encoder: conv stack, sinusoidal positions and
/// bidirectional transformer blocks. Parameters never require gradient.
class SpeechEncoder {
 public:
  SpeechEncoder(EncoderConfig config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  /// [n_mels, T_mel] -> [T_mel / 2, d_model]
  Tensor encode(const MelSpectrogram& mel) const;

  std::vector<NamedParam> parameters() const;

 private:
  EncoderConfig config_;
  std::vector<Tensor> conv_weights_;
  std::vector<Tensor> conv_biases_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm ln_post_;
  Tensor positions_;
};

}  // namespace whisma
