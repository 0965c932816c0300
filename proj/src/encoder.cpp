// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/encoder.hpp"

#include <cmath>
#include <numeric>

#include "whisma/kernels.hpp"

namespace whisma {

void EncoderConfig::validate() const {
  if (conv_strides.empty() || downsampling() != 2) {
    throw Error("encoder: conv strides must multiply to 2");
  }
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw Error("encoder: d_model " + std::to_string(d_model) + " not divisible by " +
                std::to_string(n_heads) + " heads");
  }
  if (n_mels == 0 || clip_seconds <= 0.0) throw Error("encoder: empty mel configuration");
}

std::size_t EncoderConfig::downsampling() const {
  return std::accumulate(conv_strides.begin(), conv_strides.end(), std::size_t{1},
                         std::multiplies<>());
}

MelConfig EncoderConfig::mel_config() const {
  MelConfig mc;
  mc.n_mels = n_mels;
  mc.clip_seconds = clip_seconds;
  return mc;
}

std::size_t EncoderConfig::mel_frames() const { return mel_config().frames(); }

SpeechEncoder::SpeechEncoder(EncoderConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  std::size_t in = config_.n_mels;
  for (std::size_t i = 0; i < config_.conv_strides.size(); ++i) {
    conv_weights_.push_back(normal_tensor<float>(
        {config_.d_model, in, 3}, 1.0 / std::sqrt(static_cast<double>(in * 3)), rng, false));
    conv_biases_.push_back(constant_tensor<float>({config_.d_model}, 0.0f, false));
    in = config_.d_model;
  }
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    blocks_.push_back(TransformerBlock::make(config_.d_model, config_.n_heads,
                                             config_.d_model * config_.ff_mult, rng, false));
  }
  ln_post_ = LayerNorm::make(config_.d_model, false);
  std::size_t frames = config_.mel_frames();
  for (auto s : config_.conv_strides) frames = kernels::conv1d_out_len(frames, 3, s, 1);
  positions_ = sinusoidal_positions(frames, config_.d_model);
}

Tensor SpeechEncoder::encode(const MelSpectrogram& mel) const {
  const std::size_t frames = config_.mel_frames();
  if (mel.n_mels != config_.n_mels || mel.frames != frames) {
    throw ShapeError("encode: expected mel [" + std::to_string(config_.n_mels) + ", " +
                     std::to_string(frames) + "], got [" + std::to_string(mel.n_mels) + ", " +
                     std::to_string(mel.frames) + "]");
  }
  Tensor x = mel.to_tensor();
  for (std::size_t i = 0; i < conv_weights_.size(); ++i) {
    x = ops::gelu(ops::conv1d(x, conv_weights_[i], conv_biases_[i], config_.conv_strides[i], 1));
  }
  x = ops::add(ops::transpose(x), positions_);
  for (const auto& block : blocks_) x = block.forward(x, false);
  return ln_post_.forward(x);
}

std::vector<NamedParam> SpeechEncoder::parameters() const {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < conv_weights_.size(); ++i) {
    out.push_back({"encoder.conv" + std::to_string(i + 1) + ".weight", conv_weights_[i]});
    out.push_back({"encoder.conv" + std::to_string(i + 1) + ".bias", conv_biases_[i]});
  }
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    blocks_[l].collect("encoder.layers." + std::to_string(l), out);
  }
  ln_post_.collect("encoder.ln_post", out);
  return out;
}

}  // namespace whisma
