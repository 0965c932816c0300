// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/model.hpp"

#include "whisma/init.hpp"

namespace whisma {
namespace {

ModelConfig resolve(ModelConfig config, const Tokenizer& tokenizer) {
  config.aligner.d_enc = config.encoder.d_model;
  config.aligner.d_dec = config.decoder.d_model;
  config.decoder.vocab_size = tokenizer.vocab_size();
  return config;
}

}  // namespace

WhismaModel::WhismaModel(ModelConfig config, Tokenizer tokenizer)
    : config_(resolve(std::move(config), tokenizer)),
      tokenizer_(std::move(tokenizer)),
      encoder_(config_.encoder, mix_seed(config_.seed, 1)),
      aligner_(config_.aligner, mix_seed(config_.seed, 2)),
      decoder_(config_.decoder, mix_seed(config_.seed, 3)) {
  decoder_.inject_lora(config_.lora, mix_seed(config_.seed, 4));
}

std::size_t WhismaModel::speech_len() const {
  const std::size_t enc = config_.encoder.mel_frames() / config_.encoder.downsampling();
  const std::size_t factor = config_.aligner.downsampling();
  return (enc + factor - 1) / factor;
}

Tensor WhismaModel::encode(const MelSpectrogram& mel) const {
  NoGradGuard no_grad;
  return encoder_.encode(mel).detach();
}

std::vector<NamedParam> WhismaModel::trainable_parameters() const {
  auto out = aligner_.parameters();
  for (auto& p : decoder_.lora_parameters()) out.push_back(std::move(p));
  return out;
}

std::vector<NamedParam> WhismaModel::frozen_parameters() const {
  auto out = encoder_.parameters();
  for (auto& p : decoder_.base_parameters()) out.push_back(std::move(p));
  return out;
}

std::vector<NamedParam> WhismaModel::all_parameters() const {
  auto out = frozen_parameters();
  for (auto& p : trainable_parameters()) out.push_back(std::move(p));
  return out;
}

void WhismaModel::save(const std::filesystem::path& path, std::uint64_t config_hash,
                       const std::string& config_json) const {
  Checkpoint ck;
  ck.config_hash = config_hash;
  ck.config_json = config_json;
  ck.add(all_parameters());
  ck.save(path);
}

void WhismaModel::load_weights(const std::filesystem::path& path) {
  const auto ck = Checkpoint::load(path);
  auto params = all_parameters();
  ck.restore(params);
}

}  // namespace whisma
