// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Log-mel frontend and the audio/feature file readers.

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "whisma/tensor.hpp"

namespace whisma {

struct MelConfig {
  std::size_t n_mels = 80;
  double clip_seconds = 30.0;
  double hop_seconds = 0.010;
  double window_seconds = 0.025;
  double log_floor = 1e-10;

  /// Frames in a padded clip at the configured hop.
  std::size_t frames() const;
};

/// Row-major [n_mels, frames] log-mel features.
struct MelSpectrogram {
  std::size_t n_mels = 0;
  std::size_t frames = 0;
  double frame_rate = 100.0;
  std::vector<float> values;

  float at(std::size_t mel, std::size_t frame) const { return values[mel * frames + frame]; }
  Tensor to_tensor() const;
};

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// n_mels + 2 filter edge frequencies in Hz; filter m spans
/// [edges[m], edges[m + 2]] and peaks at edges[m + 1].
std::vector<double> mel_filter_edges(std::size_t n_mels, double sample_rate);

/// Pads or truncates to the clip length, then computes natural-log mel
/// energies with a floor. Throws on empty input or non-positive rate.
MelSpectrogram log_mel(std::span<const float> samples, int sample_rate,
                       const MelConfig& config = {});

/// Right-pads with the log floor or truncates to `frames`.
MelSpectrogram fit_frames(const MelSpectrogram& mel, std::size_t frames, double log_floor);

/// Mono RIFF/WAVE, 16-bit PCM or 32-bit float.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& wave);

/// Feature file: u32 n_mels | u32 frames | float32 payload, little-endian.
MelSpectrogram read_mel_file(const std::filesystem::path& path);
void write_mel_file(const std::filesystem::path& path, const MelSpectrogram& mel);

}  // namespace whisma
