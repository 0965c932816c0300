// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

namespace whisma {
namespace {

// Radix-2 FFT with explicit real arithmetic; std::complex multiplication
// goes through the NaN-recovering library path, which dominates otherwise.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const double wr_step = std::cos(ang), wi_step = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double wr = 1.0, wi = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto x = a[i + k + len / 2];
        const std::complex<double> v(x.real() * wr - x.imag() * wi, x.real() * wi + x.imag() * wr);
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        const double nr = wr * wr_step - wi * wi_step;
        wi = wr * wi_step + wi * wr_step;
        wr = nr;
      }
    }
  }
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error("audio: truncated file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& is) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) throw Error("audio: truncated file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

std::size_t MelConfig::frames() const {
  return static_cast<std::size_t>(std::llround(clip_seconds / hop_seconds));
}

Tensor MelSpectrogram::to_tensor() const { return Tensor::from({n_mels, frames}, values); }

// HTK mel scale.
double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_filter_edges(std::size_t n_mels, double sample_rate) {
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  return edges;
}

MelSpectrogram log_mel(std::span<const float> samples, int sample_rate, const MelConfig& config) {
  if (samples.empty()) throw Error("log_mel: empty waveform");
  if (sample_rate <= 0) throw Error("log_mel: sample rate must be positive");
  const double sr = sample_rate;
  const auto hop = static_cast<std::size_t>(std::llround(sr * config.hop_seconds));
  const auto win = static_cast<std::size_t>(std::llround(sr * config.window_seconds));
  if (hop == 0 || win == 0) throw Error("log_mel: sample rate too low for hop/window");
  std::size_t n_fft = 1;
  while (n_fft < win) n_fft <<= 1;

  const auto clip = static_cast<std::size_t>(std::llround(sr * config.clip_seconds));
  std::vector<double> audio(clip, 0.0);
  std::copy_n(samples.begin(), std::min(clip, samples.size()), audio.begin());

  const std::size_t frames = config.frames();
  const std::size_t bins = n_fft / 2 + 1;
  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                      static_cast<double>(win));
  }

  // Triangular filters with unit peak, sampled at FFT bin frequencies.
  const auto edges = mel_filter_edges(config.n_mels, sr);
  std::vector<double> filters(config.n_mels * bins, 0.0);
  std::vector<std::size_t> first(config.n_mels, bins), last(config.n_mels, 0);
  for (std::size_t m = 0; m < config.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t b = 0; b < bins; ++b) {
      const double f = sr * static_cast<double>(b) / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      filters[m * bins + b] = w;
      if (w != 0.0) {
        first[m] = std::min(first[m], b);
        last[m] = b + 1;
      }
    }
  }

  MelSpectrogram mel;
  mel.n_mels = config.n_mels;
  mel.frames = frames;
  mel.frame_rate = 1.0 / config.hop_seconds;
  mel.values.assign(config.n_mels * frames, 0.0f);
  std::vector<std::complex<double>> buf(n_fft);
  std::vector<double> power(bins);
  const auto half = static_cast<std::ptrdiff_t>(win / 2);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * hop) - half;
    for (std::size_t i = 0; i < win; ++i) {
      const std::ptrdiff_t s = start + static_cast<std::ptrdiff_t>(i);
      if (s >= 0 && s < static_cast<std::ptrdiff_t>(clip)) buf[i] = audio[s] * window[i];
    }
    fft_inplace(buf);
    for (std::size_t b = 0; b < bins; ++b) power[b] = std::norm(buf[b]);
    for (std::size_t m = 0; m < config.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t b = first[m]; b < last[m]; ++b) e += filters[m * bins + b] * power[b];
      mel.values[m * frames + t] = static_cast<float>(std::log(std::max(e, config.log_floor)));
    }
  }
  return mel;
}

MelSpectrogram fit_frames(const MelSpectrogram& mel, std::size_t frames, double log_floor) {
  MelSpectrogram out = mel;
  out.frames = frames;
  out.values.assign(mel.n_mels * frames, static_cast<float>(std::log(log_floor)));
  const std::size_t keep = std::min(frames, mel.frames);
  for (std::size_t m = 0; m < mel.n_mels; ++m) {
    std::copy_n(mel.values.begin() + m * mel.frames, keep, out.values.begin() + m * frames);
  }
  return out;
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("wav: cannot open " + path.string());
  char tag[4];
  if (!is.read(tag, 4) || std::memcmp(tag, "RIFF", 4) != 0) throw Error("wav: not RIFF: " + path.string());
  read_u32(is);
  if (!is.read(tag, 4) || std::memcmp(tag, "WAVE", 4) != 0) throw Error("wav: not WAVE: " + path.string());
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (is.read(tag, 4)) {
    const std::uint32_t size = read_u32(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_u16(is);
      channels = read_u16(is);
      rate = read_u32(is);
      read_u32(is);
      read_u16(is);
      bits = read_u16(is);
      is.ignore(size - 16 + (size & 1));
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw Error("wav: data chunk before fmt chunk");
      if (channels != 1) throw Error("wav: expected mono, got " + std::to_string(channels) + " channels");
      Waveform wave;
      wave.sample_rate = static_cast<int>(rate);
      std::vector<char> raw(size);
      if (!is.read(raw.data(), size)) throw Error("wav: truncated data chunk");
      if (format == 1 && bits == 16) {
        wave.samples.resize(size / 2);
        for (std::size_t i = 0; i < wave.samples.size(); ++i) {
          const auto lo = static_cast<unsigned char>(raw[2 * i]);
          const auto hi = static_cast<unsigned char>(raw[2 * i + 1]);
          const auto v = static_cast<std::int16_t>(lo | (hi << 8));
          wave.samples[i] = static_cast<float>(v) / 32768.0f;
        }
      } else if (format == 3 && bits == 32) {
        wave.samples.resize(size / 4);
        for (std::size_t i = 0; i < wave.samples.size(); ++i) {
          std::uint32_t u = 0;
          for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + b])) << (8 * b);
          wave.samples[i] = std::bit_cast<float>(u);
        }
      } else {
        throw Error("wav: unsupported encoding (format " + std::to_string(format) + ", " +
                    std::to_string(bits) + " bits)");
      }
      return wave;
    } else {
      is.ignore(size + (size & 1));
    }
  }
  throw Error("wav: no data chunk in " + path.string());
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("wav: cannot write " + path.string());
  const auto bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  os.write("RIFF", 4);
  write_u32(os, 36 + bytes);
  os.write("WAVEfmt ", 8);
  write_u32(os, 16);
  write_u16(os, 1);
  write_u16(os, 1);
  write_u32(os, static_cast<std::uint32_t>(wave.sample_rate));
  write_u32(os, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  write_u16(os, 2);
  write_u16(os, 16);
  os.write("data", 4);
  write_u32(os, bytes);
  for (float s : wave.samples) {
    const auto v = static_cast<std::int16_t>(std::clamp(std::lround(s * 32767.0f), -32768L, 32767L));
    write_u16(os, static_cast<std::uint16_t>(v));
  }
}

MelSpectrogram read_mel_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("mel: cannot open " + path.string());
  MelSpectrogram mel;
  mel.n_mels = read_u32(is);
  mel.frames = read_u32(is);
  mel.values.resize(mel.n_mels * mel.frames);
  for (float& v : mel.values) v = std::bit_cast<float>(read_u32(is));
  for (float v : mel.values) {
    if (!std::isfinite(v)) throw Error("mel: non-finite value in " + path.string());
  }
  return mel;
}

void write_mel_file(const std::filesystem::path& path, const MelSpectrogram& mel) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("mel: cannot write " + path.string());
  write_u32(os, static_cast<std::uint32_t>(mel.n_mels));
  write_u32(os, static_cast<std::uint32_t>(mel.frames));
  for (float v : mel.values) write_u32(os, std::bit_cast<std::uint32_t>(v));
}

}  // namespace whisma
