// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "whisma/optim.hpp"

namespace whisma {

inline constexpr std::uint32_t kSubstrateVersion = 1;

std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// Hash over names, shapes and payloads, in the order given.
std::uint64_t hash_params(const std::vector<NamedParam>& params);

struct CheckpointEntry {
  Shape shape;
  std::vector<float> values;
};

/// Flat parameter archive:
///   "WHISMACK" | u32 version | u64 config hash | u32 len + config JSON |
///   u32 count | per entry: u32 len + name | u32 rank | u32 dims... |
///   float32 payload
/// All integers and floats are little-endian; entries are sorted by name.
struct Checkpoint {
  std::uint32_t version = kSubstrateVersion;
  std::uint64_t config_hash = 0;
  std::string config_json;
  std::map<std::string, CheckpointEntry> entries;

  void add(const std::vector<NamedParam>& params);
  /// Copies stored values into `params`; every name must be present with a
  /// matching shape.
  void restore(std::vector<NamedParam>& params) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace whisma
