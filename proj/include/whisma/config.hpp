// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one JSON document covering model dimensions, training,
// inference and data paths. Unknown keys are rejected with their full path.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "whisma/inference.hpp"
#include "whisma/manifest.hpp"
#include "whisma/model.hpp"
#include "whisma/training.hpp"

namespace whisma {

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error("config: " + (key.empty() ? std::string() : "'" + key + "': ") + message),
        key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct DataConfig {
  std::string train_manifest;
  std::string test_manifest;
  /// Directory audio paths are resolved against; empty means the
  /// manifest's own directory.
  std::string base_dir;
  std::size_t frames_per_word = 8;
};

struct InferenceConfig {
  Strategy strategy = Strategy::kAlone;
  InferenceOptions options;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  std::string prompts_dir;  // empty: built-in banks
  ModelConfig model;
  TrainConfig train;
  InferenceConfig inference;
  DataConfig data;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
  FeatureOptions features() const;
};

RunConfig parse_config(std::string_view json);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical serialization: every field, fixed key order, two-space indent.
std::string config_to_json(const RunConfig& config);

/// fnv1a64 over the canonical serialization, as 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace whisma
