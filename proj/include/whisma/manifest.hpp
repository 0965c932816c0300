// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON Lines manifests: one example per line with a fixed key order, so
// write -> read -> write is byte-identical.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "whisma/audio.hpp"
#include "whisma/slu.hpp"

namespace whisma {

struct ManifestRecord {
  std::string id;
  std::string audio;       // feature/wave path relative to the manifest, or "synthetic:..."
  std::string transcript;  // the spoken text
  TaskTag task = TaskTag::kAsr;

  std::optional<std::string> intent;
  std::optional<EntitySet> slots;
  std::optional<std::string> question;  // SQA
  std::optional<std::string> answer;    // SQA
  std::optional<std::string> instruction;
  std::optional<std::string> input;
  std::optional<std::string> output;
  std::optional<std::string> prompt;   // instruction text for SLU-GLUE tasks
  std::optional<std::string> text;     // paired written sentence
  std::optional<std::string> label;    // binary gold
  std::optional<std::string> subtask;  // source sub-corpus, e.g. "SST-2"

  bool operator==(const ManifestRecord&) const = default;
};

/// Throws unless the fields required by the task tag are present.
void validate_record(const ManifestRecord& record);

std::string record_to_json(const ManifestRecord& record);
ManifestRecord record_from_json(std::string_view line);

/// Throws on duplicate ids or invalid records (with the line number).
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

/// (positive, negative) labels of a binary task.
std::pair<std::string, std::string> binary_labels(TaskTag task);

/// Sorted distinct intents (IC) or slot types (SF) occurring in `records`.
std::vector<std::string> collect_inventory(const std::vector<ManifestRecord>& records,
                                           TaskTag task);

/// Deterministic features for a transcript: each word occupies
/// `frames_per_word` frames of a pattern seeded by the word itself.
MelSpectrogram synthetic_mel(const std::string& transcript, std::size_t n_mels,
                             std::size_t frames, std::size_t frames_per_word);

struct FeatureOptions {
  std::size_t n_mels = 80;
  std::size_t frames = 3000;
  std::size_t frames_per_word = 8;
  MelConfig mel;
};

/// Resolves the record's audio: ".wav" via the log-mel frontend, ".mel"
/// feature files, or "synthetic:" URIs from the transcript. Output always has
/// `frames` frames.
MelSpectrogram load_features(const ManifestRecord& record, const std::filesystem::path& base_dir,
                             const FeatureOptions& options);

}  // namespace whisma
