// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Inference strategies (SLU-alone, SCoT, multi-round) and the tolerant
// parser that turns generated text into structured predictions.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "whisma/manifest.hpp"
#include "whisma/model.hpp"
#include "whisma/prompt.hpp"

namespace whisma {

/// Produces the assistant continuation of a dialogue. The speech tensor is
/// spliced at the dialogue's single speech turn.
class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual Generation generate(const Dialogue& dialogue, const Tensor& speech,
                              std::size_t max_new) = 0;
};

/// Greedy decoding with a finalized model.
class ModelGenerator : public TextGenerator {
 public:
  explicit ModelGenerator(const WhismaModel& model, RenderOptions render = {})
      : model_(model), render_(render) {}
  Generation generate(const Dialogue& dialogue, const Tensor& speech, std::size_t max_new) override;

 private:
  const WhismaModel& model_;
  RenderOptions render_;
};

struct TaskSpec {
  TaskTag task = TaskTag::kAsr;
  std::vector<std::string> inventory;  // intents (IC) or slot types (SF)
  Strategy strategy = Strategy::kAlone;
  std::string prompt;  // task text for SQA/SIT/binary tasks; ignored otherwise
};

/// Validates the spec against a record's gold annotation and builds the
/// task-specific text prompt for it.
TaskSpec make_task_spec(const ManifestRecord& record, const std::vector<std::string>& inventory,
                        Strategy strategy);

struct GenerationTrace {
  std::string prompt;  // rendered dialogue given to the generator
  std::string output;
  bool truncated = false;
};

struct SluResult {
  TaskTag task = TaskTag::kAsr;
  Strategy strategy = Strategy::kAlone;
  std::optional<std::string> transcript;
  std::optional<std::string> intent;
  std::optional<EntitySet> entities;
  std::optional<std::string> binary;
  std::optional<std::string> answer;  // free-form tasks
  std::string raw;                    // final generation, verbatim
  bool truncated = false;
  std::vector<GenerationTrace> rounds;
};

struct ParsedOutput {
  std::optional<std::string> transcript;
  std::optional<std::string> intent;
  std::optional<EntitySet> entities;
  std::optional<std::string> binary;
  std::optional<std::string> answer;
};

/// Longest case-insensitive inventory label found in `text`; ties go to the
/// earlier inventory entry.
std::optional<std::string> parse_intent(std::string_view text,
                                        const std::vector<std::string>& inventory);
/// First parseable {key: value, ...} object; tolerates single quotes,
/// trailing commas, bare words and surrounding prose.
std::optional<EntitySet> parse_entities(std::string_view text);
/// The class of the earliest whole-word keyword: {positive, "yes"} or
/// {negative, "no"}.
std::optional<std::string> parse_binary(std::string_view text, TaskTag task);

/// Splits a SCoT response at the first delimiter; totality guaranteed.
std::pair<std::optional<std::string>, std::string> split_scot(std::string_view text);

/// Never throws for any input text.
ParsedOutput parse_slu_output(std::string_view text, const TaskSpec& spec);

struct InferenceOptions {
  std::size_t max_new_short = 64;  // ASR, IC, binary
  std::size_t max_new_long = 128;  // SF, SCoT, free-form
};

std::size_t max_new_tokens(const TaskSpec& spec, bool scot_round, const InferenceOptions& options);

/// Runs the strategy: alone and SCoT generate once, MR generates twice with
/// the first transcript as dialogue history. Template choices come from `rng`.
SluResult infer(const TaskSpec& spec, const Tensor& speech, TextGenerator& generator,
                const PromptBanks& banks, const MarkerStrings& markers, Rng& rng,
                const InferenceOptions& options = {});

/// One JSON line per example: id, task, strategy, parsed fields, raw text and
/// the per-round traces.
std::string prediction_to_json(const std::string& id, const SluResult& result,
                               const std::string& config_hash);

struct PredictionRecord {
  std::string id;
  TaskTag task = TaskTag::kAsr;
  Strategy strategy = Strategy::kAlone;
  ParsedOutput fields;
  std::string raw;
  std::string config_hash;
};

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

}  // namespace whisma
