// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-task training: strategy assignment, supervised sequence construction
// with loss masks, the epoch mixture and the AdamW loop over aligner + LoRA.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "whisma/manifest.hpp"
#include "whisma/model.hpp"
#include "whisma/optim.hpp"
#include "whisma/prompt.hpp"

namespace whisma {

struct StrategyProbs {
  double alone = 1.0 / 3.0;
  double scot = 1.0 / 3.0;
  double mr = 1.0 / 3.0;

  void validate() const;
};

struct TrainConfig {
  double lr = 1e-4;
  std::size_t epochs = 1;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  StrategyProbs strategy_probs;
  /// Empty: every record once per epoch in shuffled order. Otherwise tasks
  /// are drawn with these weights (records cycled within a task).
  std::map<TaskTag, double> task_weights;
  KRange k_range;
  /// Optional text-only stage fitting the base decoder before it is frozen;
  /// the speech span holds the transcript's word embeddings.
  std::size_t decoder_pretrain_epochs = 0;
  double decoder_pretrain_lr = 1e-3;

  AdamWConfig adamw() const { return {lr, beta1, beta2, eps, weight_decay}; }
};

/// SLU tasks other than SQIT are paired with transcription; ASR and SQIT are
/// always trained in plain form.
bool uses_strategy_assignment(TaskTag task);

Strategy assign_config(const ManifestRecord& record, const StrategyProbs& probs, Rng& rng);

struct Inventories {
  std::vector<std::string> intents;
  std::vector<std::string> slot_types;
};

Inventories collect_inventories(const std::vector<ManifestRecord>& records);

/// The supervised answer: transcript (ASR), intent (IC), entity object (SF),
/// answer (SQA), output (SIT/SQIT) or binary label. Throws when missing.
std::string supervised_target(const ManifestRecord& record);

/// Dialogue ending with the supervised assistant turn(s).
Dialogue build_training_dialogue(const ManifestRecord& record, Strategy strategy,
                                 const PromptBanks& banks, const Inventories& inventories,
                                 const KRange& k_range, Rng& rng);

struct TrainingExample {
  std::string id;
  TaskTag task = TaskTag::kAsr;
  Strategy strategy = Strategy::kPlain;
  Dialogue dialogue;
  MultimodalSequence sequence;  // loss_mask true on supervised tokens
};

TrainingExample build_training_sequence(const ManifestRecord& record, Strategy strategy,
                                        const PromptBanks& banks, const Inventories& inventories,
                                        const KRange& k_range, const Tokenizer& tokenizer,
                                        std::size_t speech_len, Rng& rng);

/// Next-token targets: row i predicts ids[i + 1] where loss_mask[i + 1].
struct ShiftedTargets {
  std::vector<std::int32_t> targets;
  std::vector<bool> mask;
  std::size_t count = 0;
};
ShiftedTargets shift_targets(const MultimodalSequence& seq);

/// Record indices for one epoch.
std::vector<std::size_t> epoch_order(const std::vector<ManifestRecord>& records,
                                     const std::map<TaskTag, double>& task_weights, Rng& rng);

/// Vocabulary covering transcripts, targets, prompt banks and label lists.
Tokenizer build_vocabulary(const std::vector<ManifestRecord>& records, const PromptBanks& banks,
                           const MarkerStrings& markers = {});

struct LossRow {
  std::size_t step = 0;
  std::string example_id;
  TaskTag task = TaskTag::kAsr;
  Strategy strategy = Strategy::kPlain;
  double loss = 0.0;  // per-token mean over the sequence
  std::size_t tokens = 0;
};

struct TrainResult {
  std::vector<LossRow> trace;
  std::size_t steps = 0;
  double final_epoch_loss = 0.0;  // token-weighted mean over the last epoch
  std::uint64_t frozen_hash_before = 0;
  std::uint64_t frozen_hash_after = 0;
  double pretrain_final_loss = 0.0;
};

using TrainCallback = std::function<void(const LossRow&)>;

/// Runs the optional decoder stage, then trains aligner + LoRA with frozen
/// encoder and base decoder. Aborts on a non-finite loss naming the step and
/// example id.
TrainResult train(WhismaModel& model, const std::vector<ManifestRecord>& records,
                  const std::filesystem::path& base_dir, const FeatureOptions& features,
                  const TrainConfig& config, const PromptBanks& banks,
                  const TrainCallback& on_step = {});

/// Columns: step, task, config, loss; preceded by a "# config_hash" comment
/// line when a hash is given.
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRow>& trace,
                    const std::string& config_hash = {});

}  // namespace whisma
