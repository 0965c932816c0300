// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// The workflows behind the command-line subcommands. Everything here works
// on files so the CLI stays a thin argument parser.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "whisma/config.hpp"

namespace whisma::app {

/// One "whisma event=<name> key=value ..." line on stderr.
void log_event(std::string_view event,
               const std::vector<std::pair<std::string, std::string>>& fields = {});

// ---- prepare-data ------------------------------------------------------------

struct PrepareOptions {
  std::string source;               // micro | slurp | fsc | glue | alpaca
  std::filesystem::path input;      // source file; unused for micro
  std::filesystem::path output_dir;
  std::string audio_dir;            // prefix for audio paths in the manifest
  std::uint64_t seed = 0;           // micro only
  std::size_t n_mels = 80;          // micro only
  std::size_t frames = 96;          // micro only
  std::filesystem::path fsc_table;  // optional TSV replacing the built-in table
  bool first_recording_only = false;
};

struct PrepareReport {
  std::map<std::string, std::size_t> manifests;  // file name -> records
  std::vector<std::string> notes;
};

PrepareReport prepare_data(const PrepareOptions& options);

// ---- train / infer ---------------------------------------------------------

struct TrainArtifacts {
  std::filesystem::path dir;
  std::string config_hash;
  std::size_t steps = 0;
  double final_epoch_loss = 0.0;
};

/// Trains on data.train_manifest and writes model.ckpt, vocab.json,
/// loss.csv, config.json and train_report.json into output_dir.
TrainArtifacts run_train(const RunConfig& config);

struct InferOptions {
  std::filesystem::path model_dir;
  std::filesystem::path manifest;    // empty: the config's test manifest
  std::optional<Strategy> strategy;  // empty: the config's strategy
  std::filesystem::path output;      // empty: <model_dir>/predictions-<strategy>.jsonl
  std::filesystem::path base_dir;    // empty: the manifest's directory
};

struct InferArtifacts {
  std::filesystem::path predictions;
  std::string config_hash;
  std::size_t records = 0;
  std::size_t generations = 0;
};

InferArtifacts run_infer(const InferOptions& options);

// ---- evaluate --------------------------------------------------------------

enum class EvalTask { kAsr, kIc, kSf, kPp, kBinary };
EvalTask parse_eval_task(std::string_view name);

/// IC/SF record ids are joined for perfect parsing by stripping a trailing
/// "-ic" / "-sf".
std::string join_stem(const std::string& id);

struct EvalReport {
  std::string json;   // machine-readable report
  std::string table;  // human-readable summary
};

/// Scores a predictions file against a gold manifest; never loads a model.
EvalReport evaluate(EvalTask task, const std::filesystem::path& predictions,
                    const std::filesystem::path& gold);

}  // namespace whisma::app
