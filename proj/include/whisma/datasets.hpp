// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Builders turning source corpora into manifests: the SLURP zero-shot split,
// Fluent Speech Commands relabeling, SLU-GLUE, Spoken-Alpaca and a synthetic
// micro-corpus for end-to-end tests.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "whisma/manifest.hpp"

namespace whisma::datasets {

// ---- SLURP ---------------------------------------------------------------

inline const std::set<std::string>& default_heldout_slots() {
  static const std::set<std::string> slots{"podcast_name", "artist_name", "audiobook_name",
                                           "business_name", "radio_name"};
  return slots;
}

/// Slot types of the SLURP annotation scheme.
const std::set<std::string>& slurp_slot_types();

/// "wake me up at [time : five am]" -> (plain sentence, entities).
std::pair<std::string, EntitySet> parse_slurp_annotation(std::string_view annotated);

/// Reads SLURP JSON lines (slurp_id, sentence_annotation, intent,
/// recordings). One SF record per recording (or per utterance when
/// `first_recording_only`), carrying both intent and slots.
std::vector<ManifestRecord> read_slurp(const std::filesystem::path& path,
                                       const std::string& audio_dir,
                                       bool first_recording_only = false);

struct SplitResult {
  std::vector<ManifestRecord> train;
  std::vector<ManifestRecord> test;
};

/// Records mentioning any held-out slot type go to test, the rest to train.
/// Throws on held-out types that are neither SLURP slot types nor observed.
SplitResult build_slurp_zeroshot(const std::vector<ManifestRecord>& records,
                                 const std::set<std::string>& heldout = default_heldout_slots());

// ---- Fluent Speech Commands ------------------------------------------------

struct FscTableRow {
  std::string action;
  std::string object;
  std::string intent;
  std::string object_slot;  // slot type that receives the object, or empty
};

/// The built-in (action, object) -> intent table: 15 intents, slot types
/// "location" (from the location column) and "language" (from the object).
const std::vector<FscTableRow>& fsc_table();
/// Tab-separated: action, object, intent, object_slot ("-" for none).
std::vector<FscTableRow> load_fsc_table(const std::filesystem::path& path);

struct FscAnnotation {
  std::string intent;
  EntitySet slots;
};

/// Throws on combinations absent from the table, naming the triple.
FscAnnotation remap_fsc(const std::string& action, const std::string& object,
                        const std::string& location,
                        const std::vector<FscTableRow>& table = fsc_table());

/// Reads an FSC CSV (path, speakerId, transcription, action, object,
/// location) and emits one IC record and one SF record per row.
std::vector<ManifestRecord> read_fsc(const std::filesystem::path& csv, const std::string& audio_dir,
                                     const std::vector<FscTableRow>& table = fsc_table());

// ---- SLU-GLUE --------------------------------------------------------------

struct GlueRecord {
  std::string id;
  std::string subtask;  // SST-2, QQP, QNLI, RTE, SciTail, STS-B
  std::string audio;
  std::string transcript;  // the spoken sentence
  std::string text;        // the paired written sentence, if any
  std::string label;       // source label as published
};

/// Sub-task -> instruction, with [SPEECH] and [TEXT] placeholders.
const std::map<std::string, std::string>& glue_instructions();
/// Sub-task -> expected number of samples in the full corpus.
const std::map<std::string, std::size_t>& glue_expected_counts();
TaskTag glue_task(const std::string& subtask);

/// Renders the instruction: [SPEECH] becomes "the speech", [TEXT] becomes
/// "the text" and the paired sentence follows on its own line.
std::string render_glue_prompt(const std::string& subtask, const std::string& text);

/// Throws for STS-B and unknown sub-tasks or labels.
ManifestRecord convert_glue_record(const GlueRecord& record);

struct GlueBuild {
  std::vector<ManifestRecord> records;
  std::map<std::string, std::size_t> counts;  // per sub-task
  std::vector<std::string> rejected;          // ids with reasons
};

/// Converts every record, skipping STS-B and reporting rejections.
GlueBuild build_slu_glue(const std::vector<GlueRecord>& records);

/// JSON lines with the GlueRecord fields.
std::vector<GlueRecord> read_glue_jsonl(const std::filesystem::path& path);

// ---- Spoken-Alpaca ---------------------------------------------------------

struct AlpacaRecord {
  std::string instruction;
  std::string input;
  std::string output;
};

struct AlpacaFilters {
  std::size_t max_words = 60;  // for the spoken field(s)
  bool drop_equations = true;
  bool drop_tables = true;
};

/// Empty when the record passes; otherwise "length", "equation" or "table".
std::string alpaca_filter_reason(const AlpacaRecord& record, const AlpacaFilters& filters);
bool looks_like_equation(std::string_view text);
bool looks_like_table(std::string_view text);

struct AlpacaBuild {
  std::vector<ManifestRecord> sit;
  std::vector<ManifestRecord> sqit;
  std::vector<std::pair<std::size_t, std::string>> filtered;  // (index, reason)
};

AlpacaBuild build_spoken_alpaca(const std::vector<AlpacaRecord>& records,
                                const AlpacaFilters& filters = {});

/// The published Alpaca JSON array.
std::vector<AlpacaRecord> read_alpaca_json(const std::filesystem::path& path);

// ---- Synthetic micro-corpus ------------------------------------------------

struct MicroSpec {
  std::map<TaskTag, std::size_t> counts{{TaskTag::kAsr, 10}, {TaskTag::kIc, 10}, {TaskTag::kSf, 10}};
  std::size_t n_intents = 3;  // at most 3
  std::size_t n_mels = 80;
  std::size_t frames = 96;
  std::size_t frames_per_word = 8;
};

struct MicroCorpus {
  std::vector<ManifestRecord> records;
  std::vector<std::string> intents;
  std::vector<std::string> slot_types;
};

/// Deterministic in `seed`. Transcripts fit in frames / frames_per_word words
/// and every slot value is a substring of its transcript.
MicroCorpus generate_micro_corpus(const MicroSpec& spec, std::uint64_t seed);

/// Writes `manifest_name` plus one feature file per record under mel/.
void write_micro_corpus(const MicroCorpus& corpus, const MicroSpec& spec,
                        const std::filesystem::path& dir,
                        const std::string& manifest_name = "micro.jsonl");

}  // namespace whisma::datasets
