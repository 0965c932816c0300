// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Chat rendering, prompt banks, candidate-label sampling and the SCoT / MR
// prompt layouts.

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "whisma/decoder.hpp"
#include "whisma/init.hpp"
#include "whisma/slu.hpp"
#include "whisma/tokenizer.hpp"

namespace whisma {

enum class Role { kSystem, kUser, kAssistant };

std::string_view role_name(Role role);

struct DialogueTurn {
  Role role = Role::kUser;
  std::string text;
  bool speech = false;  // splice the utterance embeddings into this turn

  bool operator==(const DialogueTurn&) const = default;
};

using Dialogue = std::vector<DialogueTurn>;

struct RenderOptions {
  /// Append an open assistant header so the model continues as assistant.
  bool add_generation_prompt = true;
  /// Place the speech splice before the turn text (otherwise after).
  bool speech_first = true;
};

/// One rendered piece: a special marker or ordinary text. `target` marks
/// assistant content and its end-of-turn, the supervised positions.
struct Segment {
  std::optional<Special> special;
  std::string text;
  bool target = false;
};

struct RenderedChat {
  std::vector<Segment> segments;

  /// Printable form; text segments escape '\' and "<|" so distinct
  /// dialogues never render to the same string.
  std::string str(const MarkerStrings& markers) const;
};

/// Llama-3 layout: begin_text, then per turn
/// header_open role header_close "\n\n" content end_turn.
/// Throws on malformed turn order or misplaced speech.
RenderedChat render_chat(const Dialogue& turns, const RenderOptions& options = {});

/// Token ids with the speech marker expanded into `speech_len` placeholders.
/// `loss_mask` marks target segments.
MultimodalSequence tokenize_chat(const RenderedChat& chat, const Tokenizer& tokenizer,
                                 std::size_t speech_len);

enum class PromptTask { kAsr, kIc, kSf };

std::string_view prompt_task_name(PromptTask task);

inline constexpr std::string_view kLabelHole = "{labels}";
inline constexpr std::size_t kTemplatesPerTask = 10;
inline constexpr std::string_view kScotDelimiter = "---";

/// Ten interchangeable instructions for one task; IC and SF templates carry a
/// single label-list hole, ASR templates none.
class PromptBank {
 public:
  PromptBank(PromptTask task, std::vector<std::string> templates);

  static PromptBank builtin(PromptTask task);
  /// One template per line; blank lines and lines starting with '#' skipped.
  static PromptBank load(PromptTask task, const std::filesystem::path& path);

  PromptTask task() const { return task_; }
  const std::vector<std::string>& templates() const { return templates_; }

 private:
  PromptTask task_;
  std::vector<std::string> templates_;
};

struct PromptBanks {
  PromptBank asr = PromptBank::builtin(PromptTask::kAsr);
  PromptBank ic = PromptBank::builtin(PromptTask::kIc);
  PromptBank sf = PromptBank::builtin(PromptTask::kSf);

  const PromptBank& of(PromptTask task) const;
  /// Loads "asr.txt", "ic.txt" and "sf.txt" from `dir`.
  static PromptBanks load_dir(const std::filesystem::path& dir);
};

struct KRange {
  std::size_t lo = 2;
  std::size_t hi = 0;  // 0 means |inventory|
};

/// Distinct labels containing every gold label, of a size drawn uniformly
/// from [max(lo, |gold|), hi] (clamped to the inventory), in shuffled order.
std::vector<std::string> sample_candidate_labels(const std::vector<std::string>& inventory,
                                                 const std::vector<std::string>& gold,
                                                 KRange k_range, Rng& rng);

std::string join_labels(const std::vector<std::string>& labels);

/// A uniformly chosen bank template with the labels filled in.
std::string build_task_prompt(const PromptBank& bank, const std::vector<std::string>& labels,
                              Rng& rng);

/// One prompt asking for the transcript, a "---" line, then the SLU answer.
std::string build_scot(const std::string& asr_prompt, const std::string& slu_prompt);

/// [user: asr_prompt + speech, assistant: transcript, user: slu_prompt]
Dialogue build_mr_history(const std::string& asr_prompt, const std::string& transcript,
                          const std::string& slu_prompt);

/// SCoT response text: transcript, delimiter line, answer.
std::string scot_response(const std::string& transcript, const std::string& answer);

/// SF answer format: {"type": "value", ...} in the given order.
std::string format_entities(const EntitySet& entities);

}  // namespace whisma
