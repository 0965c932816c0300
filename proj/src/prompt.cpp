// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/prompt.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace whisma {
namespace {

const std::array<std::string, kTemplatesPerTask> kAsrTemplates{
    "Transcribe the spoken utterance.",
    "Write down exactly what is said in the audio.",
    "Convert the speech into text.",
    "Provide a transcript of the spoken utterance.",
    "What does the speaker say? Give the exact words.",
    "Generate the transcription of this recording.",
    "Listen to the audio and transcribe it verbatim.",
    "Turn the spoken words into written text.",
    "Produce a word-for-word transcript of the speech.",
    "Recognize the speech and output the text.",
};

const std::array<std::string, kTemplatesPerTask> kIcTemplates{
    "Classify the intent of the spoken utterance into one of the following labels: {labels}",
    "Which of these intents best describes the spoken utterance? Options: {labels}",
    "Identify the intent of the speaker. Choose one of: {labels}",
    "Select the intent expressed in the audio from the following list: {labels}",
    "Determine what the speaker wants. Pick one intent from: {labels}",
    "Assign one of these intent labels to the utterance: {labels}",
    "From the candidate intents {labels}, choose the one that matches the speech.",
    "Label the spoken request with its intent. Possible intents: {labels}",
    "What is the intent of this utterance? Answer with one of: {labels}",
    "Categorize the spoken command into one of the following intents: {labels}",
};

const std::array<std::string, kTemplatesPerTask> kSfTemplates{
    "Perform slot filling on the spoken utterance for the following slots: {labels}. Answer with "
    "a JSON object.",
    "Extract the values of these slots from the speech as a JSON object: {labels}",
    "Find any mentions of the following slot types in the utterance and return them as JSON: "
    "{labels}",
    "Identify the entities spoken for these slots: {labels}. Reply with a JSON object mapping "
    "slot to value.",
    "Fill in the following slots using the spoken utterance, formatted as JSON: {labels}",
    "Which of these slots are mentioned in the audio, and with what values? Slots: {labels}. Use "
    "JSON.",
    "List the slot values in the utterance for the slot types {labels} as a JSON object.",
    "Tag the spoken request with values for the following slots and output JSON: {labels}",
    "From the speech, extract entities of these types into a JSON object: {labels}",
    "Detect the slot values for {labels} in the spoken utterance. Respond in JSON.",
};

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string escape_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\') {
      out += "\\\\";
    } else if (text[i] == '<' && i + 1 < text.size() && text[i + 1] == '|') {
      out += "<\\|";
      ++i;
    } else {
      out += text[i];
    }
  }
  return out;
}

std::size_t uniform_index(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

std::string_view role_name(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "?";
}

std::string RenderedChat::str(const MarkerStrings& markers) const {
  std::string out;
  for (const auto& seg : segments) {
    out += seg.special ? markers.of(*seg.special) : escape_text(seg.text);
  }
  return out;
}

RenderedChat render_chat(const Dialogue& turns, const RenderOptions& options) {
  if (turns.empty()) throw Error("render_chat: empty dialogue");
  std::size_t first = 0;
  if (turns[0].role == Role::kSystem) first = 1;
  std::size_t splices = 0;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const Role expected =
        i < first ? Role::kSystem : ((i - first) % 2 == 0 ? Role::kUser : Role::kAssistant);
    if (turns[i].role != expected) {
      throw Error("render_chat: turn " + std::to_string(i) + " is " +
                  std::string(role_name(turns[i].role)) + ", expected " +
                  std::string(role_name(expected)));
    }
    if (turns[i].speech) {
      if (turns[i].role == Role::kAssistant) {
        throw Error("render_chat: assistant turn " + std::to_string(i) + " carries speech");
      }
      ++splices;
    }
  }
  if (splices > 1) throw Error("render_chat: more than one speech splice");
  if (options.add_generation_prompt && turns.back().role != Role::kUser) {
    throw Error("render_chat: generation prompt must follow a user turn");
  }

  RenderedChat chat;
  auto special = [&](Special s, bool target = false) {
    chat.segments.push_back({s, {}, target});
  };
  auto text = [&](std::string t, bool target = false) {
    if (!t.empty()) chat.segments.push_back({std::nullopt, std::move(t), target});
  };
  auto header = [&](Role role) {
    special(Special::kHeaderOpen);
    text(std::string(role_name(role)));
    special(Special::kHeaderClose);
    text("\n\n");
  };
  special(Special::kBeginText);
  for (const auto& turn : turns) {
    const bool target = turn.role == Role::kAssistant;
    header(turn.role);
    if (turn.speech && options.speech_first) special(Special::kSpeech);
    text(turn.text, target);
    if (turn.speech && !options.speech_first) special(Special::kSpeech);
    special(Special::kEndTurn, target);
  }
  if (options.add_generation_prompt) header(Role::kAssistant);
  return chat;
}

MultimodalSequence tokenize_chat(const RenderedChat& chat, const Tokenizer& tokenizer,
                                 std::size_t speech_len) {
  MultimodalSequence seq;
  bool spliced = false;
  for (const auto& seg : chat.segments) {
    if (seg.special == Special::kSpeech) {
      seq.speech_begin = seq.ids.size();
      seq.speech_len = speech_len;
      seq.ids.insert(seq.ids.end(), speech_len, id_of(Special::kSpeech));
      seq.loss_mask.insert(seq.loss_mask.end(), speech_len, false);
      spliced = true;
      continue;
    }
    if (seg.special) {
      seq.ids.push_back(id_of(*seg.special));
      seq.loss_mask.push_back(seg.target);
      continue;
    }
    const auto ids = tokenizer.encode(seg.text);
    seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
    seq.loss_mask.insert(seq.loss_mask.end(), ids.size(), seg.target);
  }
  if (!spliced) seq.speech_begin = 0;
  return seq;
}

std::string_view prompt_task_name(PromptTask task) {
  switch (task) {
    case PromptTask::kAsr: return "asr";
    case PromptTask::kIc: return "ic";
    case PromptTask::kSf: return "sf";
  }
  return "?";
}

PromptBank::PromptBank(PromptTask task, std::vector<std::string> templates)
    : task_(task), templates_(std::move(templates)) {
  const std::string name(prompt_task_name(task));
  if (templates_.size() != kTemplatesPerTask) {
    throw Error("prompt bank " + name + ": expected " + std::to_string(kTemplatesPerTask) +
                " templates, got " + std::to_string(templates_.size()));
  }
  const std::size_t holes = task == PromptTask::kAsr ? 0 : 1;
  for (std::size_t i = 0; i < templates_.size(); ++i) {
    const auto& t = templates_[i];
    if (t.empty()) throw Error("prompt bank " + name + ": template " + std::to_string(i) + " empty");
    if (count_occurrences(t, kLabelHole) != holes) {
      throw Error("prompt bank " + name + ": template " + std::to_string(i) + " must contain " +
                  std::to_string(holes) + " label hole(s)");
    }
    if (t.find(kScotDelimiter) != std::string::npos) {
      throw Error("prompt bank " + name + ": template " + std::to_string(i) +
                  " contains the SCoT delimiter");
    }
  }
}

PromptBank PromptBank::builtin(PromptTask task) {
  const auto& src = task == PromptTask::kAsr  ? kAsrTemplates
                    : task == PromptTask::kIc ? kIcTemplates
                                              : kSfTemplates;
  return PromptBank(task, {src.begin(), src.end()});
}

PromptBank PromptBank::load(PromptTask task, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("prompt bank: cannot open " + path.string());
  std::vector<std::string> templates;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    templates.push_back(line);
  }
  return PromptBank(task, std::move(templates));
}

const PromptBank& PromptBanks::of(PromptTask task) const {
  switch (task) {
    case PromptTask::kAsr: return asr;
    case PromptTask::kIc: return ic;
    case PromptTask::kSf: return sf;
  }
  return asr;
}

PromptBanks PromptBanks::load_dir(const std::filesystem::path& dir) {
  return {PromptBank::load(PromptTask::kAsr, dir / "asr.txt"),
          PromptBank::load(PromptTask::kIc, dir / "ic.txt"),
          PromptBank::load(PromptTask::kSf, dir / "sf.txt")};
}

std::vector<std::string> sample_candidate_labels(const std::vector<std::string>& inventory,
                                                 const std::vector<std::string>& gold,
                                                 KRange k_range, Rng& rng) {
  std::vector<std::string> chosen;
  std::vector<std::string> others;
  for (const auto& g : gold) {
    if (std::find(inventory.begin(), inventory.end(), g) == inventory.end()) {
      throw Error("sample_candidate_labels: gold label '" + g + "' not in inventory");
    }
    if (std::find(chosen.begin(), chosen.end(), g) == chosen.end()) chosen.push_back(g);
  }
  for (const auto& label : inventory) {
    if (std::find(chosen.begin(), chosen.end(), label) == chosen.end() &&
        std::find(others.begin(), others.end(), label) == others.end()) {
      others.push_back(label);
    }
  }
  const std::size_t n = chosen.size() + others.size();
  if (n == 0) return chosen;
  const std::size_t hi = std::min(k_range.hi == 0 ? n : k_range.hi, n);
  const std::size_t lo = std::min(std::max({k_range.lo, chosen.size(), std::size_t{1}}), hi);
  const std::size_t k =
      std::max(std::uniform_int_distribution<std::size_t>(lo, hi)(rng), chosen.size());
  // Partial Fisher-Yates over the non-gold labels.
  for (std::size_t i = 0; chosen.size() < k; ++i) {
    const std::size_t j = i + uniform_index(others.size() - i, rng);
    std::swap(others[i], others[j]);
    chosen.push_back(others[i]);
  }
  std::shuffle(chosen.begin(), chosen.end(), rng);
  return chosen;
}

std::string join_labels(const std::vector<std::string>& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out += ", ";
    out += labels[i];
  }
  return out;
}

std::string build_task_prompt(const PromptBank& bank, const std::vector<std::string>& labels,
                              Rng& rng) {
  const auto& templates = bank.templates();
  if (templates.empty()) throw Error("build_task_prompt: empty bank");
  std::string text = templates[uniform_index(templates.size(), rng)];
  if (bank.task() == PromptTask::kAsr) return text;
  if (labels.empty()) {
    throw Error("build_task_prompt: " + std::string(prompt_task_name(bank.task())) +
                " prompt needs at least one label");
  }
  const auto pos = text.find(kLabelHole);
  text.replace(pos, kLabelHole.size(), join_labels(labels));
  return text;
}

std::string build_scot(const std::string& asr_prompt, const std::string& slu_prompt) {
  return asr_prompt + "\nAfter the transcript, write a line containing only " +
         std::string(kScotDelimiter) + " and then complete this task: " + slu_prompt;
}

Dialogue build_mr_history(const std::string& asr_prompt, const std::string& transcript,
                          const std::string& slu_prompt) {
  return {{Role::kUser, asr_prompt, true},
          {Role::kAssistant, transcript, false},
          {Role::kUser, slu_prompt, false}};
}

std::string scot_response(const std::string& transcript, const std::string& answer) {
  return transcript + "\n" + std::string(kScotDelimiter) + "\n" + answer;
}

std::string format_entities(const EntitySet& entities) {
  std::string out = "{";
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (i) out += ", ";
    out += nlohmann::json(entities[i].type).dump() + ": " + nlohmann::json(entities[i].value).dump();
  }
  return out + "}";
}

}  // namespace whisma
