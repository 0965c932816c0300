// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/inference.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"

namespace whisma {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Quoted ('...' or "...") or bare scalar; `stops` end a bare scalar.
std::optional<std::string> parse_scalar(std::string_view t, std::size_t& i, std::string_view stops) {
  const std::size_t n = t.size();
  if (i >= n) return std::nullopt;
  const char q = t[i];
  if (q == '"' || q == '\'') {
    std::string out;
    for (++i; i < n; ++i) {
      const char c = t[i];
      if (c == '\\' && i + 1 < n) {
        const char e = t[++i];
        out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
      } else if (c == q) {
        ++i;
        return out;
      } else {
        out += c;
      }
    }
    return std::nullopt;
  }
  if (q == '{' || q == '[') return std::nullopt;
  const std::size_t start = i;
  while (i < n && stops.find(t[i]) == std::string_view::npos && t[i] != '\n') ++i;
  std::string out = trim(t.substr(start, i - start));
  if (out.empty()) return std::nullopt;
  return out;
}

std::optional<EntitySet> parse_object(std::string_view t, std::size_t i) {
  const std::size_t n = t.size();
  EntitySet out;
  ++i;  // past '{'
  while (true) {
    while (i < n && (is_space(t[i]) || t[i] == ',')) ++i;
    if (i >= n) return std::nullopt;
    if (t[i] == '}') return out;
    const auto key = parse_scalar(t, i, ":,}{\"'");
    if (!key) return std::nullopt;
    while (i < n && is_space(t[i])) ++i;
    if (i >= n || t[i] != ':') return std::nullopt;
    ++i;
    while (i < n && is_space(t[i])) ++i;
    const bool quoted = i < n && (t[i] == '"' || t[i] == '\'');
    const auto value = parse_scalar(t, i, ",}");
    if (!value) return std::nullopt;
    const std::string lv = lower(*value);
    if (quoted || (lv != "null" && lv != "none")) out.push_back({trim(*key), *value});
  }
}

std::string task_prompt_text(const TaskSpec& spec, const PromptBanks& banks, Rng& rng) {
  switch (spec.task) {
    case TaskTag::kAsr: return build_task_prompt(banks.asr, {}, rng);
    case TaskTag::kIc: return build_task_prompt(banks.ic, spec.inventory, rng);
    case TaskTag::kSf: return build_task_prompt(banks.sf, spec.inventory, rng);
    default: return spec.prompt;
  }
}

ordered_json optional_json(const std::optional<std::string>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json entities_json(const std::optional<EntitySet>& v) {
  if (!v) return nullptr;
  ordered_json arr = ordered_json::array();
  for (const auto& e : *v) arr.push_back({{"type", e.type}, {"value", e.value}});
  return arr;
}

}  // namespace

Generation ModelGenerator::generate(const Dialogue& dialogue, const Tensor& speech,
                                    std::size_t max_new) {
  const bool has_speech =
      std::any_of(dialogue.begin(), dialogue.end(), [](const DialogueTurn& t) { return t.speech; });
  const auto chat = render_chat(dialogue, render_);
  const auto seq =
      tokenize_chat(chat, model_.tokenizer(), has_speech ? model_.speech_len() : 0);
  return model_.decoder().generate_greedy(seq, has_speech ? speech : Tensor{}, max_new,
                                          model_.tokenizer());
}

TaskSpec make_task_spec(const ManifestRecord& r, const std::vector<std::string>& inventory,
                        Strategy strategy) {
  TaskSpec spec;
  spec.task = r.task;
  spec.strategy = (r.task == TaskTag::kAsr || r.task == TaskTag::kSqit) ? Strategy::kPlain
                  : strategy == Strategy::kPlain                        ? Strategy::kAlone
                                                                        : strategy;
  auto in_inventory = [&](const std::string& label) {
    return std::find(inventory.begin(), inventory.end(), label) != inventory.end();
  };
  switch (r.task) {
    case TaskTag::kIc:
      if (!r.intent || !in_inventory(*r.intent)) {
        throw Error("task spec for '" + r.id + "': gold intent missing from inventory");
      }
      spec.inventory = inventory;
      break;
    case TaskTag::kSf:
      if (!r.slots) throw Error("task spec for '" + r.id + "': no gold slots");
      for (const auto& e : *r.slots) {
        if (!in_inventory(e.type)) {
          throw Error("task spec for '" + r.id + "': slot type '" + e.type +
                      "' missing from inventory");
        }
      }
      spec.inventory = inventory;
      break;
    case TaskTag::kSqa: spec.prompt = r.question.value_or(""); break;
    case TaskTag::kSit: spec.prompt = r.instruction.value_or(""); break;
    case TaskTag::kSa:
    case TaskTag::kSer:
    case TaskTag::kSter: spec.prompt = r.prompt.value_or(""); break;
    case TaskTag::kAsr:
    case TaskTag::kSqit: break;
  }
  return spec;
}

std::optional<std::string> parse_intent(std::string_view text,
                                        const std::vector<std::string>& inventory) {
  const std::string hay = lower(text);
  std::optional<std::string> best;
  for (const auto& label : inventory) {
    if (label.empty() || hay.find(lower(label)) == std::string::npos) continue;
    if (!best || label.size() > best->size()) best = label;
  }
  return best;
}

std::optional<EntitySet> parse_entities(std::string_view text) {
  for (std::size_t i = text.find('{'); i != std::string_view::npos; i = text.find('{', i + 1)) {
    if (auto obj = parse_object(text, i)) return obj;
  }
  return std::nullopt;
}

std::optional<std::string> parse_binary(std::string_view text, TaskTag task) {
  if (!is_binary_task(task)) return std::nullopt;
  const auto [pos, neg] = binary_labels(task);
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_')) {
      ++i;
    }
    const std::string word = lower(text.substr(start, i - start));
    if (word == pos || word == "yes") return pos;
    if (word == neg || word == "no") return neg;
  }
  return std::nullopt;
}

std::pair<std::optional<std::string>, std::string> split_scot(std::string_view text) {
  const auto pos = text.find(kScotDelimiter);
  if (pos == std::string_view::npos) return {std::nullopt, trim(text)};
  std::size_t after = pos + kScotDelimiter.size();
  while (after < text.size() && text[after] == '-') ++after;
  return {trim(text.substr(0, pos)), trim(text.substr(after))};
}

ParsedOutput parse_slu_output(std::string_view text, const TaskSpec& spec) {
  ParsedOutput out;
  try {
    std::string body(text);
    if (spec.strategy == Strategy::kScot) {
      auto [transcript, answer] = split_scot(text);
      out.transcript = std::move(transcript);
      body = std::move(answer);
    }
    switch (spec.task) {
      case TaskTag::kAsr: out.transcript = trim(body); break;
      case TaskTag::kIc: out.intent = parse_intent(body, spec.inventory); break;
      case TaskTag::kSf: out.entities = parse_entities(body); break;
      case TaskTag::kSa:
      case TaskTag::kSer:
      case TaskTag::kSter: out.binary = parse_binary(body, spec.task); break;
      case TaskTag::kSqa:
      case TaskTag::kSit:
      case TaskTag::kSqit: out.answer = trim(body); break;
    }
  } catch (const std::exception&) {
    return ParsedOutput{};
  }
  return out;
}

std::size_t max_new_tokens(const TaskSpec& spec, bool scot_round, const InferenceOptions& options) {
  if (scot_round) return options.max_new_long;
  switch (spec.task) {
    case TaskTag::kAsr:
    case TaskTag::kIc:
    case TaskTag::kSa:
    case TaskTag::kSer:
    case TaskTag::kSter: return options.max_new_short;
    default: return options.max_new_long;
  }
}

SluResult infer(const TaskSpec& spec, const Tensor& speech, TextGenerator& generator,
                const PromptBanks& banks, const MarkerStrings& markers, Rng& rng,
                const InferenceOptions& options) {
  SluResult result;
  result.task = spec.task;
  result.strategy = spec.strategy;
  auto run = [&](const Dialogue& dialogue, std::size_t max_new) {
    const auto gen = generator.generate(dialogue, speech, max_new);
    result.rounds.push_back({render_chat(dialogue).str(markers), gen.text, gen.truncated});
    result.truncated = result.truncated || gen.truncated;
    return gen.text;
  };

  const bool plain = spec.task == TaskTag::kAsr || spec.task == TaskTag::kSqit ||
                     spec.strategy == Strategy::kPlain || spec.strategy == Strategy::kAlone;
  if (plain) {
    const std::string prompt = task_prompt_text(spec, banks, rng);
    result.raw = run({{Role::kUser, prompt, true}}, max_new_tokens(spec, false, options));
  } else {
    const std::string asr_prompt = build_task_prompt(banks.asr, {}, rng);
    const std::string slu_prompt = task_prompt_text(spec, banks, rng);
    if (spec.strategy == Strategy::kScot) {
      result.raw = run({{Role::kUser, build_scot(asr_prompt, slu_prompt), true}},
                       max_new_tokens(spec, true, options));
    } else {
      TaskSpec asr_spec;
      asr_spec.task = TaskTag::kAsr;
      const std::string transcript =
          trim(run({{Role::kUser, asr_prompt, true}}, max_new_tokens(asr_spec, false, options)));
      result.transcript = transcript;
      result.raw = run(build_mr_history(asr_prompt, transcript, slu_prompt),
                       max_new_tokens(spec, false, options));
    }
  }

  TaskSpec parse_spec = spec;
  if (spec.strategy == Strategy::kMr) parse_spec.strategy = Strategy::kAlone;
  auto parsed = parse_slu_output(result.raw, parse_spec);
  if (parsed.transcript) result.transcript = std::move(parsed.transcript);
  result.intent = std::move(parsed.intent);
  result.entities = std::move(parsed.entities);
  result.binary = std::move(parsed.binary);
  result.answer = std::move(parsed.answer);
  return result;
}

std::string prediction_to_json(const std::string& id, const SluResult& r,
                               const std::string& config_hash) {
  ordered_json j;
  j["id"] = id;
  j["task"] = std::string(task_name(r.task));
  j["strategy"] = std::string(strategy_name(r.strategy));
  j["config_hash"] = config_hash;
  j["transcript"] = optional_json(r.transcript);
  j["intent"] = optional_json(r.intent);
  j["entities"] = entities_json(r.entities);
  j["binary"] = optional_json(r.binary);
  j["answer"] = optional_json(r.answer);
  j["raw"] = r.raw;
  j["truncated"] = r.truncated;
  ordered_json rounds = ordered_json::array();
  for (const auto& t : r.rounds) {
    rounds.push_back({{"prompt", t.prompt}, {"output", t.output}, {"truncated", t.truncated}});
  }
  j["rounds"] = std::move(rounds);
  return j.dump();
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("predictions: cannot open " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  auto opt = [](const nlohmann::json& j, const char* key) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<std::string>();
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictionRecord p;
      p.id = j.at("id").get<std::string>();
      p.task = parse_task(j.at("task").get<std::string>());
      p.strategy = parse_strategy(j.at("strategy").get<std::string>());
      p.fields.transcript = opt(j, "transcript");
      p.fields.intent = opt(j, "intent");
      p.fields.binary = opt(j, "binary");
      p.fields.answer = opt(j, "answer");
      if (auto it = j.find("entities"); it != j.end() && !it->is_null()) {
        EntitySet es;
        for (const auto& e : *it) {
          es.push_back({e.at("type").get<std::string>(), e.at("value").get<std::string>()});
        }
        p.fields.entities = std::move(es);
      }
      p.raw = j.value("raw", std::string{});
      p.config_hash = j.value("config_hash", std::string{});
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace whisma
