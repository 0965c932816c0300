// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

#include "json.hpp"

#include "whisma/init.hpp"
#include "whisma/metrics.hpp"

namespace whisma::datasets {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else if (c != '\r') {
      cells.back() += c;
    }
  }
  return cells;
}

std::string file_stem(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

std::string join_path(const std::string& dir, const std::string& file) {
  return dir.empty() ? file : (std::filesystem::path(dir) / file).string();
}

}  // namespace

// ---- SLURP ---------------------------------------------------------------

const std::set<std::string>& slurp_slot_types() {
  static const std::set<std::string> types{
      "alarm_type",     "app_name",          "artist_name",         "audiobook_author",
      "audiobook_name", "business_name",     "business_type",       "change_amount",
      "coffee_type",    "color_type",        "cooking_type",        "currency_name",
      "date",           "definition_word",   "device_type",         "drink_type",
      "email_address",  "email_folder",      "event_name",          "food_type",
      "game_name",      "game_type",         "general_frequency",   "house_place",
      "ingredient",     "joke_type",         "list_name",           "meal_type",
      "media_type",     "movie_name",        "movie_type",          "music_album",
      "music_descriptor", "music_genre",     "news_topic",          "order_type",
      "person",         "personal_info",     "place_name",          "player_setting",
      "playlist_name",  "podcast_descriptor", "podcast_name",       "query_detail",
      "radio_name",     "relation",          "song_name",           "sport_type",
      "time",           "time_zone",         "timeofday",           "transport_agency",
      "transport_descriptor", "transport_name", "transport_type",   "weather_descriptor",
  };
  return types;
}

std::pair<std::string, EntitySet> parse_slurp_annotation(std::string_view annotated) {
  std::string plain;
  EntitySet entities;
  std::size_t i = 0;
  while (i < annotated.size()) {
    const char c = annotated[i];
    if (c != '[') {
      plain += c;
      ++i;
      continue;
    }
    const auto close = annotated.find(']', i);
    const auto colon = annotated.find(':', i);
    if (close == std::string_view::npos || colon == std::string_view::npos || colon > close) {
      throw Error("slurp annotation: malformed span at offset " + std::to_string(i) + " in '" +
                  std::string(annotated) + "'");
    }
    const std::string type = trim(annotated.substr(i + 1, colon - i - 1));
    const std::string value = trim(annotated.substr(colon + 1, close - colon - 1));
    entities.push_back({type, value});
    plain += value;
    i = close + 1;
  }
  return {metrics::split_words(plain).empty() ? std::string{} : trim(plain), entities};
}

std::vector<ManifestRecord> read_slurp(const std::filesystem::path& path,
                                       const std::string& audio_dir, bool first_recording_only) {
  std::ifstream is(path);
  if (!is) throw Error("slurp: cannot open " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto [sentence, slots] = parse_slurp_annotation(j.at("sentence_annotation").get<std::string>());
      const std::string base = "slurp-" + j.at("slurp_id").dump();
      std::vector<std::string> files;
      if (auto it = j.find("recordings"); it != j.end()) {
        for (const auto& rec : *it) files.push_back(rec.at("file").get<std::string>());
      }
      if (files.empty()) files.push_back("synthetic:" + base);
      if (first_recording_only) files.resize(1);
      for (const auto& file : files) {
        ManifestRecord r;
        r.id = files.size() == 1 ? base : base + "-" + file_stem(file);
        r.task = TaskTag::kSf;
        r.audio = file.rfind("synthetic:", 0) == 0 ? file : join_path(audio_dir, file);
        r.transcript = sentence;
        r.intent = j.at("intent").get<std::string>();
        r.slots = slots;
        r.subtask = "SLURP";
        out.push_back(std::move(r));
      }
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

SplitResult build_slurp_zeroshot(const std::vector<ManifestRecord>& records,
                                 const std::set<std::string>& heldout) {
  std::set<std::string> known = slurp_slot_types();
  for (const auto& r : records) {
    if (r.slots) {
      for (const auto& e : *r.slots) known.insert(e.type);
    }
  }
  for (const auto& slot : heldout) {
    if (!known.count(slot)) throw Error("build_slurp_zeroshot: unknown slot type '" + slot + "'");
  }
  SplitResult split;
  for (const auto& r : records) {
    const bool held = r.slots && std::any_of(r.slots->begin(), r.slots->end(), [&](const Entity& e) {
                        return heldout.count(e.type) > 0;
                      });
    (held ? split.test : split.train).push_back(r);
  }
  return split;
}

// ---- Fluent Speech Commands ------------------------------------------------

const std::vector<FscTableRow>& fsc_table() {
  static const std::vector<FscTableRow> table{
      {"activate", "music", "activate_music", ""},
      {"activate", "lights", "activate_lights", ""},
      {"activate", "lamp", "activate_lamp", ""},
      {"deactivate", "music", "deactivate_music", ""},
      {"deactivate", "lights", "deactivate_lights", ""},
      {"deactivate", "lamp", "deactivate_lamp", ""},
      {"increase", "volume", "increase_volume", ""},
      {"increase", "heat", "increase_heat", ""},
      {"decrease", "volume", "decrease_volume", ""},
      {"decrease", "heat", "decrease_heat", ""},
      {"bring", "newspaper", "bring_newspaper", ""},
      {"bring", "juice", "bring_juice", ""},
      {"bring", "socks", "bring_socks", ""},
      {"bring", "shoes", "bring_shoes", ""},
      {"change language", "none", "change_language", ""},
      {"change language", "Chinese", "change_language", "language"},
      {"change language", "Korean", "change_language", "language"},
      {"change language", "English", "change_language", "language"},
      {"change language", "German", "change_language", "language"},
  };
  return table;
}

std::vector<FscTableRow> load_fsc_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("fsc table: cannot open " + path.string());
  std::vector<FscTableRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, '\t');) cells.push_back(cell);
    if (cells.size() != 4) throw Error("fsc table: expected 4 columns in '" + line + "'");
    rows.push_back({cells[0], cells[1], cells[2], cells[3] == "-" ? "" : cells[3]});
  }
  return rows;
}

FscAnnotation remap_fsc(const std::string& action, const std::string& object,
                        const std::string& location, const std::vector<FscTableRow>& table) {
  for (const auto& row : table) {
    if (lower(row.action) != lower(action) || lower(row.object) != lower(object)) continue;
    FscAnnotation out{row.intent, {}};
    if (!row.object_slot.empty()) out.slots.push_back({row.object_slot, object});
    if (lower(location) != "none" && !location.empty()) out.slots.push_back({"location", location});
    return out;
  }
  throw Error("remap_fsc: unmapped combination (" + action + ", " + object + ", " + location + ")");
}

std::vector<ManifestRecord> read_fsc(const std::filesystem::path& csv, const std::string& audio_dir,
                                     const std::vector<FscTableRow>& table) {
  std::ifstream is(csv);
  if (!is) throw Error("fsc: cannot open " + csv.string());
  std::string line;
  if (!std::getline(is, line)) throw Error("fsc: empty file " + csv.string());
  const auto header = parse_csv_line(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error("fsc: missing column '" + name + "' in " + csv.string());
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_path = column("path"), c_text = column("transcription"),
                    c_action = column("action"), c_object = column("object"),
                    c_location = column("location");
  std::vector<ManifestRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = parse_csv_line(line);
    if (cells.size() < header.size()) {
      throw Error("fsc: " + csv.string() + ":" + std::to_string(lineno) + ": too few columns");
    }
    const auto ann = remap_fsc(cells[c_action], cells[c_object], cells[c_location], table);
    ManifestRecord base;
    base.audio = join_path(audio_dir, cells[c_path]);
    base.transcript = cells[c_text];
    base.intent = ann.intent;
    base.slots = ann.slots;
    base.subtask = "FSC";
    const std::string stem = "fsc-" + std::to_string(lineno - 1) + "-" + file_stem(cells[c_path]);
    ManifestRecord ic = base;
    ic.id = stem + "-ic";
    ic.task = TaskTag::kIc;
    ManifestRecord sf = base;
    sf.id = stem + "-sf";
    sf.task = TaskTag::kSf;
    out.push_back(std::move(ic));
    out.push_back(std::move(sf));
  }
  return out;
}

// ---- SLU-GLUE --------------------------------------------------------------

const std::map<std::string, std::string>& glue_instructions() {
  static const std::map<std::string, std::string> m{
      {"SST-2", "Classify the sentiment of [SPEECH] into positive or negative."},
      {"QQP", "Identify if the question in [SPEECH] is a paraphrase of the question in [TEXT]."},
      {"QNLI",
       "Identify if the context in [SPEECH] contains the answer to the question in [TEXT]."},
      {"RTE", "Identify if the sentence in [SPEECH] entails the sentence in [TEXT]."},
      {"SciTail", "Identify if the premise in [SPEECH] supports the hypothesis in [TEXT]."},
  };
  return m;
}

const std::map<std::string, std::size_t>& glue_expected_counts() {
  static const std::map<std::string, std::size_t> m{
      {"SST-2", 2790}, {"QQP", 3996}, {"QNLI", 2718}, {"RTE", 2088}, {"SciTail", 2736}};
  return m;
}

TaskTag glue_task(const std::string& subtask) {
  if (subtask == "SST-2") return TaskTag::kSa;
  if (subtask == "QQP" || subtask == "QNLI") return TaskTag::kSer;
  if (subtask == "RTE" || subtask == "SciTail") return TaskTag::kSter;
  throw Error("slu-glue: unsupported sub-task '" + subtask + "'");
}

std::string render_glue_prompt(const std::string& subtask, const std::string& text) {
  const auto it = glue_instructions().find(subtask);
  if (it == glue_instructions().end()) {
    throw Error("slu-glue: unsupported sub-task '" + subtask + "'");
  }
  std::string prompt = it->second;
  auto replace = [&](std::string_view hole, std::string_view with) {
    for (auto pos = prompt.find(hole); pos != std::string::npos; pos = prompt.find(hole, pos)) {
      prompt.replace(pos, hole.size(), with);
      pos += with.size();
    }
  };
  const bool paired = prompt.find("[TEXT]") != std::string::npos;
  replace("[SPEECH]", "the speech");
  replace("[TEXT]", "the text");
  if (paired) prompt += "\nText: " + text;
  return prompt;
}

ManifestRecord convert_glue_record(const GlueRecord& g) {
  if (g.subtask == "STS-B") {
    throw Error("slu-glue: record '" + g.id + "' is STS-B, which is excluded");
  }
  const TaskTag task = glue_task(g.subtask);
  const std::string label = lower(trim(g.label));
  bool positive = false;
  // GLUE label conventions differ per corpus.
  if (g.subtask == "SST-2" || g.subtask == "QQP") {
    if (label == "1" || label == "positive" || label == "yes") {
      positive = true;
    } else if (label != "0" && label != "negative" && label != "no") {
      throw Error("slu-glue: record '" + g.id + "' has label '" + g.label + "'");
    }
  } else if (g.subtask == "QNLI" || g.subtask == "RTE") {
    if (label == "0" || label == "entailment" || label == "yes") {
      positive = true;
    } else if (label != "1" && label != "not_entailment" && label != "no") {
      throw Error("slu-glue: record '" + g.id + "' has label '" + g.label + "'");
    }
  } else {
    if (label == "entails" || label == "entailment" || label == "yes") {
      positive = true;
    } else if (label != "neutral" && label != "no") {
      throw Error("slu-glue: record '" + g.id + "' has label '" + g.label + "'");
    }
  }
  if (task != TaskTag::kSa && trim(g.text).empty()) {
    throw Error("slu-glue: record '" + g.id + "' lacks the paired text");
  }
  const auto [pos, neg] = binary_labels(task);
  ManifestRecord r;
  r.id = g.id;
  r.task = task;
  r.audio = g.audio;
  r.transcript = g.transcript;
  r.subtask = g.subtask;
  r.prompt = render_glue_prompt(g.subtask, g.text);
  if (task != TaskTag::kSa) r.text = g.text;
  r.label = positive ? pos : neg;
  return r;
}

GlueBuild build_slu_glue(const std::vector<GlueRecord>& records) {
  GlueBuild out;
  for (const auto& g : records) {
    try {
      out.records.push_back(convert_glue_record(g));
      ++out.counts[g.subtask];
    } catch (const Error& e) {
      out.rejected.push_back(g.id + ": " + e.what());
    }
  }
  return out;
}

std::vector<GlueRecord> read_glue_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("slu-glue: cannot open " + path.string());
  std::vector<GlueRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    GlueRecord g;
    g.id = j.at("id").get<std::string>();
    g.subtask = j.at("subtask").get<std::string>();
    g.audio = j.value("audio", "synthetic:" + g.id);
    g.transcript = j.value("transcript", std::string{});
    g.text = j.value("text", std::string{});
    const auto& label = j.at("label");
    g.label = label.is_string() ? label.get<std::string>() : label.dump();
    out.push_back(std::move(g));
  }
  return out;
}

// ---- Spoken-Alpaca ---------------------------------------------------------

bool looks_like_equation(std::string_view text) {
  static const std::regex pattern(
      R"((\\[A-Za-z]+\{)|(\$[^$\n]+\$)|([0-9A-Za-z)]\s*[=^]\s*[-0-9A-Za-z(])|)"
      R"(([0-9)]\s*[-+*/]\s*[0-9(]))");
  return std::regex_search(text.begin(), text.end(), pattern);
}

bool looks_like_table(std::string_view text) {
  std::size_t rows = 0;
  std::stringstream ss{std::string(text)};
  for (std::string line; std::getline(ss, line);) {
    const auto pipes = std::count(line.begin(), line.end(), '|');
    const auto tabs = std::count(line.begin(), line.end(), '\t');
    if (pipes >= 2 || tabs >= 2) ++rows;
  }
  return rows >= 2;
}

std::string alpaca_filter_reason(const AlpacaRecord& r, const AlpacaFilters& f) {
  const std::string& spoken = r.input.empty() ? r.instruction : r.input;
  if (metrics::split_words(spoken).size() > f.max_words ||
      metrics::split_words(r.instruction).size() > f.max_words) {
    return "length";
  }
  for (const std::string* field : {&r.instruction, &r.input, &r.output}) {
    if (f.drop_equations && looks_like_equation(*field)) return "equation";
  }
  for (const std::string* field : {&r.instruction, &r.input, &r.output}) {
    if (f.drop_tables && looks_like_table(*field)) return "table";
  }
  return {};
}

AlpacaBuild build_spoken_alpaca(const std::vector<AlpacaRecord>& records,
                                const AlpacaFilters& filters) {
  AlpacaBuild out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& a = records[i];
    if (auto reason = alpaca_filter_reason(a, filters); !reason.empty()) {
      out.filtered.emplace_back(i, std::move(reason));
      continue;
    }
    ManifestRecord r;
    r.id = "alpaca-" + std::to_string(i);
    r.audio = "synthetic:" + r.id;
    r.output = a.output;
    r.subtask = "Alpaca";
    if (!trim(a.input).empty()) {
      r.task = TaskTag::kSit;
      r.transcript = a.input;
      r.instruction = a.instruction;
      r.input = a.input;
      out.sit.push_back(std::move(r));
    } else {
      r.task = TaskTag::kSqit;
      r.transcript = a.instruction;
      r.instruction = a.instruction;
      out.sqit.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<AlpacaRecord> read_alpaca_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("alpaca: cannot open " + path.string());
  const auto j = nlohmann::json::parse(is);
  std::vector<AlpacaRecord> out;
  for (const auto& e : j) {
    out.push_back({e.at("instruction").get<std::string>(), e.value("input", std::string{}),
                   e.at("output").get<std::string>()});
  }
  return out;
}

// ---- Synthetic micro-corpus ------------------------------------------------

namespace {

struct MicroIntent {
  std::string name;
  std::vector<std::string> patterns;  // "{slot}" holes
};

const std::vector<MicroIntent>& micro_intents() {
  static const std::vector<MicroIntent> intents{
      {"set_alarm",
       {"set an alarm for {time}", "wake me up at {time} {date}", "alarm at {time} please"}},
      {"play_music", {"play some {artist}", "put on {artist} songs", "play {artist} {date}"}},
      {"check_weather",
       {"what is the weather in {place}", "will it rain {date}", "weather in {place} {date}"}},
  };
  return intents;
}

const std::map<std::string, std::vector<std::string>>& micro_fillers() {
  static const std::map<std::string, std::vector<std::string>> fillers{
      {"time", {"seven am", "six thirty", "noon"}},
      {"date", {"today", "tomorrow", "friday"}},
      {"artist", {"adele", "queen", "coldplay"}},
      {"place", {"paris", "london", "boston"}},
  };
  return fillers;
}

std::pair<std::string, EntitySet> realize(const std::string& pattern, Rng& rng) {
  std::string text;
  EntitySet slots;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] != '{') {
      text += pattern[i++];
      continue;
    }
    const auto close = pattern.find('}', i);
    const std::string slot = pattern.substr(i + 1, close - i - 1);
    const auto& options = micro_fillers().at(slot);
    const std::string value =
        options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
    slots.push_back({slot, value});
    text += value;
    i = close + 1;
  }
  return {text, slots};
}

}  // namespace

MicroCorpus generate_micro_corpus(const MicroSpec& spec, std::uint64_t seed) {
  const auto& all = micro_intents();
  if (spec.n_intents == 0 || spec.n_intents > all.size()) {
    throw Error("micro corpus: n_intents must be in [1, " + std::to_string(all.size()) + "]");
  }
  const std::size_t max_words = spec.frames / spec.frames_per_word;
  MicroCorpus corpus;
  std::set<std::string> slot_types;
  for (std::size_t k = 0; k < spec.n_intents; ++k) corpus.intents.push_back(all[k].name);
  Rng rng(seed);
  for (const auto& [task, count] : spec.counts) {
    if (task != TaskTag::kAsr && task != TaskTag::kIc && task != TaskTag::kSf) {
      throw Error("micro corpus: unsupported task " + std::string(task_name(task)));
    }
    std::set<std::string> seen;
    std::size_t made = 0, attempts = 0;
    while (made < count) {
      if (++attempts > 1000 * (count + 1)) {
        throw Error("micro corpus: cannot draw " + std::to_string(count) + " distinct " +
                    std::string(task_name(task)) + " utterances");
      }
      const auto& intent = all[std::uniform_int_distribution<std::size_t>(0, spec.n_intents - 1)(rng)];
      const auto& pattern =
          intent.patterns[std::uniform_int_distribution<std::size_t>(0, intent.patterns.size() - 1)(rng)];
      auto [text, slots] = realize(pattern, rng);
      if (metrics::split_words(text).size() > max_words || !seen.insert(text).second) continue;
      ManifestRecord r;
      r.id = lower(std::string(task_name(task))) + "-" + std::to_string(made);
      r.task = task;
      r.audio = "mel/" + r.id + ".mel";
      r.transcript = text;
      r.subtask = "micro";
      if (task != TaskTag::kAsr) r.intent = intent.name;
      if (task == TaskTag::kSf) {
        for (const auto& e : slots) slot_types.insert(e.type);
        r.slots = std::move(slots);
      }
      corpus.records.push_back(std::move(r));
      ++made;
    }
  }
  corpus.slot_types.assign(slot_types.begin(), slot_types.end());
  return corpus;
}

void write_micro_corpus(const MicroCorpus& corpus, const MicroSpec& spec,
                        const std::filesystem::path& dir, const std::string& manifest_name) {
  std::filesystem::create_directories(dir / "mel");
  for (const auto& r : corpus.records) {
    write_mel_file(dir / r.audio,
                   synthetic_mel(r.transcript, spec.n_mels, spec.frames, spec.frames_per_word));
  }
  write_manifest(dir / manifest_name, corpus.records);
}

}  // namespace whisma::datasets
