// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

#include "json.hpp"

#include "whisma/checkpoint.hpp"
#include "whisma/init.hpp"
#include "whisma/metrics.hpp"

namespace whisma {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr float kSilence = -1.0f;

void require(bool ok, const ManifestRecord& r, const char* field) {
  if (!ok) {
    throw Error("manifest record '" + r.id + "' (" + std::string(task_name(r.task)) +
                ") lacks required field '" + field + "'");
  }
}

template <typename T>
void put(ordered_json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

template <typename T>
void get(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

}  // namespace

void validate_record(const ManifestRecord& r) {
  if (r.id.empty()) throw Error("manifest record without id");
  if (r.audio.empty()) require(false, r, "audio");
  switch (r.task) {
    case TaskTag::kAsr:
      require(!r.transcript.empty(), r, "transcript");
      break;
    case TaskTag::kIc:
      require(r.intent.has_value(), r, "intent");
      break;
    case TaskTag::kSf:
      require(r.slots.has_value(), r, "slots");
      break;
    case TaskTag::kSqa:
      require(r.question.has_value(), r, "question");
      require(r.answer.has_value(), r, "answer");
      break;
    case TaskTag::kSit:
      require(r.instruction.has_value(), r, "instruction");
      require(r.output.has_value(), r, "output");
      break;
    case TaskTag::kSqit:
      require(r.output.has_value(), r, "output");
      break;
    case TaskTag::kSa:
    case TaskTag::kSer:
    case TaskTag::kSter: {
      require(r.prompt.has_value(), r, "prompt");
      require(r.label.has_value(), r, "label");
      const auto [pos, neg] = binary_labels(r.task);
      if (*r.label != pos && *r.label != neg) {
        throw Error("manifest record '" + r.id + "': label '" + *r.label + "' is not " + pos +
                    "/" + neg);
      }
      break;
    }
  }
}

std::string record_to_json(const ManifestRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["task"] = std::string(task_name(r.task));
  j["audio"] = r.audio;
  j["transcript"] = r.transcript;
  put(j, "subtask", r.subtask);
  put(j, "intent", r.intent);
  if (r.slots) {
    ordered_json slots = ordered_json::array();
    for (const auto& e : *r.slots) slots.push_back({{"type", e.type}, {"value", e.value}});
    j["slots"] = std::move(slots);
  }
  put(j, "question", r.question);
  put(j, "answer", r.answer);
  put(j, "instruction", r.instruction);
  put(j, "input", r.input);
  put(j, "output", r.output);
  put(j, "prompt", r.prompt);
  put(j, "text", r.text);
  put(j, "label", r.label);
  return j.dump();
}

ManifestRecord record_from_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  ManifestRecord r;
  r.id = j.at("id").get<std::string>();
  r.task = parse_task(j.at("task").get<std::string>());
  r.audio = j.value("audio", std::string{});
  r.transcript = j.value("transcript", std::string{});
  get(j, "subtask", r.subtask);
  get(j, "intent", r.intent);
  if (auto it = j.find("slots"); it != j.end() && !it->is_null()) {
    EntitySet slots;
    for (const auto& e : *it) {
      slots.push_back({e.at("type").get<std::string>(), e.at("value").get<std::string>()});
    }
    r.slots = std::move(slots);
  }
  get(j, "question", r.question);
  get(j, "answer", r.answer);
  get(j, "instruction", r.instruction);
  get(j, "input", r.input);
  get(j, "output", r.output);
  get(j, "prompt", r.prompt);
  get(j, "text", r.text);
  get(j, "label", r.label);
  return r;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("manifest: cannot open " + path.string());
  std::vector<ManifestRecord> records;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto r = record_from_json(line);
      validate_record(r);
      if (!ids.insert(r.id).second) throw Error("duplicate id '" + r.id + "'");
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("manifest: cannot write " + path.string());
  for (const auto& r : records) os << record_to_json(r) << '\n';
}

std::pair<std::string, std::string> binary_labels(TaskTag task) {
  if (task == TaskTag::kSa) return {"positive", "negative"};
  if (task == TaskTag::kSer || task == TaskTag::kSter) return {"yes", "no"};
  throw Error("binary_labels: " + std::string(task_name(task)) + " is not a binary task");
}

std::vector<std::string> collect_inventory(const std::vector<ManifestRecord>& records,
                                           TaskTag task) {
  std::set<std::string> labels;
  for (const auto& r : records) {
    if (task == TaskTag::kIc && r.intent) labels.insert(*r.intent);
    if (task == TaskTag::kSf && r.slots) {
      for (const auto& e : *r.slots) labels.insert(e.type);
    }
  }
  if (task != TaskTag::kIc && task != TaskTag::kSf) {
    throw Error("collect_inventory: no label inventory for " + std::string(task_name(task)));
  }
  return {labels.begin(), labels.end()};
}

MelSpectrogram synthetic_mel(const std::string& transcript, std::size_t n_mels,
                             std::size_t frames, std::size_t frames_per_word) {
  MelSpectrogram mel;
  mel.n_mels = n_mels;
  mel.frames = frames;
  mel.values.assign(n_mels * frames, kSilence);
  const auto words = metrics::split_words(transcript);
  std::size_t start = 0;
  for (const auto& word : words) {
    if (start >= frames) break;
    Rng rng(fnv1a64(word));
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (std::size_t m = 0; m < n_mels; ++m) {
      for (std::size_t f = 0; f < frames_per_word; ++f) {
        const float v = dist(rng);
        if (start + f < frames) mel.values[m * frames + start + f] = v;
      }
    }
    start += frames_per_word;
  }
  return mel;
}

MelSpectrogram load_features(const ManifestRecord& record, const std::filesystem::path& base_dir,
                             const FeatureOptions& options) {
  constexpr std::string_view kSynthetic = "synthetic:";
  if (record.audio.rfind(kSynthetic, 0) == 0) {
    return synthetic_mel(record.transcript, options.n_mels, options.frames,
                         options.frames_per_word);
  }
  std::filesystem::path path(record.audio);
  if (path.is_relative()) path = base_dir / path;
  MelSpectrogram mel;
  if (path.extension() == ".wav") {
    const auto wave = read_wav(path);
    MelConfig cfg = options.mel;
    cfg.n_mels = options.n_mels;
    mel = log_mel(wave.samples, wave.sample_rate, cfg);
  } else {
    mel = read_mel_file(path);
  }
  if (mel.n_mels != options.n_mels) {
    throw ShapeError("features for '" + record.id + "' have " + std::to_string(mel.n_mels) +
                     " mel bins, expected " + std::to_string(options.n_mels));
  }
  return mel.frames == options.frames ? mel
                                      : fit_frames(mel, options.frames, options.mel.log_floor);
}

}  // namespace whisma
