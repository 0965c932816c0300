// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/app.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "whisma/checkpoint.hpp"
#include "whisma/datasets.hpp"
#include "whisma/metrics.hpp"

namespace whisma::app {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
  if (!os) throw Error("write failed for " + path.string());
}

std::filesystem::path resolve_base(const std::string& base_dir,
                                   const std::filesystem::path& manifest) {
  if (!base_dir.empty()) return base_dir;
  return manifest.has_parent_path() ? manifest.parent_path() : std::filesystem::path(".");
}

PromptBanks load_banks(const RunConfig& config) {
  return config.prompts_dir.empty() ? PromptBanks{} : PromptBanks::load_dir(config.prompts_dir);
}

std::string write_manifest_file(const std::filesystem::path& dir, const std::string& name,
                                const std::vector<ManifestRecord>& records,
                                PrepareReport& report) {
  write_manifest(dir / name, records);
  report.manifests[name] = records.size();
  return name;
}

const std::vector<std::string>& inventory_for(TaskTag task, const Inventories& inv) {
  static const std::vector<std::string> kNone;
  if (task == TaskTag::kIc) return inv.intents;
  if (task == TaskTag::kSf) return inv.slot_types;
  return kNone;
}

// Records of a task in gold order, paired with the prediction of the same id.
template <typename Pred>
std::vector<std::pair<const ManifestRecord*, const PredictionRecord*>> align_by_id(
    const std::vector<ManifestRecord>& gold, const std::vector<PredictionRecord>& preds,
    Pred keep) {
  std::unordered_map<std::string, const PredictionRecord*> by_id;
  for (const auto& p : preds) by_id.emplace(p.id, &p);
  std::vector<std::pair<const ManifestRecord*, const PredictionRecord*>> out;
  for (const auto& g : gold) {
    if (!keep(g)) continue;
    auto it = by_id.find(g.id);
    out.emplace_back(&g, it == by_id.end() ? nullptr : it->second);
  }
  return out;
}

std::string common_hash(const std::vector<PredictionRecord>& preds) {
  std::set<std::string> hashes;
  for (const auto& p : preds) hashes.insert(p.config_hash);
  if (hashes.size() > 1) throw Error("predictions mix " + std::to_string(hashes.size()) + " config hashes");
  return hashes.empty() ? std::string() : *hashes.begin();
}

ordered_json f1_json(const metrics::F1Score& s) {
  return {{"precision", s.precision()}, {"recall", s.recall()}, {"f1", s.f1()},
          {"tp", s.tp},                 {"n_pred", s.n_pred},   {"n_gold", s.n_gold}};
}

std::size_t count_missing(
    const std::vector<std::pair<const ManifestRecord*, const PredictionRecord*>>& pairs) {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.second == nullptr; }));
}

}  // namespace

void log_event(std::string_view event,
               const std::vector<std::pair<std::string, std::string>>& fields) {
  std::ostringstream os;
  os << "whisma event=" << event;
  for (const auto& [k, v] : fields) {
    const bool quote = v.find_first_of(" \t\"=") != std::string::npos || v.empty();
    os << ' ' << k << '=';
    if (quote) {
      os << nlohmann::json(v).dump();
    } else {
      os << v;
    }
  }
  std::cerr << os.str() << '\n';
}

// ---- prepare-data ------------------------------------------------------------

PrepareReport prepare_data(const PrepareOptions& o) {
  PrepareReport report;
  if (o.output_dir.empty()) throw Error("prepare-data: no output directory");
  std::filesystem::create_directories(o.output_dir);
  const auto need_input = [&] {
    if (o.input.empty()) throw Error("prepare-data: source '" + o.source + "' needs an input file");
  };

  if (o.source == "micro") {
    datasets::MicroSpec spec;
    spec.n_mels = o.n_mels;
    spec.frames = o.frames;
    const auto corpus = datasets::generate_micro_corpus(spec, o.seed);
    datasets::write_micro_corpus(corpus, spec, o.output_dir, "micro.jsonl");
    report.manifests["micro.jsonl"] = corpus.records.size();
  } else if (o.source == "slurp") {
    need_input();
    const auto records = datasets::read_slurp(o.input, o.audio_dir, o.first_recording_only);
    const auto split = datasets::build_slurp_zeroshot(records);
    write_manifest_file(o.output_dir, "slurp_train.jsonl", split.train, report);
    write_manifest_file(o.output_dir, "slurp_test.jsonl", split.test, report);
    constexpr std::size_t kReportedTest = 18000;
    if (split.test.size() != kReportedTest) {
      report.notes.push_back("zero-shot test set has " + std::to_string(split.test.size()) +
                             " utterances; the published split reports about " +
                             std::to_string(kReportedTest));
    }
  } else if (o.source == "fsc") {
    need_input();
    const auto table = o.fsc_table.empty() ? datasets::fsc_table() : datasets::load_fsc_table(o.fsc_table);
    write_manifest_file(o.output_dir, "fsc.jsonl", datasets::read_fsc(o.input, o.audio_dir, table),
                        report);
  } else if (o.source == "glue") {
    need_input();
    auto glue = datasets::read_glue_jsonl(o.input);
    if (!o.audio_dir.empty()) {
      for (auto& g : glue) g.audio = (std::filesystem::path(o.audio_dir) / g.audio).generic_string();
    }
    const auto built = datasets::build_slu_glue(glue);
    write_manifest_file(o.output_dir, "slu_glue.jsonl", built.records, report);
    for (const auto& [subtask, expected] : datasets::glue_expected_counts()) {
      const auto it = built.counts.find(subtask);
      const std::size_t got = it == built.counts.end() ? 0 : it->second;
      if (got != expected) {
        report.notes.push_back(subtask + ": " + std::to_string(got) + " samples, expected " +
                               std::to_string(expected));
      }
    }
    for (const auto& r : built.rejected) report.notes.push_back("rejected " + r);
  } else if (o.source == "alpaca") {
    need_input();
    const auto built = datasets::build_spoken_alpaca(datasets::read_alpaca_json(o.input));
    write_manifest_file(o.output_dir, "alpaca_sit.jsonl", built.sit, report);
    write_manifest_file(o.output_dir, "alpaca_sqit.jsonl", built.sqit, report);
    std::map<std::string, std::size_t> reasons;
    for (const auto& [index, reason] : built.filtered) ++reasons[reason];
    for (const auto& [reason, n] : reasons) {
      report.notes.push_back("filtered " + std::to_string(n) + " records: " + reason);
    }
  } else {
    throw Error("prepare-data: unknown source '" + o.source + "'");
  }
  for (const auto& [name, n] : report.manifests) {
    log_event("prepare.manifest", {{"file", (o.output_dir / name).string()}, {"records", std::to_string(n)}});
  }
  for (const auto& note : report.notes) log_event("prepare.note", {{"detail", note}});
  return report;
}

// ---- train -----------------------------------------------------------------

TrainArtifacts run_train(const RunConfig& config) {
  config.validate();
  if (config.data.train_manifest.empty()) throw ConfigError("data.train_manifest", "is required for train");
  const auto start = std::chrono::steady_clock::now();
  const std::filesystem::path manifest = config.data.train_manifest;
  const auto records = read_manifest(manifest);
  if (records.empty()) throw Error("train: manifest " + manifest.string() + " is empty");
  const auto base_dir = resolve_base(config.data.base_dir, manifest);
  const auto banks = load_banks(config);
  const std::string hash = config_hash(config);
  const std::string config_json = config_to_json(config);

  Tokenizer tokenizer = build_vocabulary(records, banks);
  WhismaModel model(config.model, tokenizer);
  log_event("train.start", {{"config_hash", hash},
                            {"records", std::to_string(records.size())},
                            {"vocab", std::to_string(tokenizer.vocab_size())},
                            {"speech_len", std::to_string(model.speech_len())}});

  double window_loss = 0.0;
  std::size_t window_tokens = 0;
  const auto on_step = [&](const LossRow& row) {
    window_loss += row.loss * static_cast<double>(row.tokens);
    window_tokens += row.tokens;
    if (row.step % 100 == 0) {
      log_event("train.progress", {{"step", std::to_string(row.step)},
                                   {"loss", fmt(window_loss / std::max<std::size_t>(1, window_tokens))}});
      window_loss = 0.0;
      window_tokens = 0;
    }
  };
  const TrainResult result = train(model, records, base_dir, config.features(), config.train, banks, on_step);

  const std::filesystem::path dir = config.output_dir;
  std::filesystem::create_directories(dir);
  model.save(dir / "model.ckpt", fnv1a64(config_json), config_json);

  auto vocab = ordered_json::parse(tokenizer.to_json());
  ordered_json vocab_out;
  vocab_out["config_hash"] = hash;
  for (auto& [k, v] : vocab.items()) vocab_out[k] = v;
  write_text(dir / "vocab.json", vocab_out.dump() + "\n");

  write_loss_csv(dir / "loss.csv", result.trace, hash);
  write_text(dir / "config.json", config_json + "\n");

  ordered_json report;
  report["config_hash"] = hash;
  report["records"] = records.size();
  report["steps"] = result.steps;
  report["final_epoch_loss"] = result.final_epoch_loss;
  report["pretrain_final_loss"] = result.pretrain_final_loss;
  report["frozen_hash_before"] = hex64(result.frozen_hash_before);
  report["frozen_hash_after"] = hex64(result.frozen_hash_after);
  report["trainable_hash"] = hex64(hash_params(model.trainable_parameters()));
  write_text(dir / "train_report.json", report.dump(2) + "\n");

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log_event("train.done", {{"steps", std::to_string(result.steps)},
                           {"final_epoch_loss", fmt(result.final_epoch_loss)},
                           {"seconds", fmt(seconds)},
                           {"dir", dir.string()}});
  return {dir, hash, result.steps, result.final_epoch_loss};
}

// ---- infer -----------------------------------------------------------------

InferArtifacts run_infer(const InferOptions& o) {
  if (o.model_dir.empty()) throw Error("infer: no model directory");
  const RunConfig config = load_config(o.model_dir / "config.json");
  const std::string hash = config_hash(config);
  const std::string config_json = config_to_json(config);

  const auto ck = Checkpoint::load(o.model_dir / "model.ckpt");
  if (ck.config_hash != fnv1a64(config_json)) {
    throw Error("infer: checkpoint was written under a different config than " +
                (o.model_dir / "config.json").string());
  }
  std::ifstream vs(o.model_dir / "vocab.json");
  if (!vs) throw Error("infer: cannot open " + (o.model_dir / "vocab.json").string());
  auto vocab = nlohmann::json::parse(vs);
  if (vocab.value("config_hash", std::string{}) != hash) {
    throw Error("infer: vocab.json was written under a different config");
  }
  vocab.erase("config_hash");
  const Tokenizer tokenizer = Tokenizer::from_json(vocab.dump());
  WhismaModel model(config.model, tokenizer);
  {
    auto params = model.all_parameters();
    ck.restore(params);
  }

  const std::filesystem::path manifest =
      o.manifest.empty() ? std::filesystem::path(config.data.test_manifest) : o.manifest;
  if (manifest.empty()) throw ConfigError("data.test_manifest", "no manifest given for infer");
  const auto records = read_manifest(manifest);
  const auto base_dir = o.base_dir.empty() ? resolve_base(config.data.base_dir, manifest) : o.base_dir;
  const Strategy strategy = o.strategy.value_or(config.inference.strategy);
  const auto banks = load_banks(config);
  const auto inventories = collect_inventories(records);
  const auto features = config.features();

  const std::filesystem::path out =
      o.output.empty() ? o.model_dir / ("predictions-" + std::string(strategy_name(strategy)) + ".jsonl")
                       : o.output;
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  std::ofstream os(out, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("infer: cannot write " + out.string());

  log_event("infer.start", {{"config_hash", hash},
                            {"strategy", std::string(strategy_name(strategy))},
                            {"records", std::to_string(records.size())}});
  ModelGenerator generator(model);
  InferArtifacts artifacts{out, hash, 0, 0};
  for (const auto& record : records) {
    const TaskSpec spec = make_task_spec(record, inventory_for(record.task, inventories), strategy);
    Tensor speech;
    {
      NoGradGuard no_grad;
      speech = model.align(model.encode(load_features(record, base_dir, features)));
    }
    Rng rng(mix_seed(config.seed, fnv1a64(record.id)));
    const SluResult result =
        infer(spec, speech, generator, banks, tokenizer.markers(), rng, config.inference.options);
    os << prediction_to_json(record.id, result, hash) << '\n';
    ++artifacts.records;
    artifacts.generations += result.rounds.size();
  }
  if (!os) throw Error("infer: write failed for " + out.string());
  log_event("infer.done", {{"predictions", out.string()},
                           {"records", std::to_string(artifacts.records)},
                           {"generations", std::to_string(artifacts.generations)}});
  return artifacts;
}

// ---- evaluate --------------------------------------------------------------

EvalTask parse_eval_task(std::string_view name) {
  if (name == "asr") return EvalTask::kAsr;
  if (name == "ic") return EvalTask::kIc;
  if (name == "sf") return EvalTask::kSf;
  if (name == "pp") return EvalTask::kPp;
  if (name == "binary") return EvalTask::kBinary;
  throw Error("unknown evaluation task '" + std::string(name) + "'");
}

std::string join_stem(const std::string& id) {
  for (const std::string_view suffix : {"-ic", "-sf"}) {
    if (id.size() > suffix.size() && id.compare(id.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return id.substr(0, id.size() - suffix.size());
    }
  }
  return id;
}

EvalReport evaluate(EvalTask task, const std::filesystem::path& pred_path,
                    const std::filesystem::path& gold_path) {
  const auto preds = read_predictions(pred_path);
  const auto gold = read_manifest(gold_path);
  ordered_json j;
  std::ostringstream table;
  j["config_hash"] = common_hash(preds);
  j["predictions"] = pred_path.string();
  j["gold"] = gold_path.string();

  const auto of_task = [](TaskTag t) { return [t](const ManifestRecord& r) { return r.task == t; }; };
  switch (task) {
    case EvalTask::kAsr: {
      const auto pairs = align_by_id(gold, preds, of_task(TaskTag::kAsr));
      std::vector<std::string> refs, hyps;
      for (const auto& [g, p] : pairs) {
        refs.push_back(metrics::normalize(g->transcript));
        hyps.push_back(p && p->fields.transcript ? metrics::normalize(*p->fields.transcript) : "");
      }
      const auto w = metrics::corpus_wer(refs, hyps);
      j["task"] = "asr";
      j["n"] = pairs.size();
      j["missing"] = count_missing(pairs);
      j["wer"] = w.rate;
      j["errors"] = w.errors;
      j["ref_words"] = w.ref_words;
      table << "ASR  n=" << pairs.size() << "  WER " << fmt(100.0 * w.rate) << "%\n";
      break;
    }
    case EvalTask::kIc: {
      const auto pairs = align_by_id(gold, preds, of_task(TaskTag::kIc));
      std::vector<std::optional<std::string>> p_int;
      std::vector<std::string> g_int;
      for (const auto& [g, p] : pairs) {
        g_int.push_back(metrics::normalize(*g->intent));
        p_int.push_back(p && p->fields.intent ? std::optional(metrics::normalize(*p->fields.intent))
                                              : std::nullopt);
      }
      const double acc = metrics::intent_accuracy(p_int, g_int);
      j["task"] = "ic";
      j["n"] = pairs.size();
      j["missing"] = count_missing(pairs);
      j["accuracy"] = acc;
      table << "IC   n=" << pairs.size() << "  accuracy " << fmt(100.0 * acc) << "%\n";
      break;
    }
    case EvalTask::kSf: {
      const auto pairs = align_by_id(gold, preds, of_task(TaskTag::kSf));
      std::vector<std::optional<EntitySet>> p_ent;
      std::vector<EntitySet> g_ent;
      for (const auto& [g, p] : pairs) {
        g_ent.push_back(*g->slots);
        p_ent.push_back(p ? p->fields.entities : std::nullopt);
      }
      const auto r = metrics::slu_f1(p_ent, g_ent);
      j["task"] = "sf";
      j["n"] = pairs.size();
      j["missing"] = count_missing(pairs);
      j["exact"] = f1_json(r.exact);
      j["word"] = f1_json(r.word);
      j["char"] = f1_json(r.chars);
      j["slu_f1"] = r.slu_f1();
      table << "SF   n=" << pairs.size() << "\n"
            << "  exact F1   " << fmt(100.0 * r.exact.f1()) << "\n"
            << "  word F1    " << fmt(100.0 * r.word.f1()) << "\n"
            << "  char F1    " << fmt(100.0 * r.chars.f1()) << "\n"
            << "  SLU-F1     " << fmt(100.0 * r.slu_f1()) << "\n";
      break;
    }
    case EvalTask::kPp: {
      std::map<std::string, metrics::ParseRecord> g_by, p_by;
      for (const auto& g : gold) {
        auto& rec = g_by[join_stem(g.id)];
        if (g.intent) rec.intent = g.intent;
        if (g.slots) rec.entities = g.slots;
      }
      for (const auto& p : preds) {
        auto& rec = p_by[join_stem(p.id)];
        if (p.task == TaskTag::kIc && p.fields.intent) rec.intent = metrics::normalize(*p.fields.intent);
        if (p.task == TaskTag::kSf && p.fields.entities) rec.entities = p.fields.entities;
      }
      std::vector<metrics::ParseRecord> gv, pv;
      std::size_t incomplete = 0;
      for (auto& [stem, g] : g_by) {
        if (!g.intent || !g.entities) {
          ++incomplete;
          continue;
        }
        g.intent = metrics::normalize(*g.intent);
        gv.push_back(g);
        const auto it = p_by.find(stem);
        pv.push_back(it == p_by.end() ? metrics::ParseRecord{} : it->second);
      }
      if (gv.empty()) throw Error("evaluate pp: no gold utterance carries both intent and slots");
      const double pp = metrics::perfect_parsing(pv, gv);
      j["task"] = "pp";
      j["n"] = gv.size();
      j["skipped_incomplete_gold"] = incomplete;
      j["perfect_parsing"] = pp;
      table << "PP   n=" << gv.size() << "  perfect parsing " << fmt(100.0 * pp) << "%\n";
      break;
    }
    case EvalTask::kBinary: {
      const auto pairs = align_by_id(gold, preds, [](const ManifestRecord& r) { return is_binary_task(r.task); });
      std::map<std::string, std::pair<std::vector<std::optional<std::string>>, std::vector<std::string>>> groups;
      std::map<std::string, TaskTag> group_task;
      std::size_t correct = 0;
      for (const auto& [g, p] : pairs) {
        const std::string key = g->subtask.value_or(std::string(task_name(g->task)));
        auto& [pv, gv] = groups[key];
        group_task[key] = g->task;
        pv.push_back(p ? p->fields.binary : std::nullopt);
        gv.push_back(*g->label);
        correct += p && p->fields.binary == g->label ? 1 : 0;
      }
      ordered_json by = ordered_json::object();
      double sum = 0.0;
      table << "Binary  n=" << pairs.size() << "\n";
      for (const auto& [key, pg] : groups) {
        const auto [pos, neg] = binary_labels(group_task[key]);
        const double acc = metrics::binary_accuracy(pg.first, pg.second, pos, neg);
        by[key] = {{"n", pg.second.size()}, {"accuracy", acc}};
        sum += acc;
        table << "  " << key << "  " << fmt(100.0 * acc) << "%\n";
      }
      const double average = groups.empty() ? 0.0 : sum / static_cast<double>(groups.size());
      j["task"] = "binary";
      j["n"] = pairs.size();
      j["missing"] = count_missing(pairs);
      j["by_subtask"] = by;
      j["average"] = average;
      j["accuracy"] = pairs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pairs.size());
      table << "  average  " << fmt(100.0 * average) << "%\n";
      break;
    }
  }
  if (j.value("n", std::size_t{0}) == 0) {
    throw Error("evaluate: gold manifest " + gold_path.string() + " has no records for this task");
  }
  return {j.dump(2) + "\n", table.str()};
}

}  // namespace whisma::app
