// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner: one PASS/FAIL line per criterion, exit 1 on any failure.
// Usage: whisma_acceptance [work_dir]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>

#include "corpora.hpp"
#include "generators.hpp"
#include "grad_cases.hpp"
#include "sweeps.hpp"

#include "whisma/app.hpp"
#include "whisma/audio.hpp"
#include "whisma/checkpoint.hpp"
#include "whisma/config.hpp"
#include "whisma/diagnostics.hpp"
#include "whisma/encoder.hpp"
#include "whisma/optim.hpp"

using namespace whisma;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// ---- 1 ---------------------------------------------------------------------

Outcome dimensional_contract() {
  EncoderConfig enc_cfg;
  const SpeechEncoder encoder(enc_cfg, 1);
  AlignerConfig al_cfg;
  al_cfg.d_enc = enc_cfg.d_model;
  const ModalityAligner<float> aligner(al_cfg, 2);
  constexpr int kRate = 16000;
  std::vector<float> samples(30 * kRate);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = 0.3f * static_cast<float>(std::sin(2.0 * std::numbers::pi * 440.0 * static_cast<double>(i) / kRate));
  }
  const auto mel = log_mel(samples, kRate, enc_cfg.mel_config());
  NoGradGuard g;
  const auto encoded = encoder.encode(mel);
  const auto aligned = aligner.align(encoded).embeddings;
  return {mel.frames == 3000 && encoded.dim(0) == 1500 && aligned.dim(0) == 375,
          std::to_string(mel.frames) + " -> " + std::to_string(encoded.dim(0)) + " -> " +
              std::to_string(aligned.dim(0))};
}

// ---- 2 ---------------------------------------------------------------------

Outcome gradient_suite() {
  auto cases = grad::primitives(17);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) cases.push_back(grad::aligner(seed));
  double worst = 0.0;
  std::string worst_name;
  for (auto& c : cases) {
    const double e = grad::check(c.loss, c.leaves);
    if (e >= worst) {
      worst = e;
      worst_name = c.name;
    }
  }
  bool library_ok = true;
  for (const auto& r : diagnostics::gradient_suite(1)) library_ok = library_ok && r.pass && r.value < 1e-4;
  return {worst < 1e-4 && library_ok, std::to_string(cases.size()) + " cases, max rel err " + fmt(worst) + " (" +
                                          worst_name + "), library suite " + (library_ok ? "ok" : "failed")};
}

// ---- 3 ---------------------------------------------------------------------

Outcome lora_identity() {
  DecoderConfig cfg;
  cfg.vocab_size = 300;
  cfg.d_model = 32;
  cfg.max_positions = 64;
  Decoder base(cfg, 1), adapted(cfg, 1);
  adapted.inject_lora(LoraConfig{}, 2);
  Rng rng(3);
  std::uniform_int_distribution<TokenId> tok(0, 299);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  std::size_t identical = 0;
  MultimodalSequence last;
  for (int i = 0; i < 100; ++i) {
    MultimodalSequence seq;
    seq.ids.resize(len(rng));
    for (auto& t : seq.ids) t = tok(rng);
    seq.loss_mask.assign(seq.ids.size(), true);
    NoGradGuard g;
    const auto a = base.forward(seq, Tensor{}), b = adapted.forward(seq, Tensor{});
    const bool same = a.size() == b.size() &&
                      std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
    identical += same ? 1 : 0;
    last = seq;
  }
  const auto base_hash = hash_params(adapted.base_parameters());
  std::vector<std::uint64_t> lora_before;
  for (const auto& p : adapted.lora_parameters()) lora_before.push_back(hash_params({p}));
  std::vector<TokenId> targets(last.ids.begin() + 1, last.ids.end());
  targets.push_back(0);
  std::vector<bool> mask(last.size(), true);
  mask.back() = false;
  AdamW opt(adapted.lora_parameters(), AdamWConfig{});
  ops::cross_entropy(adapted.forward(last, Tensor{}), std::span<const TokenId>(targets), mask).backward();
  opt.step();
  std::size_t moved = 0;
  const auto lora_after = adapted.lora_parameters();
  for (std::size_t i = 0; i < lora_after.size(); ++i) moved += hash_params({lora_after[i]}) != lora_before[i] ? 1 : 0;
  const bool base_same = hash_params(adapted.base_parameters()) == base_hash;
  return {identical == 100 && base_same && moved >= 1,
          std::to_string(identical) + "/100 bit-identical, base hash " + (base_same ? "unchanged" : "CHANGED") +
              ", " + std::to_string(moved) + " LoRA matrices moved"};
}

// ---- 4 ---------------------------------------------------------------------

bool hand_cases() {
  using namespace metrics;
  bool ok = wer("turn on the light", "turn on the light") == 0.0 &&
            wer("turn on the light", "turn off the light") == 0.25 && wer("a", "") == 1.0;
  ok = ok && intent_accuracy({"a", "b"}, {"a", "b"}) == 1.0 &&
       intent_accuracy({"a", "x", "c", std::nullopt}, {"a", "b", "c", "d"}) == 0.5 &&
       intent_accuracy({std::nullopt, std::nullopt}, {"a", "b"}) == 0.0;
  const std::vector<EntitySet> gold{{{"date", "today"}}, {{"place", "paris"}, {"time", "noon"}}};
  const auto same = slu_f1({gold[0], gold[1]}, gold);
  ok = ok && same.exact.f1() == 1.0 && same.word.f1() == 1.0 && same.chars.f1() == 1.0 && same.slu_f1() == 1.0;
  const auto partial = slu_f1({EntitySet{{"date", "tomorrow morning"}}}, {{{"date", "tomorrow"}}});
  ok = ok && partial.exact.f1() == 0.0 && std::abs(partial.word.tp - 2.0 / 3.0) < 1e-12;
  const auto empty = slu_f1({EntitySet{}}, {{{"date", "today"}}});
  ok = ok && empty.exact.f1() == 0.0 && empty.word.f1() == 0.0 && empty.chars.f1() == 0.0 && empty.slu_f1() == 0.0;
  const ParseRecord g{"set_alarm", EntitySet{{"time", "five am"}}};
  ok = ok && perfect_parsing({{"set_alarm", EntitySet{{"time", "six am"}}}}, {g}) == 0.0 &&
       perfect_parsing({{"set_alarm", EntitySet{{"time", "five am"}}}}, {g}) == 1.0;
  return ok;
}

Outcome metric_oracles() {
  const EntitySet pool{{"date", "tomorrow"}, {"date", "tomorrow morning"}, {"place", "new york"}, {"place", "york"}};
  const std::vector<std::pair<const char*, sweep::Result>> sweeps{
      {"wer", sweep::wer({"a", "b"}, 6)},
      {"entity_f1", sweep::entity_f1(pool, 6)},
      {"perfect_parsing", sweep::perfect_parsing(pool, 3)},
      {"binary", sweep::binary(6)}};
  bool ok = hand_cases();
  std::string detail = std::string("hand cases ") + (ok ? "ok" : "FAILED");
  for (const auto& [name, r] : sweeps) {
    ok = ok && r.ok();
    detail += std::string(", ") + name + " " + std::to_string(r.cases - r.mismatches) + "/" + std::to_string(r.cases);
    if (!r.ok()) detail += " [" + r.first + "]";
  }
  return {ok, detail};
}

// ---- 5 ---------------------------------------------------------------------

Outcome split_hygiene(const fs::path& work) {
  const auto path = work / "slurp_like.jsonl";
  corpora::write_slurp_like(path, 5000, 5);
  const auto records = datasets::read_slurp(path, "audio");
  const auto split = datasets::build_slurp_zeroshot(records);
  std::size_t leaked = 0, held_in_test = 0;
  for (const auto& r : split.train) {
    for (const auto& e : *r.slots) leaked += datasets::default_heldout_slots().count(e.type);
  }
  for (const auto& r : split.test) {
    for (const auto& e : *r.slots) held_in_test += datasets::default_heldout_slots().count(e.type);
  }
  return {leaked == 0 && !split.train.empty() && held_in_test > 0,
          std::to_string(split.train.size()) + " train / " + std::to_string(split.test.size()) +
              " test records, held-out mentions in train: " + std::to_string(leaked)};
}

// ---- 6 and 9 ---------------------------------------------------------------

const std::vector<Strategy> kStrategies{Strategy::kAlone, Strategy::kScot, Strategy::kMr};

struct MicroRun {
  app::TrainArtifacts train;
  std::map<Strategy, fs::path> predictions;
};

RunConfig micro_config(const fs::path& work) {
  auto config = load_config(WHISMA_SOURCE_DIR "/configs/micro.json");
  config.prompts_dir = WHISMA_SOURCE_DIR "/data/prompts";
  config.output_dir = (work / "micro-run").string();
  config.data.train_manifest = (work / "micro-data" / "micro.jsonl").string();
  config.data.test_manifest = config.data.train_manifest;
  return config;
}

MicroRun train_and_infer(const RunConfig& config) {
  MicroRun run;
  run.train = app::run_train(config);
  for (const auto s : kStrategies) {
    app::InferOptions o;
    o.model_dir = config.output_dir;
    o.strategy = s;
    run.predictions[s] = app::run_infer(o).predictions;
  }
  return run;
}

EntitySet normalized(const EntitySet& s) {
  EntitySet out;
  for (const auto& e : s) out.push_back({metrics::normalize(e.type), metrics::normalize(e.value)});
  std::sort(out.begin(), out.end());
  return out;
}

struct MicroScore {
  std::size_t ic_ok = 0, ic_n = 0, sf_ok = 0, sf_n = 0;
};

MicroScore score(const fs::path& predictions, const std::vector<ManifestRecord>& gold) {
  std::map<std::string, const ManifestRecord*> by_id;
  for (const auto& g : gold) by_id[g.id] = &g;
  MicroScore s;
  for (const auto& p : read_predictions(predictions)) {
    const auto& g = *by_id.at(p.id);
    if (g.task == TaskTag::kIc) {
      ++s.ic_n;
      s.ic_ok += p.fields.intent && metrics::normalize(*p.fields.intent) == metrics::normalize(*g.intent) ? 1 : 0;
    } else if (g.task == TaskTag::kSf) {
      ++s.sf_n;
      s.sf_ok += p.fields.entities && oracle::same_multiset(normalized(*p.fields.entities), normalized(*g.slots)) ? 1 : 0;
    }
  }
  return s;
}

Outcome toy_overfit(const fs::path& work, MicroRun& run) {
  app::PrepareOptions prep;
  prep.source = "micro";
  prep.output_dir = work / "micro-data";
  prep.seed = 7;
  const auto config = micro_config(work);
  prep.n_mels = config.model.encoder.n_mels;
  app::prepare_data(prep);
  run = train_and_infer(config);
  const auto gold = read_manifest(config.data.test_manifest);
  bool ok = run.train.final_epoch_loss < 0.05;
  std::string detail = "loss " + fmt(run.train.final_epoch_loss);
  for (const auto s : kStrategies) {
    const auto sc = score(run.predictions[s], gold);
    ok = ok && sc.ic_n == 10 && sc.sf_n == 10 && sc.ic_ok >= 9 && sc.sf_ok >= 8;
    detail += std::string(", ") + std::string(strategy_name(s)) + " IC " + std::to_string(sc.ic_ok) + "/" +
              std::to_string(sc.ic_n) + " SF " + std::to_string(sc.sf_ok) + "/" + std::to_string(sc.sf_n);
  }
  return {ok, detail};
}

Outcome determinism(const fs::path& work, const MicroRun& first) {
  const auto config = micro_config(work);
  const fs::path keep = work / "micro-run-first";
  fs::remove_all(keep);
  fs::rename(config.output_dir, keep);
  const auto second = train_and_infer(config);
  std::vector<std::string> differing;
  auto compare = [&](const fs::path& a, const fs::path& b) {
    if (read_bytes(a).empty() || read_bytes(a) != read_bytes(b)) differing.push_back(b.filename().string());
  };
  compare(keep / "model.ckpt", second.train.dir / "model.ckpt");
  for (const auto s : kStrategies) compare(keep / first.predictions.at(s).filename(), second.predictions.at(s));
  return {differing.empty(), differing.empty() ? "checkpoint and 3 prediction files byte-identical"
                                               : "differs: " + differing.front()};
}

// ---- 7 ---------------------------------------------------------------------

/// Counts calls while delegating to a real model.
class Counting : public TextGenerator {
 public:
  explicit Counting(TextGenerator& inner) : inner_(inner) {}
  Generation generate(const Dialogue& d, const Tensor& speech, std::size_t max_new) override {
    ++calls;
    return inner_.generate(d, speech, max_new);
  }
  std::size_t calls = 0;

 private:
  TextGenerator& inner_;
};

Outcome strategy_contracts() {
  const PromptBanks banks;
  const std::vector<std::string> inv{"greet", "bye"};
  auto spec = [&](Strategy s) {
    TaskSpec t;
    t.task = TaskTag::kIc;
    t.strategy = s;
    t.inventory = inv;
    return t;
  };
  const Tensor speech = constant_tensor<float>({4, 8}, 0.5f, false);
  std::map<Strategy, std::size_t> scripted_calls, model_calls;
  bool verbatim = false;
  const std::string transcript = "please book a table for two at seven";
  for (const auto s : kStrategies) {
    gen::Scripted g({transcript, "greet"});
    Rng rng(1);
    const auto r = infer(spec(s), speech, g, banks, MarkerStrings{}, rng);
    scripted_calls[s] = g.calls();
    if (s == Strategy::kMr) {
      verbatim = r.rounds.size() == 2 && r.rounds[1].prompt.find(transcript) != std::string::npos &&
                 g.dialogues[1][1].text == transcript;
    }
  }

  ModelConfig mc;
  mc.encoder.n_mels = 16;
  mc.encoder.d_model = 32;
  mc.encoder.clip_seconds = 0.96;
  mc.aligner.bottleneck_dim = 8;
  mc.decoder.d_model = 32;
  mc.decoder.max_positions = 512;
  const WhismaModel model(mc, Tokenizer::build({"greet bye hello"}));
  MelSpectrogram mel;
  mel.n_mels = 16;
  mel.frames = 96;
  mel.values.assign(16 * 96, 0.1f);
  const Tensor real_speech = model.align(model.encode(mel));
  ModelGenerator mg(model);
  for (const auto s : kStrategies) {
    Counting c(mg);
    Rng rng(2);
    InferenceOptions small{8, 8};
    infer(spec(s), real_speech, c, banks, MarkerStrings{}, rng, small);
    model_calls[s] = c.calls;
  }
  const bool counts_ok = scripted_calls[Strategy::kAlone] == 1 && scripted_calls[Strategy::kScot] == 1 &&
                         scripted_calls[Strategy::kMr] == 2 && model_calls == scripted_calls;
  return {counts_ok && verbatim, "calls alone/scot/mr = " + std::to_string(model_calls[Strategy::kAlone]) + "/" +
                                     std::to_string(model_calls[Strategy::kScot]) + "/" +
                                     std::to_string(model_calls[Strategy::kMr]) + ", round-2 transcript " +
                                     (verbatim ? "verbatim" : "MISSING")};
}

// ---- 8 ---------------------------------------------------------------------

Outcome prompt_statistics() {
  Rng rng(8);
  std::vector<std::string> inventory;
  for (int i = 0; i < 30; ++i) inventory.push_back("label_" + std::to_string(i));
  std::size_t with_gold = 0;
  std::uniform_int_distribution<std::size_t> pick(0, inventory.size() - 1);
  for (int i = 0; i < 10000; ++i) {
    const std::string gold = inventory[pick(rng)];
    const auto s = sample_candidate_labels(inventory, {gold}, {}, rng);
    with_gold += std::find(s.begin(), s.end(), gold) != s.end() ? 1 : 0;
  }
  bool all_templates = true;
  std::string coverage;
  for (const auto task : {PromptTask::kAsr, PromptTask::kIc, PromptTask::kSf}) {
    const auto bank = PromptBank::builtin(task);
    std::set<std::string> seen;
    for (int i = 0; i < 1000; ++i) seen.insert(build_task_prompt(bank, {"x"}, rng));
    all_templates = all_templates && seen.size() == kTemplatesPerTask;
    coverage += " " + std::string(prompt_task_name(task)) + " " + std::to_string(seen.size()) + "/10";
  }
  return {with_gold == 10000 && all_templates, "gold present " + std::to_string(with_gold) + "/10000, templates" + coverage};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "whisma_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  omp_set_num_threads(1);

  bool all = true;
  auto run = [&](int n, const char* name, double limit, const std::function<Outcome()>& f) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double t = seconds_since(start);
    const bool in_time = t < limit;
    const bool pass = o.pass && in_time;
    all = all && pass;
    std::printf("AC%d %s %s: %s (%.2fs, limit %.0fs%s)\n", n, pass ? "PASS" : "FAIL", name, o.detail.c_str(), t,
                limit, in_time ? "" : ", EXCEEDED");
    std::fflush(stdout);
    return t;
  };

  MicroRun first;
  run(1, "dimensional contract", 1.0, dimensional_contract);
  run(2, "gradient suite", 30.0, gradient_suite);
  run(3, "LoRA identity", 10.0, lora_identity);
  run(4, "metric oracles", 60.0, metric_oracles);
  run(5, "zero-shot split hygiene", 5.0, [&] { return split_hygiene(work); });
  const double t6 = run(6, "toy overfit end-to-end", 600.0, [&] { return toy_overfit(work, first); });
  run(7, "strategy contracts", 10.0, strategy_contracts);
  run(8, "prompt statistics", 5.0, prompt_statistics);
  run(9, "determinism", 2.0 * t6, [&] { return determinism(work, first); });
  return all ? 0 : 1;
}
