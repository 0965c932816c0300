// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"

#include "whisma/datasets.hpp"
#include "whisma/ops.hpp"
#include "whisma/training.hpp"

using namespace whisma;

namespace {

ManifestRecord record(TaskTag task, const std::string& id) {
  ManifestRecord r;
  r.id = id;
  r.task = task;
  r.audio = "synthetic:" + id;
  r.transcript = "wake me up at five am";
  switch (task) {
    case TaskTag::kIc: r.intent = "set_alarm"; break;
    case TaskTag::kSf:
      r.intent = "set_alarm";
      r.slots = EntitySet{{"time", "five am"}};
      break;
    case TaskTag::kSqa:
      r.question = "when?";
      r.answer = "five am";
      break;
    case TaskTag::kSit:
      r.instruction = "Repeat the text";
      r.input = r.transcript;
      r.output = "wake me up";
      break;
    case TaskTag::kSqit: r.output = "sure"; break;
    case TaskTag::kSa:
    case TaskTag::kSer:
    case TaskTag::kSter:
      r.prompt = "Decide";
      r.label = binary_labels(task).first;
      break;
    case TaskTag::kAsr: break;
  }
  return r;
}

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.n_mels = 16;
  c.d_model = 32;
  c.n_heads = 4;
  c.clip_seconds = 0.96;
  return c;
}

ModelConfig tiny_model() {
  ModelConfig mc;
  mc.encoder = tiny_encoder();
  mc.aligner.bottleneck_dim = 8;
  mc.decoder.d_model = 32;
  mc.decoder.max_positions = 256;
  mc.lora.rank = 4;
  mc.seed = 4;
  return mc;
}

FeatureOptions tiny_features() {
  FeatureOptions f;
  f.n_mels = 16;
  f.frames = 96;
  return f;
}

std::vector<TokenId> masked_ids(const MultimodalSequence& seq) {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.loss_mask[i]) out.push_back(seq.ids[i]);
  }
  return out;
}

// Maximal runs of supervised positions.
std::vector<std::vector<TokenId>> masked_spans(const MultimodalSequence& seq) {
  std::vector<std::vector<TokenId>> spans;
  bool open = false;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.loss_mask[i]) {
      if (!open) spans.emplace_back();
      spans.back().push_back(seq.ids[i]);
    }
    open = seq.loss_mask[i];
  }
  return spans;
}

std::string decode_span(const Tokenizer& tok, std::vector<TokenId> span) {
  REQUIRE(span.back() == id_of(Special::kEndTurn));
  span.pop_back();
  return tok.decode(span);
}

}  // namespace

TEST_SUITE("assignment") {
  TEST_CASE("ASR and SQIT are always plain") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
      REQUIRE(assign_config(record(TaskTag::kAsr, "a"), {}, rng) == Strategy::kPlain);
      REQUIRE(assign_config(record(TaskTag::kSqit, "q"), {}, rng) == Strategy::kPlain);
    }
    for (const auto t : {TaskTag::kIc, TaskTag::kSf, TaskTag::kSqa, TaskTag::kSit, TaskTag::kSa, TaskTag::kSer,
                         TaskTag::kSter}) {
      CHECK(uses_strategy_assignment(t));
    }
  }

  TEST_CASE("uniform probabilities give each config a third within 3 sigma") {
    Rng rng(77);
    std::map<Strategy, int> counts;
    const int n = 10000;
    for (int i = 0; i < n; ++i) ++counts[assign_config(record(TaskTag::kIc, "i"), {}, rng)];
    const double sigma = std::sqrt(n * (1.0 / 3.0) * (2.0 / 3.0));
    for (const auto s : {Strategy::kAlone, Strategy::kScot, Strategy::kMr}) {
      CAPTURE(strategy_name(s));
      CHECK(std::abs(counts[s] - n / 3.0) <= 3 * sigma);
    }
    CHECK(counts.count(Strategy::kPlain) == 0);
  }

  TEST_CASE("a fixed seed gives the same assignment sequence") {
    Rng a(5), b(5);
    for (int i = 0; i < 500; ++i) {
      REQUIRE(assign_config(record(TaskTag::kSf, "s"), {}, a) == assign_config(record(TaskTag::kSf, "s"), {}, b));
    }
  }

  TEST_CASE("degenerate probabilities and validation") {
    Rng rng(2);
    const StrategyProbs only_mr{0.0, 0.0, 1.0};
    for (int i = 0; i < 200; ++i) REQUIRE(assign_config(record(TaskTag::kIc, "i"), only_mr, rng) == Strategy::kMr);
    CHECK_THROWS_AS((StrategyProbs{0.5, 0.5, 0.5}.validate()), Error);
    CHECK_THROWS_AS((StrategyProbs{-0.1, 0.6, 0.5}.validate()), Error);
    CHECK_NOTHROW(StrategyProbs{}.validate());
    CHECK(TrainConfig{}.epochs == 1);
    CHECK(TrainConfig{}.lr == 1e-4);
  }
}

TEST_SUITE("sequences") {
  const PromptBanks& banks() {
    static const PromptBanks b;
    return b;
  }

  TEST_CASE("supervised targets per task") {
    CHECK(supervised_target(record(TaskTag::kAsr, "a")) == "wake me up at five am");
    CHECK(supervised_target(record(TaskTag::kIc, "a")) == "set_alarm");
    CHECK(supervised_target(record(TaskTag::kSf, "a")) == R"({"time": "five am"})");
    CHECK(supervised_target(record(TaskTag::kSqa, "a")) == "five am");
    CHECK(supervised_target(record(TaskTag::kSqit, "a")) == "sure");
    CHECK(supervised_target(record(TaskTag::kSer, "a")) == binary_labels(TaskTag::kSer).first);
    auto bad = record(TaskTag::kSqa, "broken");
    bad.answer.reset();
    try {
      supervised_target(bad);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("answer") != std::string::npos);
    }
  }

  TEST_CASE("mask covers exactly the gold intent and the end of turn") {
    const std::vector<ManifestRecord> rs{record(TaskTag::kIc, "ic")};
    const auto tok = build_vocabulary(rs, banks());
    Rng rng(3);
    const auto ex = build_training_sequence(rs[0], Strategy::kAlone, banks(), collect_inventories(rs), {}, tok, 12, rng);
    const auto spans = masked_spans(ex.sequence);
    REQUIRE(spans.size() == 1);
    CHECK(decode_span(tok, spans[0]) == "set_alarm");
    CHECK(ex.sequence.speech_len == 12);
    CHECK(ex.sequence.loss_mask.back());
  }

  TEST_CASE("SCoT target is transcript, delimiter, entity object") {
    const std::vector<ManifestRecord> rs{record(TaskTag::kSf, "sf")};
    const auto tok = build_vocabulary(rs, banks());
    Rng rng(4);
    const auto ex = build_training_sequence(rs[0], Strategy::kScot, banks(), collect_inventories(rs), {}, tok, 4, rng);
    const auto spans = masked_spans(ex.sequence);
    REQUIRE(spans.size() == 1);
    CHECK(decode_span(tok, spans[0]) == "wake me up at five am\n---\n{\"time\": \"five am\"}");
  }

  TEST_CASE("MR supervises both assistant rounds") {
    const std::vector<ManifestRecord> rs{record(TaskTag::kIc, "ic")};
    const auto tok = build_vocabulary(rs, banks());
    Rng rng(5);
    const auto ex = build_training_sequence(rs[0], Strategy::kMr, banks(), collect_inventories(rs), {}, tok, 4, rng);
    const auto spans = masked_spans(ex.sequence);
    REQUIRE(spans.size() == 2);
    CHECK(decode_span(tok, spans[0]) == "wake me up at five am");
    CHECK(decode_span(tok, spans[1]) == "set_alarm");
    int speech_turns = 0;
    for (const auto& t : ex.dialogue) speech_turns += t.speech ? 1 : 0;
    CHECK(speech_turns == 1);
  }

  TEST_CASE("SIT keeps the instruction as text and supervises the output") {
    const std::vector<ManifestRecord> rs{record(TaskTag::kSit, "sit")};
    const auto tok = build_vocabulary(rs, banks());
    Rng rng(6);
    const auto ex = build_training_sequence(rs[0], Strategy::kAlone, banks(), collect_inventories(rs), {}, tok, 4, rng);
    REQUIRE(ex.dialogue.size() == 2);
    CHECK(ex.dialogue[0].text == "Repeat the text");
    CHECK(ex.dialogue[0].speech);
    CHECK(decode_span(tok, masked_ids(ex.sequence)) == "wake me up");
  }

  TEST_CASE("SQIT ignores the requested strategy") {
    const std::vector<ManifestRecord> rs{record(TaskTag::kSqit, "q")};
    const auto tok = build_vocabulary(rs, banks());
    Rng rng(7);
    const auto ex = build_training_sequence(rs[0], Strategy::kMr, banks(), collect_inventories(rs), {}, tok, 4, rng);
    CHECK(ex.strategy == Strategy::kPlain);
    CHECK(masked_spans(ex.sequence).size() == 1);
  }

  TEST_CASE("shifted targets predict the next supervised token") {
    MultimodalSequence seq;
    seq.ids = {10, 11, 12, 13};
    seq.loss_mask = {false, false, true, true};
    const auto st = shift_targets(seq);
    CHECK(st.targets[1] == 12);
    CHECK(st.mask == std::vector<bool>{false, true, true, false});
    CHECK(st.count == 2);
  }
}

TEST_SUITE("loss") {
  TEST_CASE("masked positions contribute exactly zero gradient") {
    const std::vector<ManifestRecord> rs{record(TaskTag::kSf, "sf")};
    WhismaModel model(tiny_model(), build_vocabulary(rs, PromptBanks{}));
    Rng rng(8);
    const auto ex = build_training_sequence(rs[0], Strategy::kScot, PromptBanks{}, collect_inventories(rs), {},
                                            model.tokenizer(), model.speech_len(), rng);
    const auto speech = model.align(model.encode(synthetic_mel(rs[0].transcript, 16, 96, 8)));
    const auto st = shift_targets(ex.sequence);

    auto grads = [&](const std::vector<std::int32_t>& targets) {
      for (auto& p : model.trainable_parameters()) p.tensor.zero_grad();
      ops::cross_entropy_sum(model.decoder().forward(ex.sequence, speech), targets, st.mask).backward();
      std::vector<std::vector<float>> out;
      for (const auto& p : model.trainable_parameters()) out.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
      return out;
    };
    const auto reference = grads(st.targets);
    auto permuted = st.targets;
    Rng perm(9);
    std::uniform_int_distribution<std::int32_t> any(0, static_cast<std::int32_t>(model.tokenizer().vocab_size()) - 1);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < permuted.size(); ++i) {
      if (!st.mask[i]) {
        permuted[i] = any(perm);
        ++changed;
      }
    }
    REQUIRE(changed > 10);
    CHECK(grads(permuted) == reference);
    bool nonzero = false;
    for (const auto& g : reference) {
      for (const float v : g) nonzero = nonzero || v != 0.0f;
    }
    CHECK(nonzero);
  }
}

TEST_SUITE("mixture") {
  TEST_CASE("task draw frequencies follow the weights") {
    std::vector<ManifestRecord> rs;
    for (int i = 0; i < 4000; ++i) rs.push_back(record(TaskTag::kIc, "ic" + std::to_string(i)));
    for (int i = 0; i < 3000; ++i) rs.push_back(record(TaskTag::kSf, "sf" + std::to_string(i)));
    for (int i = 0; i < 3000; ++i) rs.push_back(record(TaskTag::kAsr, "asr" + std::to_string(i)));
    const std::map<TaskTag, double> w{{TaskTag::kIc, 0.2}, {TaskTag::kSf, 0.5}, {TaskTag::kAsr, 0.3}};
    Rng rng(10);
    const auto order = epoch_order(rs, w, rng);
    REQUIRE(order.size() == rs.size());
    std::map<TaskTag, double> observed;
    for (const auto i : order) observed[rs[i].task] += 1;
    double chi2 = 0;
    for (const auto& [task, p] : w) {
      const double expected = p * static_cast<double>(order.size());
      chi2 += (observed[task] - expected) * (observed[task] - expected) / expected;
    }
    // df = 2, p = 0.001
    CHECK(chi2 < 13.816);
  }

  TEST_CASE("without weights an epoch is a permutation") {
    std::vector<ManifestRecord> rs;
    for (int i = 0; i < 50; ++i) rs.push_back(record(TaskTag::kAsr, std::to_string(i)));
    Rng rng(11);
    auto order = epoch_order(rs, {}, rng);
    std::sort(order.begin(), order.end());
    for (std::size_t i = 0; i < order.size(); ++i) REQUIRE(order[i] == i);
  }

  TEST_CASE("weights selecting nothing are rejected") {
    Rng rng(12);
    CHECK_THROWS_AS(epoch_order({record(TaskTag::kAsr, "a")}, {{TaskTag::kIc, 1.0}}, rng), Error);
    CHECK_THROWS_AS(epoch_order({record(TaskTag::kAsr, "a")}, {{TaskTag::kAsr, -1.0}}, rng), Error);
  }
}

TEST_SUITE("train") {
  struct Run {
    TrainResult result;
    std::vector<ManifestRecord> records;
  };

  Run run(std::uint64_t seed, std::size_t epochs, std::size_t batch) {
    datasets::MicroSpec spec;
    spec.n_mels = 16;
    spec.counts = {{TaskTag::kAsr, 3}, {TaskTag::kIc, 3}, {TaskTag::kSf, 3}};
    const auto corpus = datasets::generate_micro_corpus(spec, 21);
    WhismaModel model(tiny_model(), build_vocabulary(corpus.records, PromptBanks{}));
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.epochs = epochs;
    tc.batch_size = batch;
    tc.seed = seed;
    std::vector<ManifestRecord> records = corpus.records;
    for (auto& r : records) r.audio = "synthetic:" + r.id;
    return {train(model, records, ".", tiny_features(), tc, PromptBanks{}), records};
  }

  TEST_CASE("every record is consumed exactly once per epoch") {
    const auto r = run(1, 2, 2);
    const std::size_t n = r.records.size();
    REQUIRE(r.result.trace.size() == 2 * n);
    CHECK(r.result.steps == 2 * ((n + 1) / 2));
    for (std::size_t e = 0; e < 2; ++e) {
      std::map<std::string, int> seen;
      for (std::size_t i = 0; i < n; ++i) ++seen[r.result.trace[e * n + i].example_id];
      CHECK(seen.size() == n);
      for (const auto& [id, c] : seen) CHECK(c == 1);
    }
    CHECK(r.result.frozen_hash_before == r.result.frozen_hash_after);
    for (const auto& row : r.result.trace) {
      if (row.task == TaskTag::kAsr) CHECK(row.strategy == Strategy::kPlain);
      CHECK(std::isfinite(row.loss));
    }
  }

  TEST_CASE("two runs with the same seed give identical traces") {
    const auto a = run(3, 1, 1), b = run(3, 1, 1), c = run(4, 1, 1);
    REQUIRE(a.result.trace.size() == b.result.trace.size());
    bool differs = false;
    for (std::size_t i = 0; i < a.result.trace.size(); ++i) {
      CHECK(a.result.trace[i].example_id == b.result.trace[i].example_id);
      CHECK(a.result.trace[i].loss == b.result.trace[i].loss);
      differs = differs || a.result.trace[i].example_id != c.result.trace[i].example_id;
    }
    CHECK(differs);
  }

  TEST_CASE("loss trace CSV") {
    const auto path = std::filesystem::temp_directory_path() / "whisma_loss.csv";
    write_loss_csv(path, {{0, "x", TaskTag::kIc, Strategy::kScot, 1.5, 3}}, "abc");
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    CHECK(ss.str() == "# config_hash abc\nstep,task,config,loss\n0,IC,scot,1.5\n");
  }

  TEST_CASE("empty manifests and zero batch size are rejected") {
    WhismaModel model(tiny_model(), Tokenizer::build({"a"}));
    CHECK_THROWS_AS(train(model, {}, ".", tiny_features(), {}, PromptBanks{}), Error);
    TrainConfig tc;
    tc.batch_size = 0;
    CHECK_THROWS_AS(train(model, {record(TaskTag::kAsr, "a")}, ".", tiny_features(), tc, PromptBanks{}), Error);
  }
}
