// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "doctest.h"

#include "whisma/init.hpp"
#include "whisma/prompt.hpp"

using namespace whisma;

namespace {

const MarkerStrings kMarkers;

std::string render(const Dialogue& d, bool gen = true) {
  return render_chat(d, RenderOptions{.add_generation_prompt = gen}).str(kMarkers);
}

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

std::vector<std::string> inventory(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back("label_" + std::to_string(i));
  return v;
}

}  // namespace

TEST_SUITE("render_chat") {
  TEST_CASE("a single user turn") {
    CHECK(render({{Role::kUser, "hi"}}) ==
          "<|begin_of_text|><|start_header_id|>user<|end_header_id|>\n\nhi<|eot_id|>"
          "<|start_header_id|>assistant<|end_header_id|>\n\n");
  }

  TEST_CASE("a two-round dialogue keeps both rounds in order") {
    const Dialogue d{{Role::kSystem, "be brief"}, {Role::kUser, "one"}, {Role::kAssistant, "two"},
                     {Role::kUser, "three"}};
    const auto s = render(d);
    const auto a = s.find("be brief"), b = s.find("one"), c = s.find("two"), e = s.find("three");
    CHECK(a < b);
    CHECK(b < c);
    CHECK(c < e);
    CHECK(count_of(s, "<|eot_id|>") == 4);
  }

  TEST_CASE("a speech turn emits exactly one placeholder") {
    const auto s = render({{Role::kUser, "transcribe", true}});
    CHECK(count_of(s, kMarkers.speech) == 1);
  }

  TEST_CASE("malformed dialogues are rejected") {
    CHECK_THROWS_AS(render({}), Error);
    CHECK_THROWS_AS(render({{Role::kAssistant, "x"}}), Error);
    CHECK_THROWS_AS(render({{Role::kUser, "a"}, {Role::kUser, "b"}}), Error);
    CHECK_THROWS_AS(render({{Role::kUser, "a"}, {Role::kAssistant, "b", true}}, false), Error);
    CHECK_THROWS_AS(render({{Role::kUser, "a", true}, {Role::kAssistant, "b"}, {Role::kUser, "c", true}}), Error);
    CHECK_THROWS_AS(render({{Role::kUser, "a"}, {Role::kSystem, "b"}}), Error);
  }

  TEST_CASE("distinct dialogues render to distinct strings") {
    const std::vector<std::string> texts{"", "a", "a b", "<|eot_id|>", "\\", "\\<|", "<|start_header_id|>user",
                                         "<|end_header_id|>\n\n", "<|speech|>"};
    Rng rng(21);
    std::uniform_int_distribution<std::size_t> pick(0, texts.size() - 1), turns(1, 4), coin(0, 1);
    std::map<std::string, Dialogue> seen;
    for (int trial = 0; trial < 5000; ++trial) {
      Dialogue d;
      if (coin(rng)) d.push_back({Role::kSystem, texts[pick(rng)]});
      const std::size_t n = turns(rng);
      bool spliced = false;
      for (std::size_t i = 0; i < n; ++i) {
        const bool user = i % 2 == 0;
        const bool speech = user && !spliced && coin(rng);
        spliced = spliced || speech;
        d.push_back({user ? Role::kUser : Role::kAssistant, texts[pick(rng)], speech});
      }
      const bool gen = d.back().role == Role::kUser && coin(rng);
      const auto s = render(d, gen) + (gen ? "G" : "N");
      const auto [it, inserted] = seen.emplace(s, d);
      if (!inserted) REQUIRE(it->second == d);
    }
    CHECK(seen.size() > 500);
  }

  TEST_CASE("tokenized chat expands speech and masks only assistant content") {
    const auto tok = Tokenizer::build({"transcribe this", "hello world"});
    const Dialogue d{{Role::kUser, "transcribe this", true}, {Role::kAssistant, "hello world"}};
    const auto seq = tokenize_chat(render_chat(d, {.add_generation_prompt = false}), tok, 5);
    std::size_t placeholders = 0;
    for (auto id : seq.ids) placeholders += id == id_of(Special::kSpeech);
    CHECK(placeholders == 5);
    CHECK(seq.speech_len == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(seq.ids[seq.speech_begin + i] == id_of(Special::kSpeech));
    REQUIRE(seq.loss_mask.size() == seq.size());
    std::vector<TokenId> supervised;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq.loss_mask[i]) supervised.push_back(seq.ids[i]);
    }
    auto expected = tok.encode("hello world");
    expected.push_back(id_of(Special::kEndTurn));
    CHECK(supervised == expected);
  }
}

TEST_SUITE("prompt_banks") {
  TEST_CASE("built-in banks have ten templates with one label hole for IC and SF") {
    for (auto task : {PromptTask::kAsr, PromptTask::kIc, PromptTask::kSf}) {
      const auto bank = PromptBank::builtin(task);
      REQUIRE(bank.templates().size() == 10);
      for (const auto& t : bank.templates()) {
        CHECK_FALSE(t.empty());
        CHECK(count_of(t, std::string(kLabelHole)) == (task == PromptTask::kAsr ? 0u : 1u));
      }
    }
    CHECK_THROWS_AS(PromptBank(PromptTask::kIc, {"no hole"}), Error);
    CHECK_THROWS_AS(PromptBank(PromptTask::kAsr, std::vector<std::string>(10, "{labels}")), Error);
  }

  TEST_CASE("the shipped prompt files equal the built-in banks") {
    const auto banks = PromptBanks::load_dir(WHISMA_SOURCE_DIR "/data/prompts");
    const PromptBanks builtin;
    CHECK(banks.asr.templates() == builtin.asr.templates());
    CHECK(banks.ic.templates() == builtin.ic.templates());
    CHECK(banks.sf.templates() == builtin.sf.templates());
  }

  TEST_CASE("IC and SF prompts carry the labels in order") {
    Rng rng(1);
    const auto ic = build_task_prompt(PromptBank::builtin(PromptTask::kIc), {"a", "b"}, rng);
    CHECK(ic.find("a, b") != std::string::npos);
    const auto sf = build_task_prompt(PromptBank::builtin(PromptTask::kSf), {"date"}, rng);
    CHECK(sf.find("date") != std::string::npos);
    CHECK(sf.find(kLabelHole) == std::string::npos);
    CHECK_THROWS_AS(build_task_prompt(PromptBank::builtin(PromptTask::kIc), {}, rng), Error);
  }

  TEST_CASE("the same seed picks the same template") {
    const auto bank = PromptBank::builtin(PromptTask::kAsr);
    Rng a(77), b(77);
    for (int i = 0; i < 20; ++i) CHECK(build_task_prompt(bank, {}, a) == build_task_prompt(bank, {}, b));
  }

  TEST_CASE("1000 draws cover all ten templates of every task") {
    Rng rng(5);
    for (auto task : {PromptTask::kAsr, PromptTask::kIc, PromptTask::kSf}) {
      const auto bank = PromptBank::builtin(task);
      std::set<std::string> rendered;
      for (int i = 0; i < 1000; ++i) rendered.insert(build_task_prompt(bank, {"x"}, rng));
      CHECK(rendered.size() == 10);
    }
  }
}

TEST_SUITE("candidate_labels") {
  TEST_CASE("an inventory of one returns the gold label") {
    Rng rng(1);
    CHECK(sample_candidate_labels({"only"}, {"only"}, {}, rng) == std::vector<std::string>{"only"});
  }

  TEST_CASE("gold outside the inventory is an error") {
    Rng rng(1);
    CHECK_THROWS_AS(sample_candidate_labels({"a", "b"}, {"c"}, {}, rng), Error);
  }

  TEST_CASE("10k draws: gold always present, sizes uniform, inclusion at its expectation") {
    const auto inv = inventory(20);
    const std::string gold = inv[7];
    const std::size_t draws = 10000, lo = 2, hi = 20;
    Rng rng(2024);
    std::map<std::string, std::size_t> included;
    std::vector<std::size_t> sizes(hi + 1, 0);
    for (std::size_t n = 0; n < draws; ++n) {
      const auto s = sample_candidate_labels(inv, {gold}, {lo, 0}, rng);
      REQUIRE(std::find(s.begin(), s.end(), gold) != s.end());
      REQUIRE(std::set<std::string>(s.begin(), s.end()).size() == s.size());
      ++sizes.at(s.size());
      for (const auto& l : s) ++included[l];
    }
    CHECK(included[gold] == draws);

    // P(non-gold label) = E[(k - 1) / 19] with k uniform on [2, 20].
    double p = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) p += static_cast<double>(k - 1) / 19.0 / static_cast<double>(hi - lo + 1);
    const double sigma = std::sqrt(p * (1 - p) / draws);
    for (const auto& l : inv) {
      if (l == gold) continue;
      CAPTURE(l);
      CHECK(std::abs(static_cast<double>(included[l]) / draws - p) < 3 * sigma);
    }

    // Sizes: chi-squared against uniform on 19 cells; 42.31 is the 0.999
    // quantile at 18 degrees of freedom.
    const double expected = static_cast<double>(draws) / (hi - lo + 1);
    double chi2 = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) chi2 += std::pow(sizes[k] - expected, 2) / expected;
    CHECK(chi2 < 42.31);
    CHECK(sizes[0] + sizes[1] == 0);
  }

  TEST_CASE("multiple gold labels are all kept") {
    Rng rng(3);
    const auto inv = inventory(6);
    for (int i = 0; i < 200; ++i) {
      const auto s = sample_candidate_labels(inv, {inv[1], inv[4]}, {2, 4}, rng);
      CHECK(s.size() >= 2);
      CHECK(s.size() <= 4);
      CHECK(std::find(s.begin(), s.end(), inv[1]) != s.end());
      CHECK(std::find(s.begin(), s.end(), inv[4]) != s.end());
    }
  }
}

TEST_SUITE("strategies") {
  TEST_CASE("SCoT puts the transcription request before the SLU task with one delimiter") {
    const auto s = build_scot("ASR-PART", "IC-PART");
    CHECK(s.find("ASR-PART") < s.find("IC-PART"));
    CHECK(count_of(s, std::string(kScotDelimiter)) == 1);
    const auto r = render({{Role::kUser, s, true}});
    CHECK(count_of(r, kMarkers.speech) == 1);
    CHECK(count_of(r, "<|start_header_id|>user") == 1);
  }

  TEST_CASE("SCoT response is transcript, delimiter line, answer") {
    CHECK(scot_response("play jazz", "play_music") == "play jazz\n---\nplay_music");
  }

  TEST_CASE("MR history has the transcript as the assistant turn and one splice") {
    const auto h = build_mr_history("transcribe", "hello world", "classify");
    REQUIRE(h.size() == 3);
    CHECK(h[0] == DialogueTurn{Role::kUser, "transcribe", true});
    CHECK(h[1] == DialogueTurn{Role::kAssistant, "hello world", false});
    CHECK(h[2] == DialogueTurn{Role::kUser, "classify", false});
    CHECK(build_mr_history("t", "", "c")[1].text.empty());
  }

  TEST_CASE("rendered history is a strict prefix of the history plus its answer") {
    const std::vector<std::string> transcripts{"", "hello world", "<|eot_id|>", "a\\b"};
    for (const auto& t : transcripts) {
      auto h = build_mr_history("transcribe", t, "classify");
      const auto prefix = render(h, true);
      h.push_back({Role::kAssistant, "answer"});
      const auto full = render(h, false);
      CHECK(full.size() > prefix.size());
      CHECK(full.compare(0, prefix.size(), prefix) == 0);
    }
  }

  TEST_CASE("entity answers use the structured format") {
    CHECK(format_entities({}) == "{}");
    CHECK(format_entities({{"date", "today"}, {"place", "paris"}}) == R"({"date": "today", "place": "paris"})");
  }
}
