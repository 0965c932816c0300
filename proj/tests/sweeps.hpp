// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exhaustive comparisons of the scorers against the brute-force oracles.
// Shared by the unit tests and the acceptance runner.

#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "whisma/metrics.hpp"

namespace sweep {

struct Result {
  std::size_t cases = 0;
  std::size_t mismatches = 0;
  std::string first;  // description of the first mismatch

  void fail(const std::string& what) {
    if (mismatches++ == 0) first = what;
  }
  bool ok() const { return cases > 0 && mismatches == 0; }
};

inline constexpr double kCreditTolerance = 1e-12;

inline std::string show(const whisma::EntitySet& s) {
  std::ostringstream os;
  os << '{';
  for (const auto& e : s) os << '(' << e.type << ',' << e.value << ')';
  return os.str() + '}';
}

/// Every (ref, hyp) pair of word sequences over `alphabet` with up to
/// `max_len` words each: edit distance and WER.
inline Result wer(const std::vector<std::string>& alphabet, std::size_t max_len) {
  std::vector<std::vector<std::string>> all;
  for (std::size_t n = 0; n <= max_len; ++n) {
    for (auto& s : oracle::sequences(alphabet, n)) all.push_back(std::move(s));
  }
  Result r;
  for (const auto& ref : all) {
    for (const auto& hyp : all) {
      ++r.cases;
      const auto expected = oracle::edit_count_exhaustive(ref, 0, hyp, 0);
      const std::string rs = oracle::join(ref), hs = oracle::join(hyp);
      if (whisma::metrics::edit_distance(ref, hyp) != expected ||
          whisma::metrics::wer(rs, hs) != oracle::wer(rs, hs)) {
        r.fail("ref '" + rs + "' hyp '" + hs + "'");
      }
    }
  }
  return r;
}

/// Every (pred, gold) pair of entity multisets drawn from `pool` with
/// |pred| + |gold| <= max_total: exact, word and char credit per example,
/// then corpus-level F1 over all of them.
inline Result entity_f1(const whisma::EntitySet& pool, std::size_t max_total) {
  std::vector<whisma::EntitySet> sets;
  for (std::size_t n = 0; n <= max_total; ++n) {
    for (auto& s : oracle::multisets(pool, n)) sets.push_back(std::move(s));
  }
  Result r;
  std::vector<std::optional<whisma::EntitySet>> preds;
  std::vector<whisma::EntitySet> oracle_preds, golds;
  for (const auto& p : sets) {
    for (const auto& g : sets) {
      if (p.size() + g.size() > max_total) continue;
      ++r.cases;
      std::vector<bool> used(g.size(), false);
      const double exact = oracle::best_matching(p, 0, g, used, &oracle::exact_credit);
      const double word = oracle::best_matching(p, 0, g, used, &oracle::word_credit);
      const double chars = oracle::best_matching(p, 0, g, used, &oracle::char_credit);
      const auto report = whisma::metrics::slu_f1({p}, {g});
      const auto check = [&](const char* name, double got, double want) {
        if (std::abs(got - want) > kCreditTolerance) {
          std::ostringstream os;
          os << name << " pred " << show(p) << " gold " << show(g) << ": " << got << " vs " << want;
          r.fail(os.str());
        }
      };
      check("exact", report.exact.tp, exact);
      check("word", report.word.tp, word);
      check("char", report.chars.tp, chars);
      const auto ow = oracle::corpus_f1({p}, {g}, &oracle::word_credit);
      check("word_f1", report.word.f1(), ow.f1());
      check("exact_f1", report.exact.f1(), oracle::corpus_f1({p}, {g}, &oracle::exact_credit).f1());
      preds.emplace_back(p);
      oracle_preds.push_back(p);
      golds.push_back(g);
    }
  }
  const auto report = whisma::metrics::slu_f1(preds, golds);
  const double ow = oracle::corpus_f1(oracle_preds, golds, &oracle::word_credit).f1();
  const double oc = oracle::corpus_f1(oracle_preds, golds, &oracle::char_credit).f1();
  const double oe = oracle::corpus_f1(oracle_preds, golds, &oracle::exact_credit).f1();
  ++r.cases;
  if (std::abs(report.word.f1() - ow) > 1e-9 || std::abs(report.chars.f1() - oc) > 1e-9 ||
      std::abs(report.exact.f1() - oe) > 1e-9 ||
      std::abs(report.slu_f1() - 0.5 * (ow + oc)) > 1e-9) {
    r.fail("corpus-level F1");
  }
  return r;
}

/// Every (pred, gold) parse with intents from {x, y} (pred may be null) and
/// entity multisets of up to `max_size` from `pool` (pred may be null).
inline Result perfect_parsing(const whisma::EntitySet& pool, std::size_t max_size) {
  std::vector<whisma::EntitySet> sets;
  for (std::size_t n = 0; n <= max_size; ++n) {
    for (auto& s : oracle::multisets(pool, n)) sets.push_back(std::move(s));
  }
  std::vector<std::optional<std::string>> intents{std::nullopt, "x", "y"};
  std::vector<std::optional<whisma::EntitySet>> pred_sets{std::nullopt};
  for (const auto& s : sets) pred_sets.emplace_back(s);

  Result r;
  std::vector<whisma::metrics::ParseRecord> lib_preds, lib_golds;
  std::vector<oracle::Parse> o_preds, o_golds;
  for (const auto& pi : intents) {
    for (const auto& pe : pred_sets) {
      for (const auto& gi : {std::string("x"), std::string("y")}) {
        for (const auto& ge : sets) {
          ++r.cases;
          const whisma::metrics::ParseRecord lp{pi, pe}, lg{gi, ge};
          const oracle::Parse op{pi, pe}, og{gi, ge};
          const double got = whisma::metrics::perfect_parsing({lp}, {lg});
          const double want = oracle::perfect_parsing({op}, {og});
          if (got != want) r.fail("pred " + pi.value_or("null") + " " + (pe ? show(*pe) : "null") + " gold " + gi + " " + show(ge));
          lib_preds.push_back(lp);
          lib_golds.push_back(lg);
          o_preds.push_back(op);
          o_golds.push_back(og);
        }
      }
    }
  }
  ++r.cases;
  if (whisma::metrics::perfect_parsing(lib_preds, lib_golds) != oracle::perfect_parsing(o_preds, o_golds)) {
    r.fail("corpus-level perfect parsing");
  }
  return r;
}

/// Every corpus of up to `max_len` examples with gold in {pos, neg} and
/// predictions in {pos, neg, null}.
inline Result binary(std::size_t max_len) {
  Result r;
  const std::vector<std::string> gold_alphabet{"yes", "no"}, pred_alphabet{"yes", "no", "-"};
  for (std::size_t n = 1; n <= max_len; ++n) {
    const auto golds = oracle::sequences(gold_alphabet, n);
    const auto preds = oracle::sequences(pred_alphabet, n);
    for (const auto& g : golds) {
      for (const auto& p : preds) {
        ++r.cases;
        std::vector<std::optional<std::string>> pp;
        for (const auto& x : p) pp.push_back(x == "-" ? std::nullopt : std::optional<std::string>(x));
        if (whisma::metrics::binary_accuracy(pp, g, "yes", "no") != oracle::binary_accuracy(pp, g)) {
          r.fail("gold " + oracle::join(g) + " pred " + oracle::join(p));
        }
      }
    }
  }
  return r;
}

}  // namespace sweep
