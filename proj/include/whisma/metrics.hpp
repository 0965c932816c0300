// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scoring: word error rate, intent accuracy, entity F1 with partial credit,
// perfect parsing and binary accuracy. All aggregation is corpus-level.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "whisma/slu.hpp"

namespace whisma::metrics {

/// Lowercase, collapse whitespace, strip punctuation at both ends.
std::string normalize(std::string_view text);
EntitySet normalize(const EntitySet& entities);

std::vector<std::string> split_words(std::string_view text);

/// Unit-cost word Levenshtein distance.
std::size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Edit distance over max(1, reference words). Inputs are compared as given.
double wer(std::string_view ref, std::string_view hyp);

struct WerReport {
  std::size_t errors = 0;
  std::size_t ref_words = 0;
  std::size_t n_examples = 0;
  double rate = 0.0;  // errors / max(1, ref_words)
};

WerReport corpus_wer(const std::vector<std::string>& refs, const std::vector<std::string>& hyps);

/// Exact-match fraction; a null prediction is wrong.
double intent_accuracy(const std::vector<std::optional<std::string>>& preds,
                       const std::vector<std::string>& golds);

struct F1Score {
  double tp = 0.0;  // fractional under partial credit
  double n_pred = 0.0;
  double n_gold = 0.0;

  double precision() const { return n_pred > 0 ? tp / n_pred : 0.0; }
  double recall() const { return n_gold > 0 ? tp / n_gold : 0.0; }
  double fp() const { return n_pred - tp; }
  double fn() const { return n_gold - tp; }
  /// 2PR / (P + R), 0 when P + R = 0.
  double f1() const;
};

/// F1 between the word multisets of two values.
double word_overlap(std::string_view pred, std::string_view gold);
/// F1 between the character multisets of two values, spaces excluded.
double char_overlap(std::string_view pred, std::string_view gold);

/// Maximum total overlap credit over one-to-one matchings of same-type
/// entities. Inputs must already be normalized.
double max_credit(const EntitySet& pred, const EntitySet& gold,
                  double (*overlap)(std::string_view, std::string_view));

/// Number of exactly equal (type, value) pairs under multiset intersection.
std::size_t exact_matches(const EntitySet& pred, const EntitySet& gold);

struct SluF1Report {
  F1Score exact;
  F1Score word;
  F1Score chars;
  std::size_t n_examples = 0;

  double slu_f1() const { return 0.5 * (word.f1() + chars.f1()); }
};

/// Null predictions count as empty sets.
SluF1Report slu_f1(const std::vector<std::optional<EntitySet>>& preds,
                   const std::vector<EntitySet>& golds);

struct ParseRecord {
  std::optional<std::string> intent;
  std::optional<EntitySet> entities;
};

/// Fraction of examples whose intent and normalized entity multiset both
/// match exactly. Gold records must carry both fields.
double perfect_parsing(const std::vector<ParseRecord>& preds, const std::vector<ParseRecord>& golds);

/// Exact-match fraction over a two-label inventory; throws if a gold label is
/// outside {positive, negative}.
double binary_accuracy(const std::vector<std::optional<std::string>>& preds,
                       const std::vector<std::string>& golds, std::string_view positive,
                       std::string_view negative);

}  // namespace whisma::metrics
