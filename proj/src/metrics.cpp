// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>

#include "whisma/tensor.hpp"

namespace whisma::metrics {
namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

template <typename Item>
std::size_t multiset_intersection(std::vector<Item> a, std::vector<Item> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

double overlap_f1(std::size_t common, std::size_t a, std::size_t b) {
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(common) / static_cast<double>(a + b);
}

// Hungarian algorithm on a rows <= cols cost matrix; returns the minimum cost.
double min_cost_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return 0.0;
  const std::size_t m = cost[0].size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  std::vector<bool> used(m + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) total += cost[p[j] - 1][j - 1];
  }
  return total;
}

}  // namespace

std::string normalize(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  std::size_t b = 0, e = out.size();
  while (b < e && (std::ispunct(static_cast<unsigned char>(out[b])) || out[b] == ' ')) ++b;
  while (e > b && (std::ispunct(static_cast<unsigned char>(out[e - 1])) || out[e - 1] == ' ')) --e;
  return out.substr(b, e - b);
}

EntitySet normalize(const EntitySet& entities) {
  EntitySet out;
  out.reserve(entities.size());
  for (const auto& e : entities) out.push_back({normalize(e.type), normalize(e.value)});
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

std::size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double wer(std::string_view ref, std::string_view hyp) {
  const auto r = split_words(ref);
  const auto h = split_words(hyp);
  return static_cast<double>(edit_distance(r, h)) /
         static_cast<double>(std::max<std::size_t>(1, r.size()));
}

WerReport corpus_wer(const std::vector<std::string>& refs, const std::vector<std::string>& hyps) {
  if (refs.size() != hyps.size()) {
    throw Error("corpus_wer: " + std::to_string(refs.size()) + " references vs " +
                std::to_string(hyps.size()) + " hypotheses");
  }
  WerReport report;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto r = split_words(refs[i]);
    report.errors += edit_distance(r, split_words(hyps[i]));
    report.ref_words += r.size();
  }
  report.n_examples = refs.size();
  report.rate = static_cast<double>(report.errors) /
                static_cast<double>(std::max<std::size_t>(1, report.ref_words));
  return report;
}

double intent_accuracy(const std::vector<std::optional<std::string>>& preds,
                       const std::vector<std::string>& golds) {
  if (preds.size() != golds.size()) {
    throw Error("intent_accuracy: " + std::to_string(preds.size()) + " predictions vs " +
                std::to_string(golds.size()) + " golds");
  }
  if (golds.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (preds[i] && *preds[i] == golds[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(golds.size());
}

double F1Score::f1() const {
  const double p = precision(), r = recall();
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

double word_overlap(std::string_view pred, std::string_view gold) {
  const auto a = split_words(pred);
  const auto b = split_words(gold);
  return overlap_f1(multiset_intersection(a, b), a.size(), b.size());
}

double char_overlap(std::string_view pred, std::string_view gold) {
  auto chars = [](std::string_view s) {
    std::vector<char> out;
    for (char c : s) {
      if (!is_space(static_cast<unsigned char>(c))) out.push_back(c);
    }
    return out;
  };
  const auto a = chars(pred);
  const auto b = chars(gold);
  return overlap_f1(multiset_intersection(a, b), a.size(), b.size());
}

double max_credit(const EntitySet& pred, const EntitySet& gold,
                  double (*overlap)(std::string_view, std::string_view)) {
  const bool flip = pred.size() > gold.size();
  const EntitySet& rows = flip ? gold : pred;
  const EntitySet& cols = flip ? pred : gold;
  std::vector<std::vector<double>> cost(rows.size(), std::vector<double>(cols.size(), 0.0));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (rows[i].type != cols[j].type) continue;
      const auto& p = flip ? cols[j] : rows[i];
      const auto& g = flip ? rows[i] : cols[j];
      cost[i][j] = -overlap(p.value, g.value);
    }
  }
  return -min_cost_assignment(cost);
}

std::size_t exact_matches(const EntitySet& pred, const EntitySet& gold) {
  return multiset_intersection(pred, gold);
}

SluF1Report slu_f1(const std::vector<std::optional<EntitySet>>& preds,
                   const std::vector<EntitySet>& golds) {
  if (preds.size() != golds.size()) {
    throw Error("slu_f1: " + std::to_string(preds.size()) + " predictions vs " +
                std::to_string(golds.size()) + " golds");
  }
  SluF1Report report;
  report.n_examples = golds.size();
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const EntitySet pred = preds[i] ? normalize(*preds[i]) : EntitySet{};
    const EntitySet gold = normalize(golds[i]);
    const auto np = static_cast<double>(pred.size());
    const auto ng = static_cast<double>(gold.size());
    for (F1Score* s : {&report.exact, &report.word, &report.chars}) {
      s->n_pred += np;
      s->n_gold += ng;
    }
    report.exact.tp += static_cast<double>(exact_matches(pred, gold));
    report.word.tp += max_credit(pred, gold, &word_overlap);
    report.chars.tp += max_credit(pred, gold, &char_overlap);
  }
  return report;
}

double perfect_parsing(const std::vector<ParseRecord>& preds,
                       const std::vector<ParseRecord>& golds) {
  if (preds.size() != golds.size()) {
    throw Error("perfect_parsing: " + std::to_string(preds.size()) + " predictions vs " +
                std::to_string(golds.size()) + " golds");
  }
  if (golds.empty()) return 0.0;
  std::size_t perfect = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto& g = golds[i];
    if (!g.intent || !g.entities) {
      throw Error("perfect_parsing: gold record " + std::to_string(i) +
                  " lacks an intent or entity set");
    }
    const auto& p = preds[i];
    if (!p.intent || normalize(*p.intent) != normalize(*g.intent)) continue;
    EntitySet pe = p.entities ? normalize(*p.entities) : EntitySet{};
    EntitySet ge = normalize(*g.entities);
    std::sort(pe.begin(), pe.end());
    std::sort(ge.begin(), ge.end());
    if (pe == ge) ++perfect;
  }
  return static_cast<double>(perfect) / static_cast<double>(golds.size());
}

double binary_accuracy(const std::vector<std::optional<std::string>>& preds,
                       const std::vector<std::string>& golds, std::string_view positive,
                       std::string_view negative) {
  if (preds.size() != golds.size()) {
    throw Error("binary_accuracy: " + std::to_string(preds.size()) + " predictions vs " +
                std::to_string(golds.size()) + " golds");
  }
  if (golds.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (golds[i] != positive && golds[i] != negative) {
      throw Error("binary_accuracy: gold label '" + golds[i] + "' outside {" +
                  std::string(positive) + ", " + std::string(negative) + "}");
    }
    if (preds[i] && *preds[i] == golds[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(golds.size());
}

}  // namespace whisma::metrics
