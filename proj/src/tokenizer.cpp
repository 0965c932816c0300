// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "whisma/tensor.hpp"

namespace whisma {
namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         c >= 0x80;
}

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

}  // namespace

const std::string& MarkerStrings::of(Special s) const {
  switch (s) {
    case Special::kBeginText: return begin_text;
    case Special::kHeaderOpen: return header_open;
    case Special::kHeaderClose: return header_close;
    case Special::kEndTurn: return end_turn;
    case Special::kSpeech: return speech;
    case Special::kPad: return pad;
  }
  return pad;
}

std::vector<std::string_view> split_pieces(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const std::size_t start = i;
    std::size_t j = i;
    if (text[j] == ' ' && j + 1 < n && !is_space(static_cast<unsigned char>(text[j + 1]))) ++j;
    if (is_word_byte(static_cast<unsigned char>(text[j]))) {
      while (j < n && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
    } else {
      ++j;
    }
    out.push_back(text.substr(start, j - start));
    i = j;
  }
  return out;
}

Tokenizer::Tokenizer(std::vector<std::string> pieces, MarkerStrings markers)
    : pieces_(std::move(pieces)), markers_(std::move(markers)) {
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (!index_.emplace(pieces_[i], kFirstPieceToken + static_cast<TokenId>(i)).second) {
      throw Error("tokenizer: duplicate piece '" + pieces_[i] + "'");
    }
  }
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts, MarkerStrings markers) {
  std::set<std::string> seen;
  for (const auto& t : texts) {
    for (auto piece : split_pieces(t)) {
      if (piece.size() > 1) seen.emplace(piece);  // single bytes are already covered
    }
  }
  return Tokenizer({seen.begin(), seen.end()}, std::move(markers));
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (auto piece : split_pieces(text)) {
    auto it = index_.find(std::string(piece));
    if (it != index_.end()) {
      ids.push_back(it->second);
    } else {
      for (unsigned char c : piece) ids.push_back(kFirstByteToken + c);
    }
  }
  return ids;
}

std::string Tokenizer::token_string(TokenId id) const {
  if (id >= 0 && id < kFirstByteToken) return markers_.of(static_cast<Special>(id));
  if (id >= kFirstByteToken && id < kFirstPieceToken) {
    return std::string(1, static_cast<char>(id - kFirstByteToken));
  }
  const auto idx = static_cast<std::size_t>(id - kFirstPieceToken);
  if (id < 0 || idx >= pieces_.size()) throw Error("tokenizer: unknown id " + std::to_string(id));
  return pieces_[idx];
}

std::string Tokenizer::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  for (TokenId id : ids) out += token_string(id);
  return out;
}

std::string Tokenizer::to_json() const {
  nlohmann::ordered_json j;
  j["specials"] = {{"begin_text", markers_.begin_text}, {"header_open", markers_.header_open},
                   {"header_close", markers_.header_close}, {"end_turn", markers_.end_turn},
                   {"speech", markers_.speech},           {"pad", markers_.pad}};
  j["pieces"] = pieces_;
  return j.dump(1);
}

Tokenizer Tokenizer::from_json(std::string_view json) {
  const auto j = nlohmann::json::parse(json);
  MarkerStrings m;
  const auto& s = j.at("specials");
  m.begin_text = s.at("begin_text");
  m.header_open = s.at("header_open");
  m.header_close = s.at("header_close");
  m.end_turn = s.at("end_turn");
  m.speech = s.at("speech");
  m.pad = s.at("pad");
  return Tokenizer(j.at("pieces").get<std::vector<std::string>>(), m);
}

void Tokenizer::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("tokenizer: cannot write " + path.string());
  os << to_json() << '\n';
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("tokenizer: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

}  // namespace whisma
