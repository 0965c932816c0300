// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace whisma {

using TokenId = std::int32_t;

enum class Special : TokenId {
  kBeginText = 0,
  kHeaderOpen = 1,
  kHeaderClose = 2,
  kEndTurn = 3,
  kSpeech = 4,
  kPad = 5,
};
inline constexpr std::size_t kNumSpecials = 6;
inline constexpr TokenId kFirstByteToken = static_cast<TokenId>(kNumSpecials);
inline constexpr TokenId kFirstPieceToken = kFirstByteToken + 256;

constexpr TokenId id_of(Special s) { return static_cast<TokenId>(s); }

/// Marker strings for the special tokens. Defaults follow the Llama-3
/// instruct template.
struct MarkerStrings {
  std::string begin_text = "<|begin_of_text|>";
  std::string header_open = "<|start_header_id|>";
  std::string header_close = "<|end_header_id|>";
  std::string end_turn = "<|eot_id|>";
  std::string speech = "<|speech|>";
  std::string pad = "<|pad|>";

  const std::string& of(Special s) const;
  bool operator==(const MarkerStrings&) const = default;
};

/// Splits ordinary text into vocabulary pieces: an optional single leading
/// space followed by a run of word characters, or a single other character.
std::vector<std::string_view> split_pieces(std::string_view text);

/// Whitespace/word tokenizer with byte fallback and reserved special tokens.
/// Ids: specials, then 256 byte tokens, then learned pieces.
class Tokenizer {
 public:
  Tokenizer() = default;
  Tokenizer(std::vector<std::string> pieces, MarkerStrings markers);

  /// Collects every piece occurring in `texts`; pieces are sorted.
  static Tokenizer build(const std::vector<std::string>& texts, MarkerStrings markers = {});

  /// Ordinary text; marker substrings are never mapped to special ids.
  std::vector<TokenId> encode(std::string_view text) const;
  /// Concatenated token strings; specials render as their marker strings.
  std::string decode(const std::vector<TokenId>& ids) const;
  std::string token_string(TokenId id) const;

  std::size_t vocab_size() const { return kFirstPieceToken + pieces_.size(); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  const MarkerStrings& markers() const { return markers_; }

  /// JSON: {"specials": {...}, "pieces": [...]}
  void save(const std::filesystem::path& path) const;
  static Tokenizer load(const std::filesystem::path& path);
  std::string to_json() const;
  static Tokenizer from_json(std::string_view json);

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> index_;
  MarkerStrings markers_;
};

}  // namespace whisma
