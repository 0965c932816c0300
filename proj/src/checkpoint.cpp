// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace whisma {
namespace {

constexpr char kMagic[8] = {'W', 'H', 'I', 'S', 'M', 'A', 'C', 'K'};

template <typename U>
void put_le(std::ostream& os, U value) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw Error("checkpoint: truncated file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(buf[i]) << (8 * i);
  return value;
}

void put_string(std::ostream& os, const std::string& s) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto len = get_le<std::uint32_t>(is);
  std::string s(len, '\0');
  if (len && !is.read(s.data(), len)) throw Error("checkpoint: truncated string");
  return s;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed) {
  return fnv1a64(std::as_bytes(std::span(text.data(), text.size())), seed);
}

std::string hex64(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

std::uint64_t hash_params(const std::vector<NamedParam>& params) {
  std::uint64_t h = fnv1a64(std::string_view{});
  for (const auto& p : params) {
    h = fnv1a64(p.name, h);
    h = fnv1a64(shape_str(p.tensor.shape()), h);
    h = fnv1a64(std::as_bytes(p.tensor.data()), h);
  }
  return h;
}

void Checkpoint::add(const std::vector<NamedParam>& params) {
  for (const auto& p : params) {
    if (!entries.emplace(p.name, CheckpointEntry{p.tensor.shape(),
                                                 {p.tensor.data().begin(), p.tensor.data().end()}})
             .second) {
      throw Error("checkpoint: duplicate parameter " + p.name);
    }
  }
}

void Checkpoint::restore(std::vector<NamedParam>& params) const {
  for (auto& p : params) {
    auto it = entries.find(p.name);
    if (it == entries.end()) throw Error("checkpoint: missing parameter " + p.name);
    if (it->second.shape != p.tensor.shape()) {
      throw ShapeError("checkpoint: parameter " + p.name + " stored as " +
                       shape_str(it->second.shape) + ", model expects " +
                       shape_str(p.tensor.shape()));
    }
    std::copy(it->second.values.begin(), it->second.values.end(), p.tensor.mutable_data().begin());
  }
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("checkpoint: cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(os, version);
  put_le<std::uint64_t>(os, config_hash);
  put_string(os, config_json);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, entry] : entries) {
    put_string(os, name);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(entry.shape.size()));
    for (auto d : entry.shape) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (float v : entry.values) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
  }
  if (!os) throw Error("checkpoint: write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint: cannot open " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error("checkpoint: bad magic in " + path.string());
  }
  Checkpoint ck;
  ck.version = get_le<std::uint32_t>(is);
  if (ck.version != kSubstrateVersion) {
    throw Error("checkpoint: unsupported substrate version " + std::to_string(ck.version));
  }
  ck.config_hash = get_le<std::uint64_t>(is);
  ck.config_json = get_string(is);
  const auto count = get_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(is);
    CheckpointEntry entry;
    const auto rank = get_le<std::uint32_t>(is);
    for (std::uint32_t r = 0; r < rank; ++r) entry.shape.push_back(get_le<std::uint32_t>(is));
    entry.values.resize(num_elements(entry.shape));
    for (float& v : entry.values) v = std::bit_cast<float>(get_le<std::uint32_t>(is));
    ck.entries.emplace(std::move(name), std::move(entry));
  }
  return ck;
}

}  // namespace whisma
