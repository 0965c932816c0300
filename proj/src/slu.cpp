// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/slu.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

#include "whisma/tensor.hpp"

namespace whisma {
namespace {

constexpr std::array<std::pair<TaskTag, std::string_view>, 9> kTaskNames{{
    {TaskTag::kAsr, "ASR"},
    {TaskTag::kIc, "IC"},
    {TaskTag::kSf, "SF"},
    {TaskTag::kSqa, "SQA"},
    {TaskTag::kSqit, "SQIT"},
    {TaskTag::kSit, "SIT"},
    {TaskTag::kSa, "SA"},
    {TaskTag::kSer, "SER"},
    {TaskTag::kSter, "STER"},
}};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

std::string_view task_name(TaskTag task) {
  for (const auto& [t, name] : kTaskNames) {
    if (t == task) return name;
  }
  return "?";
}

TaskTag parse_task(std::string_view name) {
  for (const auto& [t, n] : kTaskNames) {
    if (iequals(n, name)) return t;
  }
  throw Error("unknown task tag '" + std::string(name) + "'");
}

bool is_binary_task(TaskTag task) {
  return task == TaskTag::kSa || task == TaskTag::kSer || task == TaskTag::kSter;
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kPlain: return "plain";
    case Strategy::kAlone: return "alone";
    case Strategy::kScot: return "scot";
    case Strategy::kMr: return "mr";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::kPlain, Strategy::kAlone, Strategy::kScot, Strategy::kMr}) {
    if (iequals(strategy_name(s), name)) return s;
  }
  throw Error("unknown strategy '" + std::string(name) + "' (expected alone, scot or mr)");
}

}  // namespace whisma
