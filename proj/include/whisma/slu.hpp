// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Task, strategy and entity vocabulary shared across prompting, training,
// inference and scoring.

#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace whisma {

enum class TaskTag { kAsr, kIc, kSf, kSqa, kSqit, kSit, kSa, kSer, kSter };

std::string_view task_name(TaskTag task);
/// Case-insensitive; throws on unknown names.
TaskTag parse_task(std::string_view name);
bool is_binary_task(TaskTag task);

/// Inference strategies. Training additionally uses kPlain for tasks that are
/// never paired with transcription.
enum class Strategy { kPlain, kAlone, kScot, kMr };

std::string_view strategy_name(Strategy s);
/// Accepts "plain", "alone", "scot", "mr".
Strategy parse_strategy(std::string_view name);

struct Entity {
  std::string type;
  std::string value;

  auto operator<=>(const Entity&) const = default;
};

using EntitySet = std::vector<Entity>;

}  // namespace whisma
