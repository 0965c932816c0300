// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "whisma/checkpoint.hpp"
#include "whisma/datasets.hpp"
#include "whisma/metrics.hpp"

namespace whisma {
namespace {

std::vector<std::string> gold_slot_types(const ManifestRecord& r) {
  std::vector<std::string> out;
  if (!r.slots) return out;
  for (const auto& e : *r.slots) {
    if (std::find(out.begin(), out.end(), e.type) == out.end()) out.push_back(e.type);
  }
  return out;
}

std::string task_prompt(const ManifestRecord& r, const PromptBanks& banks,
                        const Inventories& inv, const KRange& k_range, Rng& rng) {
  switch (r.task) {
    case TaskTag::kAsr: return build_task_prompt(banks.asr, {}, rng);
    case TaskTag::kIc: {
      const auto labels = sample_candidate_labels(inv.intents, {*r.intent}, k_range, rng);
      return build_task_prompt(banks.ic, labels, rng);
    }
    case TaskTag::kSf: {
      auto labels = sample_candidate_labels(inv.slot_types, gold_slot_types(r), k_range, rng);
      return build_task_prompt(banks.sf, labels, rng);
    }
    case TaskTag::kSqa: return *r.question;
    case TaskTag::kSit: return *r.instruction;
    case TaskTag::kSqit: return {};
    case TaskTag::kSa:
    case TaskTag::kSer:
    case TaskTag::kSter: return *r.prompt;
  }
  return {};
}

// Token ids of the transcript words, one per speech row, padded.
std::vector<TokenId> word_ids(const std::string& transcript, const Tokenizer& tok, std::size_t len) {
  std::vector<TokenId> ids;
  for (const auto& w : metrics::split_words(transcript)) {
    if (ids.size() == len) break;
    ids.push_back(tok.encode(" " + w).front());
  }
  ids.resize(len, id_of(Special::kPad));
  return ids;
}

double mean_token_loss(double sum, std::size_t tokens) {
  return tokens ? sum / static_cast<double>(tokens) : 0.0;
}

}  // namespace

void StrategyProbs::validate() const {
  if (alone < 0 || scot < 0 || mr < 0 || std::abs(alone + scot + mr - 1.0) > 1e-9) {
    throw Error("strategy probabilities must be non-negative and sum to 1");
  }
}

bool uses_strategy_assignment(TaskTag task) {
  return task != TaskTag::kAsr && task != TaskTag::kSqit;
}

Strategy assign_config(const ManifestRecord& record, const StrategyProbs& probs, Rng& rng) {
  if (!uses_strategy_assignment(record.task)) return Strategy::kPlain;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < probs.alone) return Strategy::kAlone;
  if (u < probs.alone + probs.scot) return Strategy::kScot;
  return Strategy::kMr;
}

Inventories collect_inventories(const std::vector<ManifestRecord>& records) {
  std::set<std::string> intents, slots;
  for (const auto& r : records) {
    if (r.intent) intents.insert(*r.intent);
    if (r.slots) {
      for (const auto& e : *r.slots) slots.insert(e.type);
    }
  }
  return {{intents.begin(), intents.end()}, {slots.begin(), slots.end()}};
}

std::string supervised_target(const ManifestRecord& r) {
  auto need = [&](const std::optional<std::string>& v, const char* field) -> const std::string& {
    if (!v) {
      throw Error("training example '" + r.id + "' lacks annotation field '" + field + "'");
    }
    return *v;
  };
  switch (r.task) {
    case TaskTag::kAsr:
      if (r.transcript.empty()) throw Error("training example '" + r.id + "' lacks a transcript");
      return r.transcript;
    case TaskTag::kIc: return need(r.intent, "intent");
    case TaskTag::kSf:
      if (!r.slots) throw Error("training example '" + r.id + "' lacks annotation field 'slots'");
      return format_entities(*r.slots);
    case TaskTag::kSqa: return need(r.answer, "answer");
    case TaskTag::kSit:
    case TaskTag::kSqit: return need(r.output, "output");
    case TaskTag::kSa:
    case TaskTag::kSer:
    case TaskTag::kSter: return need(r.label, "label");
  }
  return {};
}

Dialogue build_training_dialogue(const ManifestRecord& r, Strategy strategy,
                                 const PromptBanks& banks, const Inventories& inv,
                                 const KRange& k_range, Rng& rng) {
  validate_record(r);
  const std::string target = supervised_target(r);
  if (!uses_strategy_assignment(r.task)) strategy = Strategy::kPlain;
  if (strategy == Strategy::kPlain || strategy == Strategy::kAlone) {
    return {{Role::kUser, task_prompt(r, banks, inv, k_range, rng), true},
            {Role::kAssistant, target, false}};
  }
  if (r.transcript.empty()) {
    throw Error("training example '" + r.id + "' needs a transcript for " +
                std::string(strategy_name(strategy)));
  }
  const std::string asr_prompt = build_task_prompt(banks.asr, {}, rng);
  const std::string slu_prompt = task_prompt(r, banks, inv, k_range, rng);
  if (strategy == Strategy::kScot) {
    return {{Role::kUser, build_scot(asr_prompt, slu_prompt), true},
            {Role::kAssistant, scot_response(r.transcript, target), false}};
  }
  auto turns = build_mr_history(asr_prompt, r.transcript, slu_prompt);
  turns.push_back({Role::kAssistant, target, false});
  return turns;
}

TrainingExample build_training_sequence(const ManifestRecord& record, Strategy strategy,
                                        const PromptBanks& banks, const Inventories& inventories,
                                        const KRange& k_range, const Tokenizer& tokenizer,
                                        std::size_t speech_len, Rng& rng) {
  TrainingExample ex;
  ex.id = record.id;
  ex.task = record.task;
  ex.strategy = uses_strategy_assignment(record.task) ? strategy : Strategy::kPlain;
  ex.dialogue = build_training_dialogue(record, ex.strategy, banks, inventories, k_range, rng);
  RenderOptions opts;
  opts.add_generation_prompt = false;
  ex.sequence = tokenize_chat(render_chat(ex.dialogue, opts), tokenizer, speech_len);
  return ex;
}

ShiftedTargets shift_targets(const MultimodalSequence& seq) {
  ShiftedTargets out;
  const std::size_t n = seq.ids.size();
  out.targets.assign(n, id_of(Special::kPad));
  out.mask.assign(n, false);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    out.targets[i] = seq.ids[i + 1];
    out.mask[i] = seq.loss_mask[i + 1];
    out.count += out.mask[i] ? 1 : 0;
  }
  return out;
}

std::vector<std::size_t> epoch_order(const std::vector<ManifestRecord>& records,
                                     const std::map<TaskTag, double>& task_weights, Rng& rng) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (task_weights.empty()) {
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  }
  std::map<TaskTag, std::vector<std::size_t>> by_task;
  for (std::size_t i = 0; i < records.size(); ++i) by_task[records[i].task].push_back(i);
  std::vector<TaskTag> tasks;
  std::vector<double> weights;
  for (const auto& [task, w] : task_weights) {
    if (w < 0) throw Error("task weight for " + std::string(task_name(task)) + " is negative");
    if (w > 0 && by_task.count(task)) {
      tasks.push_back(task);
      weights.push_back(w);
    }
  }
  if (tasks.empty()) throw Error("task weights select no task present in the manifest");
  for (auto& [task, idx] : by_task) std::shuffle(idx.begin(), idx.end(), rng);
  std::map<TaskTag, std::size_t> cursor;
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  for (auto& slot : order) {
    const TaskTag t = tasks[pick(rng)];
    const auto& idx = by_task[t];
    slot = idx[cursor[t]++ % idx.size()];
  }
  return order;
}

Tokenizer build_vocabulary(const std::vector<ManifestRecord>& records, const PromptBanks& banks,
                           const MarkerStrings& markers) {
  const auto inv = collect_inventories(records);
  std::vector<std::string> texts{"system", "user", "assistant", "\n\n",
                                 build_scot("", ""), scot_response("", "")};
  for (const auto& r : records) {
    texts.push_back(r.transcript);
    texts.push_back(supervised_target(r));
    for (const auto* f : {&r.question, &r.instruction, &r.prompt}) {
      if (*f) texts.push_back(**f);
    }
  }
  for (const auto* bank : {&banks.asr, &banks.ic, &banks.sf}) {
    const auto& labels = bank->task() == PromptTask::kIc ? inv.intents : inv.slot_types;
    for (auto t : bank->templates()) {
      if (const auto pos = t.find(kLabelHole); pos != std::string::npos) {
        t.replace(pos, kLabelHole.size(), join_labels(labels));
      }
      texts.push_back(t);
    }
    for (const auto& l : labels) texts.push_back(l);
  }
  return Tokenizer::build(texts, markers);
}

TrainResult train(WhismaModel& model, const std::vector<ManifestRecord>& records,
                  const std::filesystem::path& base_dir, const FeatureOptions& features,
                  const TrainConfig& config, const PromptBanks& banks,
                  const TrainCallback& on_step) {
  if (records.empty()) throw Error("train: empty manifest");
  if (config.batch_size == 0) throw Error("train: batch_size must be positive");
  config.strategy_probs.validate();
  const auto inventories = collect_inventories(records);
  const std::size_t speech_len = model.speech_len();
  const Tokenizer& tok = model.tokenizer();
  TrainResult result;

  // The encoder is frozen, so its outputs are computed once.
  std::unordered_map<std::string, Tensor> encoded;
  for (const auto& r : records) encoded.emplace(r.id, model.encode(load_features(r, base_dir, features)));

  Rng rng(mix_seed(config.seed, 0x7472));

  if (config.decoder_pretrain_epochs > 0) {
    model.decoder().set_base_trainable(true);
    auto base = model.decoder().base_parameters();
    AdamW opt(base, {config.decoder_pretrain_lr, config.beta1, config.beta2, config.eps, 0.0});
    for (std::size_t epoch = 0; epoch < config.decoder_pretrain_epochs; ++epoch) {
      double sum = 0.0;
      std::size_t tokens = 0;
      const auto order = epoch_order(records, {}, rng);
      for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
        std::vector<MultimodalSequence> batch;
        std::size_t batch_tokens = 0;
        for (std::size_t k = b; k < std::min(order.size(), b + config.batch_size); ++k) {
          const auto& r = records[order[k]];
          auto ex = build_training_sequence(r, assign_config(r, config.strategy_probs, rng), banks,
                                            inventories, config.k_range, tok, speech_len, rng);
          auto& seq = ex.sequence;
          const auto words = word_ids(r.transcript, tok, seq.speech_len);
          std::copy(words.begin(), words.end(),
                    seq.ids.begin() + static_cast<std::ptrdiff_t>(seq.speech_begin));
          seq.speech_len = 0;
          batch_tokens += shift_targets(seq).count;
          batch.push_back(std::move(seq));
        }
        for (const auto& seq : batch) {
          const auto st = shift_targets(seq);
          const Tensor loss = ops::cross_entropy_sum(model.decoder().forward(seq, Tensor{}),
                                                     st.targets, st.mask);
          sum += loss.item();
          tokens += st.count;
          ops::scale(loss, 1.0f / static_cast<float>(std::max<std::size_t>(1, batch_tokens)))
              .backward();
        }
        clip_grad_norm(base, config.grad_clip);
        opt.step();
      }
      result.pretrain_final_loss = mean_token_loss(sum, tokens);
    }
    model.decoder().set_base_trainable(false);
    for (auto& p : model.trainable_parameters()) p.tensor.zero_grad();
  }

  auto params = model.trainable_parameters();
  result.frozen_hash_before = hash_params(model.frozen_parameters());
  AdamW opt(params, config.adamw());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_sum = 0.0;
    std::size_t epoch_tokens = 0;
    const auto order = epoch_order(records, config.task_weights, rng);
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::vector<TrainingExample> batch;
      std::size_t batch_tokens = 0;
      for (std::size_t k = b; k < std::min(order.size(), b + config.batch_size); ++k) {
        const auto& r = records[order[k]];
        batch.push_back(build_training_sequence(r, assign_config(r, config.strategy_probs, rng),
                                                banks, inventories, config.k_range, tok,
                                                speech_len, rng));
        batch_tokens += shift_targets(batch.back().sequence).count;
      }
      for (const auto& ex : batch) {
        const auto st = shift_targets(ex.sequence);
        Tensor loss;
        try {
          const Tensor speech = model.align(encoded.at(ex.id));
          loss = ops::cross_entropy_sum(model.decoder().forward(ex.sequence, speech), st.targets,
                                        st.mask);
        } catch (const NonFiniteError& e) {
          throw NonFiniteError("train: non-finite value at step " + std::to_string(step) +
                               ", example '" + ex.id + "': " + e.what());
        }
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NonFiniteError("train: non-finite loss at step " + std::to_string(step) +
                               ", example '" + ex.id + "'");
        }
        ops::scale(loss, 1.0f / static_cast<float>(std::max<std::size_t>(1, batch_tokens)))
            .backward();
        LossRow row{step, ex.id, ex.task, ex.strategy, mean_token_loss(value, st.count), st.count};
        epoch_sum += value;
        epoch_tokens += st.count;
        if (on_step) on_step(row);
        result.trace.push_back(std::move(row));
      }
      clip_grad_norm(params, config.grad_clip);
      opt.step();
      ++step;
    }
    result.final_epoch_loss = mean_token_loss(epoch_sum, epoch_tokens);
  }
  result.steps = step;
  result.frozen_hash_after = hash_params(model.frozen_parameters());
  return result;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRow>& trace,
                    const std::string& config_hash) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write loss trace " + path.string());
  if (!config_hash.empty()) os << "# config_hash " << config_hash << '\n';
  os << "step,task,config,loss\n";
  char buf[64];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof(buf), "%.9g", row.loss);
    os << row.step << ',' << task_name(row.task) << ',' << strategy_name(row.strategy) << ','
       << buf << '\n';
  }
}

}  // namespace whisma
