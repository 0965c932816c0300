// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "whisma/checkpoint.hpp"

namespace whisma {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported by their full dotted path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(key_path(key), "has the wrong type (" + std::string(it->type_name()) + ")");
    }
  }

  void get_size(const std::string& key, std::size_t& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    if (!it->is_number_unsigned()) throw ConfigError(key_path(key), "expected a non-negative integer");
    out = it->get<std::size_t>();
  }

  void get_double(const std::string& key, double& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    if (!it->is_number()) throw ConfigError(key_path(key), "expected a number");
    out = it->get<double>();
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), key_path(key));
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(key_path(key), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_encoder(Section s, EncoderConfig& c) {
  s.get_size("n_mels", c.n_mels);
  s.get_size("d_model", c.d_model);
  s.get_size("n_layers", c.n_layers);
  s.get_size("n_heads", c.n_heads);
  s.get_size("ff_mult", c.ff_mult);
  s.get("conv_strides", c.conv_strides);
  s.get_double("clip_seconds", c.clip_seconds);
  s.finish();
}

void read_aligner(Section s, AlignerConfig& c) {
  s.get_size("kernel", c.kernel);
  s.get_size("stride", c.stride);
  s.get_size("bottleneck_dim", c.bottleneck_dim);
  s.get("activation", c.activation);
  s.finish();
}

void read_decoder(Section s, DecoderConfig& c) {
  s.get_size("d_model", c.d_model);
  s.get_size("n_layers", c.n_layers);
  s.get_size("n_heads", c.n_heads);
  s.get_size("ff_mult", c.ff_mult);
  s.get_size("max_positions", c.max_positions);
  s.finish();
}

void read_lora(Section s, LoraConfig& c) {
  s.get_size("rank", c.rank);
  s.get_double("alpha", c.alpha);
  s.get("targets", c.targets);
  s.finish();
}

void read_train(Section s, TrainConfig& c) {
  s.get_double("lr", c.lr);
  s.get_size("epochs", c.epochs);
  s.get_size("batch_size", c.batch_size);
  s.get_double("grad_clip", c.grad_clip);
  s.get_double("weight_decay", c.weight_decay);
  s.get_double("beta1", c.beta1);
  s.get_double("beta2", c.beta2);
  s.get_double("eps", c.eps);
  if (s.has("strategy_probs")) {
    Section p = s.child("strategy_probs");
    p.get_double("alone", c.strategy_probs.alone);
    p.get_double("scot", c.strategy_probs.scot);
    p.get_double("mr", c.strategy_probs.mr);
    p.finish();
  }
  if (s.has("task_weights")) {
    Section w = s.child("task_weights");
    const json& raw = s.raw("task_weights");
    c.task_weights.clear();
    for (const auto& [key, value] : raw.items()) {
      TaskTag task;
      try {
        task = parse_task(key);
      } catch (const std::exception&) {
        throw ConfigError(w.key_path(key), "unknown task");
      }
      double weight = 0.0;
      w.get_double(key, weight);
      c.task_weights[task] = weight;
    }
    w.finish();
  }
  if (s.has("k_range")) {
    Section k = s.child("k_range");
    k.get_size("lo", c.k_range.lo);
    k.get_size("hi", c.k_range.hi);
    k.finish();
  }
  s.get_size("decoder_pretrain_epochs", c.decoder_pretrain_epochs);
  s.get_double("decoder_pretrain_lr", c.decoder_pretrain_lr);
  s.finish();
}

void read_inference(Section s, InferenceConfig& c) {
  if (s.has("strategy")) {
    std::string name;
    s.get("strategy", name);
    try {
      c.strategy = parse_strategy(name);
    } catch (const std::exception&) {
      throw ConfigError(s.key_path("strategy"), "unknown strategy '" + name + "'");
    }
    if (c.strategy == Strategy::kPlain) {
      throw ConfigError(s.key_path("strategy"), "must be alone, scot or mr");
    }
  }
  s.get_size("max_new_short", c.options.max_new_short);
  s.get_size("max_new_long", c.options.max_new_long);
  s.finish();
}

void read_data(Section s, DataConfig& c) {
  s.get("train_manifest", c.train_manifest);
  s.get("test_manifest", c.test_manifest);
  s.get("base_dir", c.base_dir);
  s.get_size("frames_per_word", c.frames_per_word);
  s.finish();
}

template <typename F>
void section_check(const std::string& key, F f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  section_check("encoder", [&] { model.encoder.validate(); });
  section_check("aligner", [&] {
    AlignerConfig a = model.aligner;
    a.d_enc = model.encoder.d_model;
    a.d_dec = model.decoder.d_model;
    a.validate();
  });
  section_check("decoder", [&] {
    DecoderConfig d = model.decoder;
    d.vocab_size = 1;
    d.validate();
  });
  if (model.lora.rank == 0) throw ConfigError("lora.rank", "must be positive");
  for (const auto& t : model.lora.targets) {
    if (t != "q" && t != "k" && t != "v" && t != "o") {
      throw ConfigError("lora.targets", "unknown projection '" + t + "'");
    }
  }
  section_check("train.strategy_probs", [&] { train.strategy_probs.validate(); });
  if (!(train.lr > 0.0)) throw ConfigError("train.lr", "must be positive");
  if (train.batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
  for (const auto& [task, w] : train.task_weights) {
    if (!(w >= 0.0)) throw ConfigError("train.task_weights." + std::string(task_name(task)), "must be non-negative");
  }
  if (data.frames_per_word == 0) throw ConfigError("data.frames_per_word", "must be positive");
  if (inference.options.max_new_short == 0 || inference.options.max_new_long == 0) {
    throw ConfigError("inference", "token budgets must be positive");
  }
}

FeatureOptions RunConfig::features() const {
  FeatureOptions f;
  f.n_mels = model.encoder.n_mels;
  f.frames = model.encoder.mel_frames();
  f.frames_per_word = data.frames_per_word;
  f.mel = model.encoder.mel_config();
  return f;
}

RunConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(j, "");
  if (root.has("seed")) {
    const json& seed = root.raw("seed");
    if (!seed.is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
    c.seed = seed.get<std::uint64_t>();
  }
  root.get("output_dir", c.output_dir);
  root.get("prompts_dir", c.prompts_dir);
  if (root.has("encoder")) read_encoder(root.child("encoder"), c.model.encoder);
  if (root.has("aligner")) read_aligner(root.child("aligner"), c.model.aligner);
  if (root.has("decoder")) read_decoder(root.child("decoder"), c.model.decoder);
  if (root.has("lora")) read_lora(root.child("lora"), c.model.lora);
  if (root.has("train")) read_train(root.child("train"), c.train);
  if (root.has("inference")) read_inference(root.child("inference"), c.inference);
  if (root.has("data")) read_data(root.child("data"), c.data);
  root.finish();
  c.model.seed = c.seed;
  c.train.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("", "cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["prompts_dir"] = c.prompts_dir;
  const auto& e = c.model.encoder;
  j["encoder"] = {{"n_mels", e.n_mels},         {"d_model", e.d_model},
                  {"n_layers", e.n_layers},     {"n_heads", e.n_heads},
                  {"ff_mult", e.ff_mult},       {"conv_strides", e.conv_strides},
                  {"clip_seconds", e.clip_seconds}};
  const auto& a = c.model.aligner;
  j["aligner"] = {{"kernel", a.kernel},
                  {"stride", a.stride},
                  {"bottleneck_dim", a.bottleneck_dim},
                  {"activation", a.activation}};
  const auto& d = c.model.decoder;
  j["decoder"] = {{"d_model", d.d_model}, {"n_layers", d.n_layers},
                  {"n_heads", d.n_heads}, {"ff_mult", d.ff_mult},
                  {"max_positions", d.max_positions}};
  const auto& l = c.model.lora;
  j["lora"] = {{"rank", l.rank}, {"alpha", l.alpha}, {"targets", l.targets}};
  const auto& t = c.train;
  ordered_json weights = ordered_json::object();
  for (const auto& [task, w] : t.task_weights) weights[std::string(task_name(task))] = w;
  j["train"] = {{"lr", t.lr},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"grad_clip", t.grad_clip},
                {"weight_decay", t.weight_decay},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"eps", t.eps},
                {"strategy_probs",
                 {{"alone", t.strategy_probs.alone},
                  {"scot", t.strategy_probs.scot},
                  {"mr", t.strategy_probs.mr}}},
                {"task_weights", weights},
                {"k_range", {{"lo", t.k_range.lo}, {"hi", t.k_range.hi}}},
                {"decoder_pretrain_epochs", t.decoder_pretrain_epochs},
                {"decoder_pretrain_lr", t.decoder_pretrain_lr}};
  j["inference"] = {{"strategy", std::string(strategy_name(c.inference.strategy))},
                    {"max_new_short", c.inference.options.max_new_short},
                    {"max_new_long", c.inference.options.max_new_long}};
  j["data"] = {{"train_manifest", c.data.train_manifest},
               {"test_manifest", c.data.test_manifest},
               {"base_dir", c.data.base_dir},
               {"frames_per_word", c.data.frames_per_word}};
  return j.dump(2);
}

std::string config_hash(const RunConfig& config) {
  return hex64(fnv1a64(config_to_json(config)));
}

}  // namespace whisma
