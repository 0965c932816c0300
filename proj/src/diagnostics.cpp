// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/diagnostics.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "whisma/aligner.hpp"
#include "whisma/checkpoint.hpp"
#include "whisma/decoder.hpp"
#include "whisma/encoder.hpp"
#include "whisma/init.hpp"
#include "whisma/ops.hpp"
#include "whisma/optim.hpp"

namespace whisma::diagnostics {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Tensor64 leaf(Shape shape, Rng& rng, double stddev = 1.0) {
  return normal_tensor<double>(std::move(shape), stddev, rng, true);
}

Tensor64 fixed(Shape shape, Rng& rng) { return normal_tensor<double>(std::move(shape), 1.0, rng, false); }

// Projects an arbitrary-shaped output onto a scalar with fixed random weights.
Tensor64 project(const Tensor64& y, Rng& rng) {
  return ops::sum(ops::mul(y, fixed(y.shape(), rng)));
}

struct GradCase {
  std::string name;
  std::vector<Tensor64> params;
  std::function<Tensor64()> loss;
};

// Every case draws its projection weights once so the loss is a fixed function.
template <typename F>
std::function<Tensor64()> projected(F f, std::uint64_t seed) {
  return [f, seed] {
    Rng rng(seed);
    return project(f(), rng);
  };
}

std::vector<GradCase> primitive_cases(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCase> cases;
  auto salt = [&] { return mix_seed(seed, cases.size() + 100); };

  {
    auto a = leaf({3, 4}, rng), b = leaf({3, 4}, rng);
    cases.push_back({"add", {a, b}, projected([=] { return ops::add(a, b); }, salt())});
  }
  {
    auto a = leaf({3, 4}, rng), b = leaf({3, 4}, rng);
    cases.push_back({"mul", {a, b}, projected([=] { return ops::mul(a, b); }, salt())});
  }
  {
    auto a = leaf({2, 5}, rng);
    cases.push_back({"scale", {a}, projected([=] { return ops::scale(a, -1.7); }, salt())});
  }
  {
    auto a = leaf({4, 3}, rng);
    cases.push_back({"sum", {a}, [=] { return ops::scale(ops::sum(a), 0.5); }});
  }
  {
    auto a = leaf({3, 5}, rng);
    cases.push_back({"transpose", {a}, projected([=] { return ops::transpose(a); }, salt())});
  }
  {
    auto a = leaf({6, 3}, rng);
    cases.push_back(
        {"slice_rows", {a}, projected([=] { return ops::slice_rows(a, 1, 4); }, salt())});
  }
  {
    auto a = leaf({2, 3}, rng), b = leaf({3, 3}, rng);
    cases.push_back(
        {"concat_rows", {a, b}, projected([=] { return ops::concat_rows<double>({a, b}); }, salt())});
  }
  {
    auto a = leaf({3, 2}, rng);
    cases.push_back({"pad_rows", {a}, projected([=] { return ops::pad_rows(a, 2); }, salt())});
  }
  {
    auto a = leaf({3, 4}, rng), b = leaf({4, 5}, rng);
    cases.push_back({"matmul", {a, b}, projected([=] { return ops::matmul(a, b); }, salt())});
  }
  {
    auto x = leaf({4, 5}, rng), w = leaf({3, 5}, rng), b = leaf({3}, rng);
    cases.push_back({"linear", {x, w, b}, projected([=] { return ops::linear(x, w, b); }, salt())});
  }
  {
    auto x = leaf({3, 9}, rng), w = leaf({4, 3, 3}, rng, 0.5), b = leaf({4}, rng);
    cases.push_back({"conv1d_stride2_pad1", {x, w, b},
                     projected([=] { return ops::conv1d(x, w, b, 2, 1); }, salt())});
  }
  {
    auto x = leaf({2, 8}, rng), w = leaf({3, 2, 3}, rng, 0.5), b = leaf({3}, rng);
    cases.push_back({"conv1d_stride1_pad0", {x, w, b},
                     projected([=] { return ops::conv1d(x, w, b, 1, 0); }, salt())});
  }
  {
    auto x = leaf({3, 6}, rng), g = leaf({6}, rng), b = leaf({6}, rng);
    cases.push_back(
        {"layer_norm", {x, g, b}, projected([=] { return ops::layer_norm(x, g, b); }, salt())});
  }
  {
    auto x = leaf({4, 5}, rng, 1.5);
    cases.push_back({"gelu", {x}, projected([=] { return ops::gelu(x); }, salt())});
  }
  {
    auto x = leaf({3, 5}, rng);
    cases.push_back({"softmax", {x}, projected([=] { return ops::softmax(x); }, salt())});
  }
  {
    auto table = leaf({6, 4}, rng);
    const std::vector<std::int32_t> ids{2, 0, 5, 2, 3};
    cases.push_back({"embedding", {table},
                     projected([=] { return ops::embedding(table, std::span(ids)); }, salt())});
  }
  {
    auto q = leaf({4, 6}, rng), k = leaf({5, 6}, rng), v = leaf({5, 6}, rng);
    cases.push_back({"attention", {q, k, v},
                     projected([=] { return ops::attention(q, k, v, 2, false); }, salt())});
  }
  {
    auto q = leaf({3, 6}, rng), k = leaf({5, 6}, rng), v = leaf({5, 6}, rng);
    cases.push_back({"attention_causal", {q, k, v},
                     projected([=] { return ops::attention(q, k, v, 3, true, 2); }, salt())});
  }
  {
    auto logits = leaf({5, 7}, rng);
    const std::vector<std::int32_t> targets{1, 6, 0, 3, 3};
    const std::vector<bool> mask{true, false, true, true, false};
    cases.push_back({"cross_entropy", {logits}, [=] {
                       return ops::cross_entropy(logits, std::span(targets), mask);
                     }});
    cases.push_back({"cross_entropy_sum", {logits}, [=] {
                       return ops::cross_entropy_sum(logits, std::span(targets), mask);
                     }});
  }
  return cases;
}

GradCase aligner_case(std::uint64_t seed) {
  AlignerConfig cfg;
  cfg.d_enc = 8;
  cfg.d_dec = 6;
  cfg.bottleneck_dim = 4;
  auto aligner = std::make_shared<ModalityAligner<double>>(cfg, seed);
  Rng rng(mix_seed(seed, 7));
  std::vector<Tensor64> params;
  for (auto& p : aligner->parameters()) {
    // Move the zero-initialized adapter off its identity point so every
    // parameter receives a nonzero gradient.
    auto values = p.tensor.mutable_data();
    std::normal_distribution<double> dist(0.0, 0.3);
    if (p.name.find(".up.") != std::string::npos) {
      for (auto& v : values) v = dist(rng);
    }
    params.push_back(p.tensor);
  }
  auto enc = leaf({7, cfg.d_enc}, rng);
  params.push_back(enc);
  return {"aligner", params,
          projected([aligner, enc] { return aligner->align(enc).embeddings; }, mix_seed(seed, 8))};
}

CheckResult run_case(const GradCase& c, double bound) {
  const auto start = Clock::now();
  CheckResult r;
  r.name = "gradcheck/" + c.name;
  r.threshold = bound;
  try {
    r.value = gradcheck(c.loss, c.params);
    r.pass = r.value < bound;
    std::ostringstream os;
    os << "max relative error " << r.value;
    r.detail = os.str();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = e.what();
  }
  r.seconds = seconds_since(start);
  return r;
}

std::vector<std::int32_t> random_ids(std::size_t n, std::size_t vocab, Rng& rng) {
  std::uniform_int_distribution<std::int32_t> dist(0, static_cast<std::int32_t>(vocab) - 1);
  std::vector<std::int32_t> ids(n);
  for (auto& id : ids) id = dist(rng);
  return ids;
}

}  // namespace

double gradcheck(const std::function<Tensor64()>& loss, std::vector<Tensor64> params, double eps) {
  for (auto& p : params) {
    if (!p.trainable()) throw Error("gradcheck: parameter is not trainable");
    p.zero_grad();
  }
  const Tensor64 out = loss();
  if (out.size() != 1) throw ShapeError("gradcheck: loss is not scalar");
  out.backward();

  double worst = 0.0;
  NoGradGuard no_grad;
  for (auto& p : params) {
    const std::vector<double> analytic =
        p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                     : std::vector<double>(p.size(), 0.0);
    auto values = p.mutable_data();
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = loss().item();
      values[i] = saved - eps;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      diff = std::max(diff, std::abs(analytic[i] - numeric));
      scale = std::max(scale, std::abs(analytic[i]) + std::abs(numeric));
    }
    worst = std::max(worst, diff / std::max(scale, 1e-8));
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

std::vector<CheckResult> gradient_suite(std::uint64_t seed) {
  constexpr double kBound = 1e-4;
  std::vector<CheckResult> results;
  for (const auto& c : primitive_cases(seed)) results.push_back(run_case(c, kBound));
  results.push_back(run_case(aligner_case(mix_seed(seed, 1)), kBound));
  return results;
}

CheckResult lora_identity_check(std::uint64_t seed, std::size_t n_sequences) {
  const auto start = Clock::now();
  CheckResult r;
  r.name = "lora_identity";
  r.threshold = 0.0;

  DecoderConfig cfg;
  cfg.vocab_size = 300;
  cfg.d_model = 32;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.max_positions = 64;
  const Decoder base(cfg, mix_seed(seed, 1));
  Decoder adapted(cfg, mix_seed(seed, 1));
  adapted.inject_lora(LoraConfig{}, mix_seed(seed, 2));

  Rng rng(mix_seed(seed, 3));
  std::uniform_int_distribution<std::size_t> len_dist(1, cfg.max_positions);
  std::size_t mismatches = 0;
  {
    NoGradGuard no_grad;
    for (std::size_t s = 0; s < n_sequences; ++s) {
      MultimodalSequence seq;
      seq.ids = random_ids(len_dist(rng), cfg.vocab_size, rng);
      const auto a = base.forward(seq, Tensor{});
      const auto b = adapted.forward(seq, Tensor{});
      if (a.size() != b.size() ||
          std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) != 0) {
        ++mismatches;
      }
    }
  }

  const auto base_before = hash_params(adapted.base_parameters());
  auto lora = adapted.lora_parameters();
  std::vector<std::uint64_t> lora_before;
  for (const auto& p : lora) lora_before.push_back(hash_params({p}));

  MultimodalSequence seq;
  seq.ids = random_ids(24, cfg.vocab_size, rng);
  const auto logits = adapted.forward(seq, Tensor{});
  std::vector<std::int32_t> targets(seq.ids.begin() + 1, seq.ids.end());
  targets.push_back(seq.ids.front());
  std::vector<bool> mask(seq.ids.size(), true);
  mask.back() = false;
  ops::cross_entropy(logits, std::span<const std::int32_t>(targets), mask).backward();

  std::size_t base_grads = 0;
  for (const auto& p : adapted.base_parameters()) base_grads += p.tensor.has_grad() ? 1 : 0;
  AdamW opt(lora, AdamWConfig{});
  opt.step();

  const bool base_unchanged = hash_params(adapted.base_parameters()) == base_before;
  std::size_t moved = 0;
  for (std::size_t i = 0; i < lora.size(); ++i) {
    moved += hash_params({lora[i]}) != lora_before[i] ? 1 : 0;
  }

  r.value = static_cast<double>(mismatches);
  r.pass = mismatches == 0 && base_unchanged && base_grads == 0 && moved >= 1;
  std::ostringstream os;
  os << mismatches << "/" << n_sequences << " logit mismatches, base hash "
     << (base_unchanged ? "unchanged" : "CHANGED") << ", " << base_grads
     << " base grads, " << moved << "/" << lora.size() << " LoRA matrices moved";
  r.detail = os.str();
  r.seconds = seconds_since(start);
  return r;
}

CheckResult shape_law_check(std::uint64_t seed) {
  const auto start = Clock::now();
  CheckResult r;
  r.name = "shape_law";
  r.threshold = 375;
  try {
    EncoderConfig enc_cfg;
    const SpeechEncoder encoder(enc_cfg, mix_seed(seed, 1));
    AlignerConfig al_cfg;
    al_cfg.d_enc = enc_cfg.d_model;
    al_cfg.d_dec = 64;
    const ModalityAligner<float> aligner(al_cfg, mix_seed(seed, 2));

    constexpr int kRate = 16000;
    Rng rng(mix_seed(seed, 3));
    std::normal_distribution<float> noise(0.0f, 0.05f);
    std::vector<float> samples(static_cast<std::size_t>(30 * kRate));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      samples[i] = 0.3f * static_cast<float>(std::sin(2.0 * std::numbers::pi * 440.0 * i / kRate)) +
                   noise(rng);
    }
    const auto mel = log_mel(samples, kRate, enc_cfg.mel_config());
    NoGradGuard no_grad;
    const auto encoded = encoder.encode(mel);
    const auto aligned = aligner.align(encoded).embeddings;
    r.value = static_cast<double>(aligned.dim(0));
    r.pass = mel.frames == 3000 && encoded.dim(0) == 1500 && aligned.dim(0) == 375;
    std::ostringstream os;
    os << mel.frames << " mel frames -> " << encoded.dim(0) << " encoder frames -> "
       << aligned.dim(0) << " embeddings";
    r.detail = os.str();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = e.what();
  }
  r.seconds = seconds_since(start);
  if (r.seconds >= 1.0) {
    r.pass = false;
    r.detail += " (exceeded 1 s)";
  }
  return r;
}

}  // namespace whisma::diagnostics
