// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// whisma: prepare-data | train | infer | evaluate | selftest

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "whisma/app.hpp"
#include "whisma/diagnostics.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int run_selftest(std::uint64_t seed) {
  using whisma::diagnostics::CheckResult;
  std::vector<CheckResult> results = whisma::diagnostics::gradient_suite(seed);
  results.push_back(whisma::diagnostics::lora_identity_check(seed));
  results.push_back(whisma::diagnostics::shape_law_check(seed));
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%s %-32s %s (%.3fs)\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str(),
                r.seconds);
    ok = ok && r.pass;
  }
  std::fflush(stdout);
  return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"whisma: speech-LLM training, inference and evaluation"};
  app.require_subcommand(1);

  whisma::app::PrepareOptions prep;
  auto* prepare = app.add_subcommand("prepare-data", "Build manifests from a source corpus");
  prepare->add_option("--source", prep.source, "micro | slurp | fsc | glue | alpaca")
      ->required()
      ->check(CLI::IsMember({"micro", "slurp", "fsc", "glue", "alpaca"}));
  prepare->add_option("--input", prep.input, "Source annotation file");
  prepare->add_option("--output-dir", prep.output_dir, "Directory for manifests")->required();
  prepare->add_option("--audio-dir", prep.audio_dir, "Prefix for audio paths");
  prepare->add_option("--seed", prep.seed, "Micro-corpus seed");
  prepare->add_option("--n-mels", prep.n_mels, "Micro-corpus mel bins");
  prepare->add_option("--frames", prep.frames, "Micro-corpus frames per utterance");
  prepare->add_option("--fsc-table", prep.fsc_table, "TSV replacing the built-in FSC table");
  prepare->add_flag("--first-recording-only", prep.first_recording_only,
                    "SLURP: one record per utterance");

  std::string train_config, train_output;
  auto* train = app.add_subcommand("train", "Train aligner and LoRA adapters");
  train->add_option("--config", train_config, "Run config JSON")->required();
  train->add_option("--output-dir", train_output, "Override output_dir");

  whisma::app::InferOptions inf;
  std::string infer_config, infer_strategy;
  auto* infer = app.add_subcommand("infer", "Run a trained model over a manifest");
  auto* model_opt = infer->add_option("--model", inf.model_dir, "Directory written by train");
  infer->add_option("--config", infer_config, "Run config; its output_dir is the model")
      ->excludes(model_opt);
  infer->add_option("--manifest", inf.manifest, "Test manifest");
  infer->add_option("--strategy", infer_strategy, "alone | scot | mr")
      ->check(CLI::IsMember({"alone", "scot", "mr"}));
  infer->add_option("--output", inf.output, "Predictions JSONL");
  infer->add_option("--base-dir", inf.base_dir, "Directory audio paths resolve against");

  std::string eval_task, eval_pred, eval_gold, eval_output;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against a gold manifest");
  evaluate->add_option("--task", eval_task, "asr | ic | sf | pp | binary")
      ->required()
      ->check(CLI::IsMember({"asr", "ic", "sf", "pp", "binary"}));
  evaluate->add_option("--pred", eval_pred, "Predictions JSONL")->required();
  evaluate->add_option("--gold", eval_gold, "Gold manifest")->required();
  evaluate->add_option("--output", eval_output, "Report JSON path");

  std::uint64_t selftest_seed = 1;
  auto* selftest = app.add_subcommand("selftest", "Gradient, LoRA-identity and shape-law checks");
  selftest->add_option("--seed", selftest_seed, "Seed for random inputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*prepare) {
      whisma::app::prepare_data(prep);
    } else if (*train) {
      auto config = whisma::load_config(train_config);
      if (!train_output.empty()) config.output_dir = train_output;
      whisma::app::run_train(config);
    } else if (*infer) {
      if (!infer_config.empty()) inf.model_dir = whisma::load_config(infer_config).output_dir;
      if (inf.model_dir.empty()) throw CLI::RequiredError("--model or --config");
      if (!infer_strategy.empty()) inf.strategy = whisma::parse_strategy(infer_strategy);
      whisma::app::run_infer(inf);
    } else if (*evaluate) {
      const auto report = whisma::app::evaluate(whisma::app::parse_eval_task(eval_task), eval_pred,
                                                eval_gold);
      std::cout << report.table;
      if (!eval_output.empty()) {
        std::ofstream os(eval_output, std::ios::binary | std::ios::trunc);
        if (!os) throw whisma::Error("cannot write " + eval_output);
        os << report.json;
      } else {
        std::cout << report.json;
      }
    } else if (*selftest) {
      return run_selftest(selftest_seed);
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << "whisma: " << e.what() << '\n' << app.help();
    return kExitUsage;
  } catch (const whisma::ConfigError& e) {
    whisma::app::log_event("error.config", {{"key", e.key()}, {"detail", e.what()}});
    return kExitUsage;
  } catch (const std::exception& e) {
    whisma::app::log_event("error.runtime", {{"detail", e.what()}});
    return kExitRuntime;
  }
  return 0;
}
