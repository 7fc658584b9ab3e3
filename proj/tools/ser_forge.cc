// Copyright 2026 The ser-forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// ser-forge: batch command-line driver for training and evaluating SER models.

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>

#include "serforge/config.h"
#include "serforge/dataset.h"
#include "serforge/error.h"
#include "serforge/experiment.h"

namespace {

using namespace serforge;

void PrintPrepareSummary(const PrepareSummary& s) {
  std::cout << "samples: " << s.samples << "  rejected: " << s.rejected.size() << "\n";
  std::cout << std::left << std::setw(8) << "split";
  for (const auto& name : kEmotionNames) std::cout << std::setw(9) << name;
  std::cout << "total\n";
  for (int sp = 0; sp < 3; ++sp) {
    std::size_t total = 0;
    std::cout << std::setw(8) << kSplitNames[sp];
    for (int e = 0; e < kNumEmotions; ++e) {
      std::cout << std::setw(9) << s.counts[sp][e];
      total += s.counts[sp][e];
    }
    std::cout << total << "\n";
  }
}

void PrintReport(const EvalReport& r) {
  std::cout << std::fixed << std::setprecision(4) << r.model << " [" << r.split << ", " << r.samples
            << " samples] accuracy " << r.metrics.accuracy << " macro-P " << r.metrics.macro_precision
            << " macro-R " << r.metrics.macro_recall << " macro-F1 " << r.metrics.macro_f1 << "\n";
}

InputKind ParseKind(const std::string& s) {
  if (s == "log_mel" || s == "logmel") return InputKind::kLogMel;
  if (s == "mfcc") return InputKind::kMfcc;
  Fail(ErrorKind::kConfig, "--kind: expected log_mel or mfcc, got '" + s + "'");
}

int Run(int argc, char** argv) {
  CLI::App app{"Speech emotion recognition experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  int workers = 1;
  bool deterministic = false;
  auto add_run_flags = [&](CLI::App* c) {
    c->add_option("--workers", workers, "data pipeline threads")->check(CLI::PositiveNumber);
    c->add_flag("--deterministic", deterministic, "single-threaded, bitwise reproducible run");
  };

  auto* prepare = app.add_subcommand("prepare", "build manifest.csv and split.json");
  std::string data_dir;
  std::string prep_out;
  int toy = 0;
  std::uint64_t prep_seed = 0;
  double toy_seconds = 2.0;
  auto* data_opt = prepare->add_option("--data-dir", data_dir, "directory of CREMA-D WAV files");
  auto* toy_opt = prepare->add_option("--toy", toy, "synthetic clips per class instead of CREMA-D")
                      ->check(CLI::PositiveNumber);
  data_opt->excludes(toy_opt);
  prepare->add_option("--out", prep_out, "output directory")->required();
  prepare->add_option("--seed", prep_seed, "split and synthesis seed");
  prepare->add_option("--toy-seconds", toy_seconds, "synthetic clip length")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "train one model and evaluate it on the test split");
  std::string config_path;
  std::string out_dir;
  bool dry_run = false;
  train->add_option("--config", config_path, "TOML or JSON experiment config")->required();
  train->add_flag("--dry-run", dry_run, "one forward/backward pass, no training");
  train->add_option("--out", out_dir, "run directory (overrides output_dir)");
  add_run_flags(train);

  auto* ablate = app.add_subcommand("ablate", "train Linear, MLP and AttentivePool heads");
  ablate->add_option("--config", config_path, "TOML or JSON experiment config")->required();
  ablate->add_option("--out", out_dir, "output directory (overrides output_dir)");
  add_run_flags(ablate);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint;
  std::string split = "test";
  eval->add_option("--checkpoint", checkpoint, "checkpoint.bin of a run")->required();
  eval->add_option("--split", split, "train, val or test");
  eval->add_option("--out", out_dir, "write report files here");
  add_run_flags(eval);

  auto* featurize = app.add_subcommand("featurize", "dump features as float32 with JSON sidecars");
  std::string in_path;
  std::string kind = "log_mel";
  double max_seconds = 10.0;
  featurize->add_option("--in", in_path, "WAV file or directory");
  featurize->add_option("--config", config_path, "featurize the whole experiment corpus into its cache");
  featurize->add_option("--out", out_dir, "output directory")->required();
  featurize->add_option("--kind", kind, "log_mel or mfcc (with --in)");
  featurize->add_option("--max-seconds", max_seconds, "crop or pad length (with --in)")
      ->check(CLI::PositiveNumber);
  featurize->add_option("--workers", workers)->check(CLI::PositiveNumber);

  auto* preview = app.add_subcommand("augment-preview", "write augmented renditions of one WAV");
  std::uint64_t aug_seed = 0;
  int count = 4;
  preview->add_option("--in", in_path, "input WAV")->required();
  preview->add_option("--seed", aug_seed, "augmentation seed");
  preview->add_option("--out", out_dir, "output directory")->required();
  preview->add_option("--count", count, "number of renditions")->check(CLI::PositiveNumber);
  preview->add_option("--config", config_path, "take the augment section from this config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error[usage]: " << msg << "\n";
    return 2;
  }

  RunOptions opt;
  opt.workers = workers;
  opt.deterministic = deterministic;
  opt.output_dir = out_dir;
  opt.log = &std::cerr;

  if (*prepare) {
    if (data_dir.empty() && toy == 0) Fail(ErrorKind::kConfig, "prepare: give --data-dir or --toy");
    ToyOptions t;
    t.seconds = toy_seconds;
    const auto s = RunPrepare(data_dir, toy, prep_out, prep_seed, {0.70, 0.15, 0.15}, t, &std::cerr);
    PrintPrepareSummary(s);
  } else if (*train) {
    opt.dry_run = dry_run;
    const auto outcome = RunTrain(LoadConfig(config_path), opt);
    if (dry_run) {
      std::cout << "dry run ok: loss " << outcome.dry_run_loss << "\n";
    } else {
      PrintReport(outcome.report);
      std::cout << "run directory: " << outcome.run_dir.string() << "\n";
    }
  } else if (*ablate) {
    const auto outcome = RunAblate(LoadConfig(config_path), opt);
    for (const auto& run : outcome.runs) PrintReport(run.report);
    std::cout << "identical data order: " << (outcome.identical_data_order ? "yes" : "no") << "\n";
  } else if (*eval) {
    PrintReport(RunEval(checkpoint, split, opt));
  } else if (*featurize) {
    std::size_t n = 0;
    if (!config_path.empty()) {
      n = RunFeaturizeCorpus(LoadConfig(config_path), out_dir, workers);
    } else if (!in_path.empty()) {
      FeatureConfig fc;
      std::filesystem::create_directories(out_dir);
      n = RunFeaturizeFiles(in_path, out_dir, ParseKind(kind), fc, max_seconds);
    } else {
      Fail(ErrorKind::kConfig, "featurize: give --in or --config");
    }
    std::cout << "featurized " << n << " samples into " << out_dir << "\n";
  } else if (*preview) {
    AugmentConfig ac;
    if (!config_path.empty()) {
      const auto cfg = LoadConfig(config_path);
      ac = cfg.augment;
    }
    for (const auto& p : RunAugmentPreview(in_path, aug_seed, out_dir, count, ac, 0.0)) {
      std::cout << p.string() << "\n";
    }
  }
  return 0;
}

std::string OneLine(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Run(argc, argv);
  } catch (const serforge::Error& e) {
    std::cerr << "error[" << e.category() << "]: " << OneLine(e.what()) << "\n";
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error[io]: " << OneLine(e.what()) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << OneLine(e.what()) << "\n";
  }
  return 1;
}
