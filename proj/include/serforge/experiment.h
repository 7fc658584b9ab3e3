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

#ifndef SERFORGE_EXPERIMENT_H_
#define SERFORGE_EXPERIMENT_H_

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "serforge/config.h"
#include "serforge/eval.h"
#include "serforge/pipeline.h"
#include "serforge/train.h"

namespace serforge {

struct RunOptions {
  int workers = 1;
  // Single worker; timing goes to timing.json so report.json is reproducible.
  bool deterministic = false;
  bool dry_run = false;
  // Replaces the config's output_dir when non-empty.
  std::string output_dir;
  std::ostream* log = nullptr;
};

struct Data {
  Corpus corpus;
  SplitAssignment split;
};

// Corpus and speaker-independent split described by the dataset section.
Data LoadData(const ExperimentConfig& cfg);

// Feature cache directory: SER_FORGE_CACHE when set, else dataset.cache_dir.
std::string ResolveCacheDir(const ExperimentConfig& cfg);

PipelineOptions MakePipelineOptions(const ExperimentConfig& cfg, int workers);

// Fills the model's input geometry from the feature settings and finalizes it.
void ResolveModelInput(ExperimentConfig& cfg);

struct TrainOutcome {
  std::filesystem::path run_dir;
  TrainHistory history;
  EvalReport report;
  double dry_run_loss = 0.0;
};

// Run directory layout: config.json, split.json, history.{json,csv},
// checkpoint.bin and the evaluation report files.
TrainOutcome RunTrain(ExperimentConfig cfg, const RunOptions& opt);

struct AblationOutcome {
  std::vector<TrainOutcome> runs;  // Linear, MLP, AttentivePool
  bool identical_data_order = false;
};

// Trains every head kind with otherwise identical settings under
// <output_dir>/<head>/ and writes the combined report to <output_dir>.
AblationOutcome RunAblate(ExperimentConfig cfg, const RunOptions& opt);

// Evaluates a checkpoint on one split of the data it was trained with.
EvalReport RunEval(const std::filesystem::path& checkpoint, const std::string& split,
                   const RunOptions& opt);

struct PrepareSummary {
  std::size_t samples = 0;
  std::vector<std::string> rejected;
  // counts[split][emotion]
  std::array<std::array<std::size_t, 6>, 3> counts{};
};

// Builds manifest.csv and split.json under `out`. With `toy_per_class` > 0
// the synthetic corpus is written as WAV files instead of scanning `data_dir`.
PrepareSummary RunPrepare(const std::string& data_dir, int toy_per_class, const std::filesystem::path& out,
                          std::uint64_t seed, const std::array<double, 3>& ratios,
                          const ToyOptions& toy = {}, std::ostream* log = nullptr);

// Writes cached model inputs for every sample of the experiment corpus.
std::size_t RunFeaturizeCorpus(const ExperimentConfig& cfg, const std::filesystem::path& out,
                               int workers);
// Features of each WAV under `in` (file or directory) to <out>/<stem>.f32.
std::size_t RunFeaturizeFiles(const std::filesystem::path& in, const std::filesystem::path& out,
                              InputKind kind, const FeatureConfig& features, double max_seconds);

// `count` augmented renditions of one file, aug_<k>.wav for epoch k.
std::vector<std::filesystem::path> RunAugmentPreview(const std::filesystem::path& in,
                                                     std::uint64_t seed,
                                                     const std::filesystem::path& out, int count,
                                                     const AugmentConfig& augment,
                                                     double max_seconds);

}  // namespace serforge

#endif  // SERFORGE_EXPERIMENT_H_
