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

#ifndef SERFORGE_CONFIG_H_
#define SERFORGE_CONFIG_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "serforge/augment.h"
#include "serforge/dataset.h"
#include "serforge/features.h"
#include "serforge/models.h"
#include "serforge/train.h"

namespace serforge {

struct DatasetConfig {
  // Exactly one source: a CREMA-D directory, a manifest CSV, or the toy corpus.
  std::string crema_dir;
  std::string manifest;
  int toy_per_class = 0;
  ToyOptions toy;
  double max_seconds = kDefaultMaxSeconds;
  std::array<double, 3> split_ratios{0.70, 0.15, 0.15};
  // Reuse a saved split instead of drawing one.
  std::string split_file;
  // Feature cache directory; SER_FORGE_CACHE overrides when set.
  std::string cache_dir;
};

struct EvalConfig {
  int warmup = 10;
  int reps = 100;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  FeatureConfig features;
  AugmentConfig augment;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::string output_dir = "runs/default";
  // Master seed; every random stream is derived from it.
  std::uint64_t seed = 0;

  void Validate() const;
  nlohmann::json ToJson() const;
  std::string Hash() const;
};

// Both readers reject unknown keys and report errors with the field path.
ExperimentConfig ParseConfigJson(const nlohmann::json& j);
ExperimentConfig ParseConfigToml(std::string_view text, std::string_view source = "config");
// By extension: .json is JSON, anything else TOML.
ExperimentConfig LoadConfig(const std::filesystem::path& path);

}  // namespace serforge

#endif  // SERFORGE_CONFIG_H_
