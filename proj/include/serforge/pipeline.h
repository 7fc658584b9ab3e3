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

#ifndef SERFORGE_PIPELINE_H_
#define SERFORGE_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "serforge/augment.h"
#include "serforge/dataset.h"
#include "serforge/features.h"
#include "serforge/models.h"

namespace serforge {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
// handled exactly once, so per-index outputs are independent of scheduling.
void ParallelFor(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

// Labelled clips, either synthesized on demand or read from WAV files.
class Corpus {
 public:
  static Corpus Toy(int n_per_class, std::uint64_t seed, const ToyOptions& opt = {});
  static Corpus FromManifest(std::vector<SampleMeta> samples);

  const std::vector<SampleMeta>& samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool is_toy() const noexcept { return toy_; }
  // Distinguishes corpora that share sample paths, for cache keys.
  std::string Identity() const;

  Waveform LoadRaw(std::size_t i) const;

 private:
  std::vector<SampleMeta> samples_;
  bool toy_ = false;
  std::uint64_t toy_seed_ = 0;
  ToyOptions toy_options_;
};

struct PipelineOptions {
  InputKind kind = InputKind::kLogMel;
  FeatureConfig features;
  AugmentConfig augment;
  double max_seconds = kDefaultMaxSeconds;
  // Optional on-disk cache of non-augmented inputs.
  std::string cache_dir;
  int workers = 1;
};

// Float32 little-endian payload plus a JSON sidecar at `<bin>.json`.
void WriteFeatureFile(const std::filesystem::path& bin, const Tensor<float>& data,
                      nlohmann::json meta);
Tensor<float> ReadFeatureFile(const std::filesystem::path& bin, nlohmann::json* meta = nullptr);

std::string_view InputKindName(InputKind kind);

// Maps a sample to the model input: canonical audio (16 kHz, fixed length),
// then augmentation ending in peak normalization for training draws or plain
// peak normalization otherwise, then features.
class InputPipeline {
 public:
  InputPipeline(const Corpus& corpus, PipelineOptions opt);

  const PipelineOptions& options() const noexcept { return opt_; }
  const Corpus& corpus() const noexcept { return corpus_; }
  // True when training draws differ from the plain path.
  bool augmenting() const;

  Waveform Canonical(std::size_t i) const;
  Waveform Prepared(std::size_t i, bool augment, std::uint64_t epoch) const;
  Tensor<float> Features(const Waveform& prepared) const;

  // Non-augmented inputs are memoized and, with a cache directory, persisted.
  Tensor<float> Input(std::size_t i, bool augment, std::uint64_t epoch);
  std::vector<Tensor<float>> Inputs(const std::vector<std::size_t>& indices, bool augment,
                                    std::uint64_t epoch);

  std::filesystem::path CachePath(std::size_t i) const;
  // Shape of every input, [frames, bins] or [samples].
  Shape InputShape() const;
  // Per-bin mean and standard deviation over all frames of `indices`.
  std::pair<std::vector<double>, std::vector<double>> BinStatistics(
      const std::vector<std::size_t>& indices);

  std::size_t cache_hits() const noexcept { return cache_hits_; }

 private:
  Tensor<float> Compute(std::size_t i, bool augment, std::uint64_t epoch) const;
  Tensor<float> Plain(std::size_t i);

  const Corpus& corpus_;
  PipelineOptions opt_;
  std::optional<FeatureExtractor> extractor_;
  std::vector<std::optional<Tensor<float>>> memo_;
  std::mutex memo_mu_;
  std::size_t cache_hits_ = 0;
};

}  // namespace serforge

#endif  // SERFORGE_PIPELINE_H_
