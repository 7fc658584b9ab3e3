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

#ifndef SERFORGE_DATASET_H_
#define SERFORGE_DATASET_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "serforge/audio_io.h"

namespace serforge {

// Canonical class order: angry, disgust, fear, happy, neutral, sad.
inline constexpr std::array<std::string_view, 6> kEmotionNames{"angry", "disgust", "fear",
                                                               "happy", "neutral", "sad"};
inline constexpr std::array<std::string_view, 6> kEmotionCodes{"ANG", "DIS", "FEA",
                                                               "HAP", "NEU", "SAD"};
// -1 when unknown.
int EmotionFromCode(std::string_view code);
int EmotionFromName(std::string_view name);

struct SampleMeta {
  std::string path;
  int actor_id = 0;
  std::string sentence_code;
  int emotion = 0;
  std::string intensity_code;

  bool operator==(const SampleMeta&) const = default;
};

// ActorID_Sentence_Emotion_Intensity.wav
SampleMeta ParseCremaFilename(const std::string& path);

struct ManifestScan {
  std::vector<SampleMeta> samples;  // sorted by path
  std::vector<std::string> rejected;
};

// Every *.wav directly inside `dir`; unparseable names go to `rejected`.
ManifestScan ScanCremaDirectory(const std::filesystem::path& dir);

inline constexpr std::size_t kCremaClipCount = 7442;

// CSV columns: path,actor_id,sentence,emotion,intensity
void WriteManifestCsv(const std::filesystem::path& path, const std::vector<SampleMeta>& samples);
std::vector<SampleMeta> ReadManifestCsv(const std::filesystem::path& path);

struct SplitAssignment {
  std::uint64_t seed = 0;
  std::array<double, 3> ratios{0.70, 0.15, 0.15};
  std::array<std::vector<int>, 3> actors;          // train, val, test (sorted)
  std::array<std::vector<std::size_t>, 3> samples;  // indices into the manifest

  const std::vector<std::size_t>& train() const { return samples[0]; }
  const std::vector<std::size_t>& val() const { return samples[1]; }
  const std::vector<std::size_t>& test() const { return samples[2]; }

  // Split error when an actor id occurs in two splits.
  void CheckDisjoint() const;
};

inline constexpr std::array<std::string_view, 3> kSplitNames{"train", "val", "test"};
int SplitIndex(std::string_view name);

// Actors are shuffled with `seed`; the first three seed the three splits,
// every later actor joins the split furthest below its sample target.
SplitAssignment SpeakerIndependentSplit(const std::vector<SampleMeta>& samples,
                                        const std::array<double, 3>& ratios, std::uint64_t seed);

nlohmann::json SplitToJson(const SplitAssignment& split);
// Rebuilds the induced sample lists against `samples`.
SplitAssignment SplitFromJson(const nlohmann::json& j, const std::vector<SampleMeta>& samples);

// ---- Synthetic toy corpus --------------------------------------------------

struct ToyOptions {
  double seconds = 2.0;
  int sample_rate = kCanonicalRate;
  int samples_per_actor = 10;
};

struct ToyRecipe {
  double f0_hz;
  double am_rate_hz;
  double noise_level;  // noise RMS relative to the voiced signal RMS
  double rolloff;      // amplitude ratio between consecutive harmonics
};

const ToyRecipe& ToyClassRecipe(int emotion);

// Sample i has emotion i % 6 and actor 1 + i / samples_per_actor; paths are "toy:<i>".
std::vector<SampleMeta> ToyManifest(int n_per_class, const ToyOptions& opt = {});

// Pure function of (seed, sample index, label, actor).
Waveform SynthesizeToySample(std::uint64_t seed, std::size_t index, const SampleMeta& meta,
                             const ToyOptions& opt = {});

struct LabelledWaveform {
  Waveform wave;
  SampleMeta meta;
};

std::vector<LabelledWaveform> SynthesizeToyDataset(int n_per_class, std::uint64_t seed,
                                                   const ToyOptions& opt = {});

// ---- Batching --------------------------------------------------------------

// Order of `split` reshuffled per epoch from (seed, epoch) when `shuffle`;
// the final short batch is kept.
std::vector<std::vector<std::size_t>> MakeBatches(const std::vector<std::size_t>& split,
                                                  int batch_size, std::uint64_t seed,
                                                  std::uint64_t epoch, bool shuffle);

// FNV-1a over the sample indices of a batch.
std::uint64_t BatchHash(const std::vector<std::size_t>& batch);

}  // namespace serforge

#endif  // SERFORGE_DATASET_H_
