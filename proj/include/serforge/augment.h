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

#ifndef SERFORGE_AUGMENT_H_
#define SERFORGE_AUGMENT_H_

#include <cstdint>
#include <limits>
#include <utility>

#include "serforge/audio_io.h"
#include "serforge/rng.h"

namespace serforge {

inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

struct AugmentConfig {
  std::pair<double, double> gain_db_range{-6.0, 6.0};
  std::pair<double, double> noise_snr_db_range{15.0, 40.0};
  std::pair<double, double> pitch_factor_range{0.95, 1.05};
  double max_shift_fraction = 0.25;
  double gain_probability = 0.5;
  double noise_probability = 0.5;
  double pitch_probability = 0.5;
  double shift_probability = 0.5;
  std::uint64_t seed = 0;

  // Throws a config error naming the offending field.
  void Validate() const;
};

// Multiplies by 10^(gain_db / 20). No clipping.
Waveform ApplyGain(const Waveform& w, double gain_db);

// Adds i.i.d. Gaussian noise with mean-square power P_signal / 10^(snr_db/10).
// snr_db == +inf is the identity.
Waveform AddGaussianNoise(const Waveform& w, double snr_db, Rng& rng);

// Resamples by 1/factor and reinterprets at the original rate, raising pitch
// by `factor`; the result is padded or trimmed to the input length.
Waveform PitchShiftByResample(const Waveform& w, double factor);

// out[i] = in[(i - shift) mod len]
Waveform TimeShiftCircular(const Waveform& w, std::int64_t shift);

// gain -> noise -> pitch -> shift, each applied with its probability and a
// uniformly drawn parameter, then peak normalization. The random stream is a
// pure function of (cfg.seed, sample_index, epoch).
Waveform AugmentPipeline(const Waveform& w, const AugmentConfig& cfg, std::uint64_t sample_index,
                         std::uint64_t epoch);

}  // namespace serforge

#endif  // SERFORGE_AUGMENT_H_
