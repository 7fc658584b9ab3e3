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

#include "serforge/augment.h"

#include <cmath>
#include <string>

#include "serforge/error.h"

namespace serforge {
namespace {

void CheckRange(const std::pair<double, double>& r, const char* name) {
  if (!(r.first <= r.second)) {
    Fail(ErrorKind::kConfig, std::string("augment.") + name + ": lower bound exceeds upper bound");
  }
}

void CheckProbability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    Fail(ErrorKind::kConfig, std::string("augment.") + name + " must be in [0, 1]");
  }
}

}  // namespace

void AugmentConfig::Validate() const {
  CheckRange(gain_db_range, "gain_db_range");
  CheckRange(noise_snr_db_range, "noise_snr_db_range");
  CheckRange(pitch_factor_range, "pitch_factor_range");
  if (pitch_factor_range.first <= 0.5 || pitch_factor_range.second >= 2.0) {
    Fail(ErrorKind::kConfig, "augment.pitch_factor_range must lie inside (0.5, 2.0)");
  }
  if (!(max_shift_fraction >= 0.0 && max_shift_fraction <= 1.0)) {
    Fail(ErrorKind::kConfig, "augment.max_shift_fraction must be in [0, 1]");
  }
  CheckProbability(gain_probability, "gain_probability");
  CheckProbability(noise_probability, "noise_probability");
  CheckProbability(pitch_probability, "pitch_probability");
  CheckProbability(shift_probability, "shift_probability");
}

Waveform ApplyGain(const Waveform& w, double gain_db) {
  if (gain_db == 0.0) return w;
  const double g = std::pow(10.0, gain_db / 20.0);
  Waveform out = w;
  for (double& s : out.samples) s *= g;
  return out;
}

Waveform AddGaussianNoise(const Waveform& w, double snr_db, Rng& rng) {
  if (std::isinf(snr_db) && snr_db > 0) return w;
  double power = 0.0;
  for (double s : w.samples) power += s * s;
  if (w.samples.empty() || power == 0.0) {
    Fail(ErrorKind::kDegenerateInput, "cannot set an SNR on an all-zero signal");
  }
  power /= static_cast<double>(w.samples.size());
  const double noise_std = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  Waveform out = w;
  for (double& s : out.samples) s += noise_std * StandardNormal(rng);
  return out;
}

Waveform PitchShiftByResample(const Waveform& w, double factor) {
  if (!(factor > 0.5 && factor < 2.0)) {
    Fail(ErrorKind::kConfig, "pitch factor " + std::to_string(factor) + " outside (0.5, 2.0)");
  }
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples = ResampleByRatio(w.samples, 1.0 / factor);
  out.samples.resize(w.samples.size(), 0.0);
  return out;
}

Waveform TimeShiftCircular(const Waveform& w, std::int64_t shift) {
  const auto n = static_cast<std::int64_t>(w.samples.size());
  if (n == 0) return w;
  const std::int64_t k = ((shift % n) + n) % n;
  if (k == 0) return w;
  Waveform out = w;
  for (std::int64_t i = 0; i < n; ++i) {
    out.samples[static_cast<std::size_t>(i)] = w.samples[static_cast<std::size_t>((i - k + n) % n)];
  }
  return out;
}

Waveform AugmentPipeline(const Waveform& w, const AugmentConfig& cfg, std::uint64_t sample_index,
                         std::uint64_t epoch) {
  Rng rng = MakeRng(cfg.seed, Stream::kAugment, sample_index, epoch);
  // Every decision and parameter is drawn unconditionally so the stream
  // position does not depend on which transforms fire.
  const bool do_gain = UniformUnit(rng) < cfg.gain_probability;
  const double gain = UniformRange(rng, cfg.gain_db_range.first, cfg.gain_db_range.second);
  const bool do_noise = UniformUnit(rng) < cfg.noise_probability;
  const double snr =
      cfg.noise_snr_db_range.first == cfg.noise_snr_db_range.second
          ? cfg.noise_snr_db_range.first
          : UniformRange(rng, cfg.noise_snr_db_range.first, cfg.noise_snr_db_range.second);
  const bool do_pitch = UniformUnit(rng) < cfg.pitch_probability;
  const double factor = UniformRange(rng, cfg.pitch_factor_range.first, cfg.pitch_factor_range.second);
  const bool do_shift = UniformUnit(rng) < cfg.shift_probability;
  const auto max_shift = static_cast<std::int64_t>(
      std::floor(cfg.max_shift_fraction * static_cast<double>(w.samples.size())));
  const std::int64_t shift = UniformInt(rng, -max_shift, max_shift);

  Waveform out = w;
  if (do_gain) out = ApplyGain(out, gain);
  if (do_noise) out = AddGaussianNoise(out, snr, rng);
  if (do_pitch && factor != 1.0) out = PitchShiftByResample(out, factor);
  if (do_shift) out = TimeShiftCircular(out, shift);
  return PeakNormalize(out);
}

}  // namespace serforge
