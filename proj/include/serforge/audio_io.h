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

#ifndef SERFORGE_AUDIO_IO_H_
#define SERFORGE_AUDIO_IO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace serforge {

inline constexpr int kCanonicalRate = 16000;
inline constexpr double kDefaultMaxSeconds = 10.0;

struct Waveform {
  std::vector<double> samples;  // amplitude in [-1, 1]
  int sample_rate = kCanonicalRate;

  std::size_t size() const noexcept { return samples.size(); }
  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// RIFF/WAVE, PCM 16-bit or IEEE float 32-bit, mono or stereo. Stereo is
// averaged to mono; PCM16 is scaled by 1/32768.
Waveform DecodeWav(std::span<const std::uint8_t> bytes);
Waveform ReadWav(const std::filesystem::path& path);

// Mono PCM16 little-endian. Samples are clipped to [-1, 32767/32768].
std::vector<std::uint8_t> EncodeWavPcm16(const Waveform& w);
void WriteWav(const std::filesystem::path& path, const Waveform& w);

// Windowed-sinc interpolation; output length round(len * target / source).
// Equal rates return the input unchanged.
Waveform Resample(const Waveform& w, int target_rate);

// Resamples by an arbitrary positive ratio (output rate / input rate). The
// result keeps w.sample_rate; callers reinterpret it as needed.
std::vector<double> ResampleByRatio(std::span<const double> samples, double ratio);

// Truncates or zero-pads the tail to exactly round(rate * max_seconds) samples.
Waveform PadOrTrim(const Waveform& w, double max_seconds);

// Scales so max |sample| == 1; silence is returned unchanged.
Waveform PeakNormalize(const Waveform& w);

// Resample to 16 kHz, then pad or trim to max_seconds.
Waveform Canonicalize(const Waveform& w, double max_seconds = kDefaultMaxSeconds);

}  // namespace serforge

#endif  // SERFORGE_AUDIO_IO_H_
