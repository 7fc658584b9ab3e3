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

#ifndef SERFORGE_FEATURES_H_
#define SERFORGE_FEATURES_H_

#include <complex>
#include <string>
#include <vector>

#include "serforge/audio_io.h"
#include "serforge/tensor.h"

namespace serforge {

struct FeatureConfig {
  int frame_length = 400;  // 25 ms at 16 kHz
  int hop = 160;           // 10 ms
  int fft_size = 1024;
  int n_mels = 128;
  double fmin = 0.0;
  double fmax = 8000.0;
  int n_mfcc = 40;
  double log_floor = 1e-10;

  void Validate(int sample_rate) const;
  // Stable hex digest of every field, used to key feature caches.
  std::string Hash() const;
};

enum class BinAxis { kHzLinear, kMel, kMfcc };

// Real features, frames x bins.
struct Spectrogram {
  Tensor<double> data;
  double frame_rate = 0.0;
  BinAxis axis = BinAxis::kMel;

  int frames() const { return data.rows(); }
  int bins() const { return data.cols(); }
};

struct ComplexSpectrogram {
  std::vector<std::complex<double>> data;  // frames x bins, row-major
  int frames = 0;
  int bins = 0;
  double frame_rate = 0.0;

  const std::complex<double>& at(int frame, int bin) const {
    return data[static_cast<std::size_t>(frame) * bins + bin];
  }
};

// Non-centered framing: 1 + floor((len - frame_length) / hop), or 0 when too short.
int NumFrames(std::size_t length, const FeatureConfig& cfg);

// Periodic Hann window.
std::vector<double> HannWindow(int length);

double HzToMel(double hz);
double MelToHz(double mel);

// Hann-windowed frames zero-padded to fft_size; fft_size / 2 + 1 bins.
ComplexSpectrogram Stft(const Waveform& w, const FeatureConfig& cfg);

// HTK-style triangular filters, n_mels x (fft_size / 2 + 1).
Tensor<double> MelFilterbank(const FeatureConfig& cfg, int sample_rate);

// Orthonormal DCT-II basis, n_out x n_in.
Tensor<double> DctMatrix(int n_out, int n_in);

// Owns the filterbank and DCT basis so they are built once per config.
class FeatureExtractor {
 public:
  FeatureExtractor(const FeatureConfig& cfg, int sample_rate = kCanonicalRate);

  const FeatureConfig& config() const { return cfg_; }
  const Tensor<double>& filterbank() const { return filterbank_; }

  // log(max(filterbank · |stft|^2, log_floor)), frames x n_mels.
  Spectrogram LogMel(const Waveform& w) const;
  // DCT-II along the mel axis of LogMel, first n_mfcc coefficients.
  Spectrogram Mfcc(const Waveform& w) const;
  Spectrogram MfccFromLogMel(const Spectrogram& log_mel) const;

 private:
  FeatureConfig cfg_;
  int sample_rate_;
  Tensor<double> filterbank_;
  std::vector<std::pair<int, int>> support_;  // non-zero bin range per filter
  Tensor<double> dct_;
};

Spectrogram LogMel(const Waveform& w, const FeatureConfig& cfg);
Spectrogram Mfcc(const Waveform& w, const FeatureConfig& cfg);

}  // namespace serforge

#endif  // SERFORGE_FEATURES_H_
