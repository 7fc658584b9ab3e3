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

#include "serforge/features.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "serforge/error.h"

namespace serforge {

void FeatureConfig::Validate(int sample_rate) const {
  if (hop <= 0 || frame_length <= 0 || fft_size <= 0) {
    Fail(ErrorKind::kConfig, "features: frame_length, hop and fft_size must be positive");
  }
  if (!(hop <= frame_length && frame_length <= fft_size)) {
    Fail(ErrorKind::kConfig, "features: need hop <= frame_length <= fft_size");
  }
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    Fail(ErrorKind::kConfig, "features: need 0 <= fmin < fmax <= sample_rate / 2");
  }
  if (n_mels < 1 || n_mfcc < 1 || n_mfcc > n_mels) {
    Fail(ErrorKind::kConfig, "features: need 1 <= n_mfcc <= n_mels");
  }
  if (!(log_floor > 0.0)) Fail(ErrorKind::kConfig, "features.log_floor must be positive");
}

std::string FeatureConfig::Hash() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d|%d|%d|%d|%.17g|%.17g|%d|%.17g", frame_length, hop, fft_size,
                n_mels, fmin, fmax, n_mfcc, log_floor);
  // FNV-1a
  std::uint64_t h = 1469598103934665603ULL;
  for (const char* p = buf; *p; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 1099511628211ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

int NumFrames(std::size_t length, const FeatureConfig& cfg) {
  if (length < static_cast<std::size_t>(cfg.frame_length)) return 0;
  return 1 + static_cast<int>((length - cfg.frame_length) / cfg.hop);
}

std::vector<double> HannWindow(int length) {
  std::vector<double> w(length);
  for (int n = 0; n < length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length);
  }
  return w;
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

ComplexSpectrogram Stft(const Waveform& w, const FeatureConfig& cfg) {
  const int frames = NumFrames(w.samples.size(), cfg);
  if (frames == 0) {
    Fail(ErrorKind::kFraming, "signal of " + std::to_string(w.samples.size()) +
                                  " samples is shorter than one frame of " +
                                  std::to_string(cfg.frame_length));
  }
  const auto window = HannWindow(cfg.frame_length);
  ComplexSpectrogram out;
  out.frames = frames;
  out.bins = cfg.fft_size / 2 + 1;
  out.frame_rate = static_cast<double>(w.sample_rate) / cfg.hop;
  out.data.resize(static_cast<std::size_t>(frames) * out.bins);
  Eigen::FFT<double> fft;
  std::vector<double> buf(cfg.fft_size, 0.0);
  std::vector<std::complex<double>> spec;
  for (int f = 0; f < frames; ++f) {
    const std::size_t start = static_cast<std::size_t>(f) * cfg.hop;
    for (int n = 0; n < cfg.frame_length; ++n) buf[n] = w.samples[start + n] * window[n];
    fft.fwd(spec, buf);
    std::copy_n(spec.begin(), out.bins, out.data.begin() + static_cast<std::ptrdiff_t>(f) * out.bins);
  }
  return out;
}

Tensor<double> MelFilterbank(const FeatureConfig& cfg, int sample_rate) {
  cfg.Validate(sample_rate);
  const int bins = cfg.fft_size / 2 + 1;
  const double mel_lo = HzToMel(cfg.fmin);
  const double mel_hi = HzToMel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  }
  Tensor<double> fb(Shape{cfg.n_mels, bins});
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    bool any = false;
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / cfg.fft_size;
      const double up = (f - lo) / (center - lo);
      const double down = (hi - f) / (hi - center);
      const double v = std::max(0.0, std::min(up, down));
      fb(m, k) = v;
      any = any || v > 0.0;
    }
    if (!any) {
      Fail(ErrorKind::kConfig, "features: mel filter " + std::to_string(m) +
                                   " covers no FFT bin; reduce n_mels or raise fft_size");
    }
  }
  return fb;
}

Tensor<double> DctMatrix(int n_out, int n_in) {
  Tensor<double> d(Shape{n_out, n_in});
  for (int k = 0; k < n_out; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
    for (int n = 0; n < n_in; ++n) {
      d(k, n) = s * std::cos(std::numbers::pi * k * (2.0 * n + 1.0) / (2.0 * n_in));
    }
  }
  return d;
}

FeatureExtractor::FeatureExtractor(const FeatureConfig& cfg, int sample_rate)
    : cfg_(cfg),
      sample_rate_(sample_rate),
      filterbank_(MelFilterbank(cfg, sample_rate)),
      dct_(DctMatrix(cfg.n_mfcc, cfg.n_mels)) {
  support_.resize(cfg_.n_mels);
  for (int m = 0; m < cfg_.n_mels; ++m) {
    int first = filterbank_.cols(), last = 0;
    for (int k = 0; k < filterbank_.cols(); ++k) {
      if (filterbank_(m, k) > 0.0) {
        first = std::min(first, k);
        last = k + 1;
      }
    }
    support_[m] = {first, last};
  }
}

Spectrogram FeatureExtractor::LogMel(const Waveform& w) const {
  if (w.sample_rate != sample_rate_) {
    Fail(ErrorKind::kConfig, "feature extractor built for " + std::to_string(sample_rate_) +
                                 " Hz, got " + std::to_string(w.sample_rate) + " Hz");
  }
  const auto spec = Stft(w, cfg_);
  Spectrogram out;
  out.axis = BinAxis::kMel;
  out.frame_rate = spec.frame_rate;
  out.data = Tensor<double>(Shape{spec.frames, cfg_.n_mels});
  std::vector<double> power(spec.bins);
  for (int f = 0; f < spec.frames; ++f) {
    for (int k = 0; k < spec.bins; ++k) power[k] = std::norm(spec.at(f, k));
    for (int m = 0; m < cfg_.n_mels; ++m) {
      double acc = 0.0;
      for (int k = support_[m].first; k < support_[m].second; ++k) acc += filterbank_(m, k) * power[k];
      out.data(f, m) = std::log(std::max(acc, cfg_.log_floor));
    }
  }
  return out;
}

Spectrogram FeatureExtractor::MfccFromLogMel(const Spectrogram& log_mel) const {
  if (log_mel.bins() != cfg_.n_mels) {
    Fail(ErrorKind::kShape, "MFCC expects " + std::to_string(cfg_.n_mels) + " mel bins, got " +
                                std::to_string(log_mel.bins()));
  }
  Spectrogram out;
  out.axis = BinAxis::kMfcc;
  out.frame_rate = log_mel.frame_rate;
  out.data = Tensor<double>(Shape{log_mel.frames(), cfg_.n_mfcc});
  out.data.matrix().noalias() = log_mel.data.matrix() * dct_.matrix().transpose();
  return out;
}

Spectrogram FeatureExtractor::Mfcc(const Waveform& w) const { return MfccFromLogMel(LogMel(w)); }

Spectrogram LogMel(const Waveform& w, const FeatureConfig& cfg) {
  return FeatureExtractor(cfg, w.sample_rate).LogMel(w);
}

Spectrogram Mfcc(const Waveform& w, const FeatureConfig& cfg) {
  return FeatureExtractor(cfg, w.sample_rate).Mfcc(w);
}

}  // namespace serforge
