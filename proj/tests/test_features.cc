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

#include <doctest.h>

#include "oracles.h"
#include "serforge/error.h"
#include "serforge/features.h"
#include "test_util.h"
#include "tolerances.h"

using namespace serforge;

namespace {

Waveform RandomSignal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Waveform w{std::vector<double>(n), 16000};
  for (auto& v : w.samples) v = UniformRange(rng, -1, 1);
  return w;
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("mel scale anchors") {
    CHECK(HzToMel(0.0) == 0.0);
    CHECK(std::abs(HzToMel(1000.0) - oracle::HtkMel(1000.0)) < 1e-9);
    CHECK(std::abs(HzToMel(1000.0) - 1000.0) <= tol::kMel1000);
    for (double hz : {50.0, 440.0, 4000.0}) CHECK(MelToHz(HzToMel(hz)) == doctest::Approx(hz).epsilon(1e-12));
  }

  TEST_CASE("frame count") {
    FeatureConfig cfg;
    CHECK(NumFrames(160000, cfg) == 998);
    CHECK(NumFrames(400, cfg) == 1);
    CHECK(NumFrames(399, cfg) == 0);
  }

  TEST_CASE("stft equals the naive DFT oracle") {
    FeatureConfig cfg;
    const auto w = RandomSignal(16000, 42);
    const auto s = Stft(w, cfg);
    double worst = 0.0;
    for (int f = 0; f < s.frames; f += 7) {
      const auto ref = oracle::NaiveDftFrame(w.samples, static_cast<std::size_t>(f) * cfg.hop, cfg.frame_length,
                                             cfg.fft_size);
      for (int k = 0; k < s.bins; ++k) worst = std::max(worst, std::abs(s.at(f, k) - ref[k]));
    }
    CHECK(worst <= tol::kStftVsDft);
  }

  TEST_CASE("constant signal concentrates in bin 0") {
    // With frame length equal to the FFT size the periodic Hann window has
    // exactly three non-zero DFT coefficients: bins 0 and +-1.
    FeatureConfig cfg;
    cfg.frame_length = cfg.fft_size = 512;
    const double c = 0.37;
    const auto s = Stft(Waveform{std::vector<double>(4000, c), 16000}, cfg);
    double wsum = 0;
    for (double v : oracle::PeriodicHann(512)) wsum += v;
    for (int f = 0; f < s.frames; ++f) {
      const double x0 = std::abs(s.at(f, 0));
      CHECK(x0 == doctest::Approx(c * wsum).epsilon(1e-12));
      CHECK(std::abs(s.at(f, 1)) == doctest::Approx(x0 / 2).epsilon(1e-9));
      for (int k = 2; k < s.bins; ++k) CHECK(std::abs(s.at(f, k)) <= 1e-9 * x0);
    }
  }

  TEST_CASE("bin-centred sinusoid peaks at its bin") {
    FeatureConfig cfg;
    for (int k : {10, 64, 200}) {
      const double hz = static_cast<double>(k) * 16000 / cfg.fft_size;
      const auto s = Stft(Waveform{testutil::Sine(hz, 16000, 8000), 16000}, cfg);
      for (int f = 0; f < s.frames; ++f) {
        int best = 0;
        for (int b = 1; b < s.bins; ++b) {
          if (std::abs(s.at(f, b)) > std::abs(s.at(f, best))) best = b;
        }
        CHECK(best == k);
      }
    }
  }

  TEST_CASE("too-short signal is a framing error") {
    try {
      Stft(Waveform{std::vector<double>(100, 0.1), 16000}, FeatureConfig{});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kFraming);
    }
  }

  TEST_CASE("mel filterbank shape and triangles") {
    FeatureConfig cfg;
    const auto fb = MelFilterbank(cfg, 16000);
    REQUIRE(fb.rows() == cfg.n_mels);
    REQUIRE(fb.cols() == cfg.fft_size / 2 + 1);
    const double lo = HzToMel(cfg.fmin), hi = HzToMel(cfg.fmax);
    for (int m = 0; m < fb.rows(); ++m) {
      int arg = 0;
      for (int k = 0; k < fb.cols(); ++k) {
        CHECK(fb(m, k) >= 0.0);
        if (fb(m, k) > fb(m, arg)) arg = k;
      }
      const double center_hz = MelToHz(lo + (hi - lo) * (m + 1) / (cfg.n_mels + 1));
      const double center_bin = center_hz * cfg.fft_size / 16000;
      CHECK(std::abs(arg - center_bin) <= 1.0);
    }
  }

  TEST_CASE("filterbank with an empty filter is rejected") {
    FeatureConfig cfg;
    cfg.fft_size = 512;
    CHECK_THROWS_AS(MelFilterbank(cfg, 16000), Error);
  }

  TEST_CASE("log-mel of silence is the log floor") {
    FeatureConfig cfg;
    const auto lm = LogMel(Waveform{std::vector<double>(16000, 0.0), 16000}, cfg);
    for (double v : lm.data.values()) CHECK(v == std::log(cfg.log_floor));
  }

  TEST_CASE("log-mel of a 10 s input is 998 x 128") {
    const auto lm = LogMel(RandomSignal(160000, 1), FeatureConfig{});
    CHECK(lm.frames() == 998);
    CHECK(lm.bins() == 128);
  }

  TEST_CASE("doubling the waveform adds log 4") {
    FeatureConfig cfg;
    auto w = RandomSignal(8000, 2);
    const auto a = LogMel(w, cfg);
    for (auto& v : w.samples) v *= 2;
    const auto b = LogMel(w, cfg);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      if (a.data[i] > std::log(cfg.log_floor) + 5) CHECK(b.data[i] - a.data[i] == doctest::Approx(std::log(4.0)).epsilon(1e-9));
    }
  }

  TEST_CASE("DCT basis is orthonormal") {
    const auto d = DctMatrix(128, 128);
    const auto prod = d.matrix() * d.matrix().transpose();
    double worst = 0;
    for (int i = 0; i < 128; ++i)
      for (int j = 0; j < 128; ++j) worst = std::max(worst, std::abs(prod(i, j) - (i == j ? 1.0 : 0.0)));
    CHECK(worst <= tol::kDct);
  }

  TEST_CASE("mfcc equals the double-loop DCT-II oracle") {
    FeatureConfig cfg;
    FeatureExtractor fx(cfg);
    Rng rng(8);
    Spectrogram lm;
    lm.data = testutil::RandomTensor<double>({5, cfg.n_mels}, rng, 10.0);
    const auto m = fx.MfccFromLogMel(lm);
    for (int f = 0; f < 5; ++f) {
      std::vector<double> row(lm.data.data() + f * cfg.n_mels, lm.data.data() + (f + 1) * cfg.n_mels);
      const auto ref = oracle::DctII(row, cfg.n_mfcc);
      for (int k = 0; k < cfg.n_mfcc; ++k) CHECK(std::abs(m.data(f, k) - ref[k]) <= tol::kDct);
    }
  }

  TEST_CASE("mfcc of a constant log-mel frame") {
    FeatureConfig cfg;
    FeatureExtractor fx(cfg);
    Spectrogram lm;
    lm.data = Tensor<double>({1, cfg.n_mels}, -3.5);
    const auto m = fx.MfccFromLogMel(lm);
    CHECK(m.data(0, 0) == doctest::Approx(-3.5 * std::sqrt(128.0)).epsilon(1e-12));
    for (int k = 1; k < cfg.n_mfcc; ++k) CHECK(std::abs(m.data(0, k)) <= tol::kDct);
  }

  TEST_CASE("feature config hash tracks every field") {
    FeatureConfig a, b;
    CHECK(a.Hash() == b.Hash());
    b.n_mels = 64;
    CHECK(a.Hash() != b.Hash());
  }
}
