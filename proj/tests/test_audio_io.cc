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

#include "serforge/audio_io.h"
#include "serforge/error.h"
#include "test_util.h"
#include "tolerances.h"

using namespace serforge;

TEST_SUITE("audio_io") {
  TEST_CASE("mono PCM16 sample 16384 decodes to 0.5") {
    const auto w = DecodeWav(testutil::Pcm16Wav(1, 22050, {16384}));
    REQUIRE(w.samples.size() == 1);
    CHECK(w.samples[0] == 0.5);
    CHECK(w.sample_rate == 22050);
  }

  TEST_CASE("stereo frames are averaged to mono") {
    const auto l = static_cast<std::int16_t>(std::lround(0.2 * 32768));
    const auto r = static_cast<std::int16_t>(std::lround(0.4 * 32768));
    const auto w = DecodeWav(testutil::Pcm16Wav(2, 16000, {l, r}));
    REQUIRE(w.samples.size() == 1);
    CHECK(w.samples[0] == doctest::Approx(0.3).epsilon(1e-4));
  }

  TEST_CASE("RIFX magic is a decode error") {
    try {
      DecodeWav(testutil::Pcm16Wav(1, 16000, {1, 2}, "RIFX"));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDecode);
    }
  }

  TEST_CASE("truncated data chunk is a decode error") {
    auto bytes = testutil::Pcm16Wav(1, 16000, {1, 2, 3, 4});
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(DecodeWav(bytes), Error);
  }

  TEST_CASE("PCM16 encode then decode round-trips on the 16-bit grid") {
    Waveform w{{0.0, 0.5, -0.5, 0.25, -1.0}, 16000};
    const auto back = DecodeWav(EncodeWavPcm16(w));
    CHECK(back.samples == w.samples);
    CHECK(back.sample_rate == 16000);
  }

  TEST_CASE("resampling to the same rate is bitwise identity") {
    Rng rng(3);
    Waveform w{std::vector<double>(1000), 16000};
    for (auto& v : w.samples) v = UniformRange(rng, -1, 1);
    CHECK(Resample(w, 16000).samples == w.samples);
  }

  TEST_CASE("constant signal survives 8 kHz to 16 kHz") {
    Waveform w{std::vector<double>(8000, 0.7), 8000};
    const auto up = Resample(w, 16000);
    REQUIRE(up.samples.size() == 16000);
    CHECK(up.sample_rate == 16000);
    double worst = 0.0;
    for (double v : up.samples) worst = std::max(worst, std::abs(v - 0.7));
    CHECK(worst <= tol::kResampleConstant);
  }

  TEST_CASE("440 Hz sine upsampled matches the analytic 16 kHz sine") {
    Waveform w{testutil::Sine(440, 8000, 8000), 8000};
    const auto up = Resample(w, 16000);
    const auto ref = testutil::Sine(440, 16000, up.samples.size());
    CHECK(testutil::Correlation(up.samples, ref) >= tol::kResampleCorrelation);
  }

  TEST_CASE("pad or trim") {
    Waveform longw{std::vector<double>(12 * 16000, 0.1), 16000};
    longw.samples[0] = 0.9;
    const auto t = PadOrTrim(longw, 10.0);
    REQUIRE(t.samples.size() == 160000);
    CHECK(std::equal(t.samples.begin(), t.samples.end(), longw.samples.begin()));

    Waveform shortw{std::vector<double>(3 * 16000, 0.2), 16000};
    const auto p = PadOrTrim(shortw, 10.0);
    REQUIRE(p.samples.size() == 160000);
    CHECK(std::equal(shortw.samples.begin(), shortw.samples.end(), p.samples.begin()));
    CHECK(std::all_of(p.samples.begin() + 48000, p.samples.end(), [](double v) { return v == 0.0; }));

    Waveform exact{std::vector<double>(160000, 0.3), 16000};
    CHECK(PadOrTrim(exact, 10.0).samples == exact.samples);
  }

  TEST_CASE("peak normalization") {
    CHECK(PeakNormalize(Waveform{{0.25, -0.5}, 16000}).samples == std::vector<double>{0.5, -1.0});
    CHECK(PeakNormalize(Waveform{{0.0, 0.0, 0.0}, 16000}).samples == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(PeakNormalize(Waveform{{1.0, 0.3}, 16000}).samples == std::vector<double>{1.0, 0.3});
  }

  TEST_CASE("canonical form is 16 kHz and fixed length, amplitude kept") {
    Waveform w{testutil::Sine(200, 8000, 4000, 0.3), 8000};
    const auto c = Canonicalize(w, 1.0);
    CHECK(c.sample_rate == kCanonicalRate);
    CHECK(c.samples.size() == 16000);
    double peak = 0;
    for (double v : c.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak == doctest::Approx(0.3).epsilon(0.01));
  }

  TEST_CASE("WAV file round trip through disk") {
    const auto dir = testutil::ScratchDir("audio_io");
    Waveform w{{0.5, -0.25, 0.125}, 16000};
    WriteWav(dir / "a.wav", w);
    CHECK(ReadWav(dir / "a.wav").samples == w.samples);
    CHECK_THROWS_AS(ReadWav(dir / "missing.wav"), Error);
  }
}
