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

#include "serforge/audio_io.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "serforge/error.h"

namespace serforge {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t ReadU16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t ReadU32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool TagIs(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

void PutU16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void PutTag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

Waveform DecodeWav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !TagIs(bytes, 0, "RIFF") || !TagIs(bytes, 8, "WAVE")) {
    Fail(ErrorKind::kDecode, "not a RIFF/WAVE container (missing RIFF header)");
  }
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::span<const std::uint8_t> data;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = ReadU32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) {
      if (TagIs(bytes, pos, "data")) {
        Fail(ErrorKind::kDecode, "truncated data chunk");
      }
      Fail(ErrorKind::kDecode, "truncated chunk '" + std::string(bytes.begin() + pos, bytes.begin() + pos + 4) + "'");
    }
    if (TagIs(bytes, pos, "fmt ")) {
      if (len < 16) Fail(ErrorKind::kDecode, "fmt chunk too short");
      format = ReadU16(bytes, body);
      channels = ReadU16(bytes, body + 2);
      rate = ReadU32(bytes, body + 4);
      bits = ReadU16(bytes, body + 14);
      if (format == kFormatExtensible && len >= 26) format = ReadU16(bytes, body + 24);
      have_fmt = true;
    } else if (TagIs(bytes, pos, "data")) {
      data = bytes.subspan(body, len);
      have_data = true;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt) Fail(ErrorKind::kDecode, "missing fmt chunk");
  if (!have_data) Fail(ErrorKind::kDecode, "missing data chunk");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    Fail(ErrorKind::kUnsupportedFormat, "unsupported codec: format tag " + std::to_string(format) +
                                            ", " + std::to_string(bits) + " bits");
  }
  if (channels != 1 && channels != 2) {
    Fail(ErrorKind::kUnsupportedFormat, std::to_string(channels) + " channels (only mono/stereo)");
  }
  if (rate == 0) Fail(ErrorKind::kDecode, "sample rate of zero in fmt chunk");

  const std::size_t width = bits / 8;
  const std::size_t frames = data.size() / (width * channels);
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t at = (f * channels + c) * width;
      if (pcm16) {
        acc += static_cast<std::int16_t>(ReadU16(data, at)) / 32768.0;
      } else {
        const std::uint32_t raw = ReadU32(data, at);
        float v;
        std::memcpy(&v, &raw, sizeof v);
        acc += v;
      }
    }
    w.samples[f] = acc / channels;
    if (!std::isfinite(w.samples[f])) Fail(ErrorKind::kDecode, "non-finite sample in data chunk");
  }
  return w;
}

Waveform ReadWav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return DecodeWav(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> EncodeWavPcm16(const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + 2 * n);
  PutTag(out, "RIFF");
  PutU32(out, 36 + 2 * n);
  PutTag(out, "WAVE");
  PutTag(out, "fmt ");
  PutU32(out, 16);
  PutU16(out, kFormatPcm);
  PutU16(out, 1);
  PutU32(out, static_cast<std::uint32_t>(w.sample_rate));
  PutU32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  PutTag(out, "data");
  PutU32(out, 2 * n);
  for (double s : w.samples) {
    const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    PutU16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

void WriteWav(const std::filesystem::path& path, const Waveform& w) {
  const auto bytes = EncodeWavPcm16(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> ResampleByRatio(std::span<const double> samples, double ratio) {
  if (!(ratio > 0.0)) Fail(ErrorKind::kConfig, "resampling ratio must be positive");
  if (ratio == 1.0) return {samples.begin(), samples.end()};
  const auto n = static_cast<std::int64_t>(samples.size());
  if (n == 0) return {};
  const auto n_out = static_cast<std::int64_t>(std::llround(static_cast<double>(n) * ratio));

  // Hann-windowed sinc, cutoff at the lower of the two Nyquist rates,
  // tabulated at kResolution points per input sample.
  constexpr int kZeroCrossings = 16;
  constexpr int kResolution = 512;
  const double cutoff = std::min(1.0, ratio);
  const double half_width = kZeroCrossings / cutoff;
  const auto table_size = static_cast<std::size_t>(std::ceil(half_width * kResolution)) + 2;
  std::vector<double> table(table_size);
  for (std::size_t i = 0; i < table_size; ++i) {
    const double u = static_cast<double>(i) / kResolution;
    if (u >= half_width) {
      table[i] = 0.0;
      continue;
    }
    const double arg = std::numbers::pi * cutoff * u;
    const double sinc = u == 0.0 ? 1.0 : std::sin(arg) / arg;
    const double window = 0.5 * (1.0 + std::cos(std::numbers::pi * u / half_width));
    table[i] = cutoff * sinc * window;
  }
  auto kernel = [&](double u) {
    u = std::abs(u) * kResolution;
    const auto i = static_cast<std::size_t>(u);
    if (i + 1 >= table_size) return 0.0;
    const double frac = u - static_cast<double>(i);
    return table[i] + frac * (table[i + 1] - table[i]);
  };

  std::vector<double> out(static_cast<std::size_t>(n_out));
  for (std::int64_t i = 0; i < n_out; ++i) {
    const double x = static_cast<double>(i) / ratio;
    const auto lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(x - half_width)));
    const auto hi = std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(std::floor(x + half_width)));
    double acc = 0.0, wsum = 0.0;
    for (std::int64_t j = lo; j <= hi; ++j) {
      const double k = kernel(x - static_cast<double>(j));
      acc += k * samples[static_cast<std::size_t>(j)];
      wsum += k;
    }
    // Normalizing by the kernel mass keeps constants fixed, including at the edges.
    out[static_cast<std::size_t>(i)] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return out;
}

Waveform Resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) Fail(ErrorKind::kConfig, "target sample rate must be positive");
  if (target_rate == w.sample_rate) return w;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples = ResampleByRatio(w.samples, static_cast<double>(target_rate) / w.sample_rate);
  return out;
}

Waveform PadOrTrim(const Waveform& w, double max_seconds) {
  const auto target = static_cast<std::size_t>(std::llround(w.sample_rate * max_seconds));
  Waveform out = w;
  out.samples.resize(target, 0.0);
  return out;
}

Waveform PeakNormalize(const Waveform& w) {
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak == 0.0 || peak == 1.0) return w;
  Waveform out = w;
  for (double& s : out.samples) s /= peak;
  return out;
}

Waveform Canonicalize(const Waveform& w, double max_seconds) {
  return PadOrTrim(Resample(w, kCanonicalRate), max_seconds);
}

}  // namespace serforge
