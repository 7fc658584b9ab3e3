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

#include "serforge/pipeline.h"

#include <atomic>
#include <cstring>
#include <fstream>
#include <thread>

#include "serforge/error.h"

namespace serforge {

void ParallelFor(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t w = std::min<std::size_t>(std::max(workers, 1), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

Corpus Corpus::Toy(int n_per_class, std::uint64_t seed, const ToyOptions& opt) {
  Corpus c;
  c.samples_ = ToyManifest(n_per_class, opt);
  c.toy_ = true;
  c.toy_seed_ = seed;
  c.toy_options_ = opt;
  return c;
}

Corpus Corpus::FromManifest(std::vector<SampleMeta> samples) {
  if (samples.empty()) Fail(ErrorKind::kManifest, "manifest has no samples");
  Corpus c;
  c.samples_ = std::move(samples);
  return c;
}

std::string Corpus::Identity() const {
  if (!toy_) return "files";
  return "toy:" + std::to_string(toy_seed_) + ":" + std::to_string(samples_.size()) + ":" +
         std::to_string(toy_options_.seconds) + ":" + std::to_string(toy_options_.samples_per_actor);
}

Waveform Corpus::LoadRaw(std::size_t i) const {
  if (toy_) return SynthesizeToySample(toy_seed_, i, samples_[i], toy_options_);
  return ReadWav(samples_[i].path);
}

std::string_view InputKindName(InputKind kind) {
  switch (kind) {
    case InputKind::kLogMel: return "log_mel";
    case InputKind::kMfcc: return "mfcc";
    case InputKind::kWaveform: return "waveform";
  }
  return "?";
}

void WriteFeatureFile(const std::filesystem::path& bin, const Tensor<float>& data,
                      nlohmann::json meta) {
  if (bin.has_parent_path()) std::filesystem::create_directories(bin.parent_path());
  const auto tmp = bin.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) Fail(ErrorKind::kIo, "cannot write " + tmp);
    for (float v : data.values()) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                  static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
      out.write(reinterpret_cast<const char*>(b), 4);
    }
    if (!out) Fail(ErrorKind::kIo, "write failed: " + tmp);
  }
  meta["shape"] = data.shape();
  meta["dtype"] = "float32";
  meta["byte_order"] = "little";
  {
    std::ofstream out(bin.string() + ".json");
    if (!out) Fail(ErrorKind::kIo, "cannot write " + bin.string() + ".json");
    out << meta.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, bin);
}

Tensor<float> ReadFeatureFile(const std::filesystem::path& bin, nlohmann::json* meta) {
  std::ifstream js(bin.string() + ".json");
  if (!js) Fail(ErrorKind::kIo, "missing sidecar " + bin.string() + ".json");
  nlohmann::json m;
  Shape shape;
  try {
    js >> m;
    shape = m.at("shape").get<Shape>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kIo, bin.string() + ".json: " + e.what());
  }
  std::ifstream in(bin, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot read " + bin.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != ShapeSize(shape) * 4) {
    Fail(ErrorKind::kIo, bin.string() + ": payload of " + std::to_string(bytes.size()) +
                             " bytes does not match shape " + ShapeString(shape));
  }
  std::vector<float> v(ShapeSize(shape));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::uint32_t u = bytes[4 * i] | (bytes[4 * i + 1] << 8) | (bytes[4 * i + 2] << 16) |
                            (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    std::memcpy(&v[i], &u, 4);
  }
  if (meta) *meta = std::move(m);
  return Tensor<float>(shape, std::move(v));
}

InputPipeline::InputPipeline(const Corpus& corpus, PipelineOptions opt)
    : corpus_(corpus), opt_(std::move(opt)), memo_(corpus.size()) {
  opt_.augment.Validate();
  if (!(opt_.max_seconds > 0)) Fail(ErrorKind::kConfig, "dataset.max_seconds must be positive");
  if (opt_.kind != InputKind::kWaveform) extractor_.emplace(opt_.features, kCanonicalRate);
}

bool InputPipeline::augmenting() const {
  const auto& a = opt_.augment;
  return a.gain_probability > 0 || a.noise_probability > 0 || a.pitch_probability > 0 ||
         a.shift_probability > 0;
}

Waveform InputPipeline::Canonical(std::size_t i) const {
  return Canonicalize(corpus_.LoadRaw(i), opt_.max_seconds);
}

Waveform InputPipeline::Prepared(std::size_t i, bool augment, std::uint64_t epoch) const {
  auto w = Canonical(i);
  if (augment && augmenting()) return AugmentPipeline(w, opt_.augment, i, epoch);
  return PeakNormalize(w);
}

Tensor<float> InputPipeline::Features(const Waveform& prepared) const {
  if (opt_.kind == InputKind::kWaveform) {
    std::vector<float> v(prepared.samples.begin(), prepared.samples.end());
    return Tensor<float>(Shape{static_cast<int>(v.size())}, std::move(v));
  }
  const auto spec = opt_.kind == InputKind::kLogMel ? extractor_->LogMel(prepared)
                                                    : extractor_->Mfcc(prepared);
  return spec.data.Cast<float>();
}

Shape InputPipeline::InputShape() const {
  const auto samples = static_cast<std::size_t>(std::lround(kCanonicalRate * opt_.max_seconds));
  if (opt_.kind == InputKind::kWaveform) return {static_cast<int>(samples)};
  const int bins = opt_.kind == InputKind::kLogMel ? opt_.features.n_mels : opt_.features.n_mfcc;
  return {NumFrames(samples, opt_.features), bins};
}

Tensor<float> InputPipeline::Compute(std::size_t i, bool augment, std::uint64_t epoch) const {
  return Features(Prepared(i, augment, epoch));
}

std::filesystem::path InputPipeline::CachePath(std::size_t i) const {
  const std::string key = corpus_.Identity() + "|" + corpus_.samples()[i].path + "|" +
                          std::string(InputKindName(opt_.kind)) + "|" + opt_.features.Hash() + "|" +
                          std::to_string(opt_.max_seconds);
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : key) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return std::filesystem::path(opt_.cache_dir) / (std::string(hex) + ".f32");
}

Tensor<float> InputPipeline::Plain(std::size_t i) {
  {
    std::lock_guard lock(memo_mu_);
    if (memo_[i]) return *memo_[i];
  }
  Tensor<float> t;
  bool hit = false;
  if (!opt_.cache_dir.empty()) {
    const auto path = CachePath(i);
    if (std::filesystem::exists(path)) {
      t = ReadFeatureFile(path);
      if (t.shape() != InputShape()) Fail(ErrorKind::kIo, "cached features " + path.string() + " have the wrong shape");
      hit = true;
    } else {
      t = Compute(i, false, 0);
      nlohmann::json meta{{"sample", corpus_.samples()[i].path},
                          {"kind", InputKindName(opt_.kind)},
                          {"config_hash", opt_.features.Hash()},
                          {"max_seconds", opt_.max_seconds}};
      WriteFeatureFile(path, t, meta);
    }
  } else {
    t = Compute(i, false, 0);
  }
  std::lock_guard lock(memo_mu_);
  if (hit) ++cache_hits_;
  memo_[i] = t;
  return t;
}

Tensor<float> InputPipeline::Input(std::size_t i, bool augment, std::uint64_t epoch) {
  if (i >= corpus_.size()) Fail(ErrorKind::kConfig, "sample index out of range");
  if (augment && augmenting()) return Compute(i, true, epoch);
  return Plain(i);
}

std::vector<Tensor<float>> InputPipeline::Inputs(const std::vector<std::size_t>& indices,
                                                 bool augment, std::uint64_t epoch) {
  std::vector<Tensor<float>> out(indices.size());
  ParallelFor(indices.size(), opt_.workers,
              [&](std::size_t k) { out[k] = Input(indices[k], augment, epoch); });
  return out;
}

std::pair<std::vector<double>, std::vector<double>> InputPipeline::BinStatistics(
    const std::vector<std::size_t>& indices) {
  const auto inputs = Inputs(indices, false, 0);
  const Shape shape = InputShape();
  const int bins = shape.size() == 2 ? shape[1] : 1;
  std::vector<double> sum(bins, 0.0), sq(bins, 0.0);
  double count = 0;
  for (const auto& t : inputs) {
    const int rows = static_cast<int>(t.size()) / bins;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < bins; ++c) {
        const double v = t[static_cast<std::size_t>(r) * bins + c];
        sum[c] += v;
        sq[c] += v * v;
      }
    }
    count += rows;
  }
  std::vector<double> mean(bins), sd(bins);
  for (int c = 0; c < bins; ++c) {
    mean[c] = count > 0 ? sum[c] / count : 0.0;
    const double var = count > 0 ? sq[c] / count - mean[c] * mean[c] : 1.0;
    sd[c] = std::sqrt(std::max(var, 1e-10));
  }
  return {mean, sd};
}

}  // namespace serforge
