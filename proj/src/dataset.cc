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

#include "serforge/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "serforge/error.h"
#include "serforge/rng.h"

namespace serforge {

int EmotionFromCode(std::string_view code) {
  for (std::size_t i = 0; i < kEmotionCodes.size(); ++i) {
    if (kEmotionCodes[i] == code) return static_cast<int>(i);
  }
  return -1;
}

int EmotionFromName(std::string_view name) {
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
    if (kEmotionNames[i] == name) return static_cast<int>(i);
  }
  return -1;
}

namespace {

std::vector<std::string> SplitOn(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

bool ParseInt(const std::string& s, int& out) {
  if (s.empty() || s.size() > 9) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  out = std::stoi(s);
  return true;
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::vector<std::string> ParseCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

SampleMeta ParseCremaFilename(const std::string& path) {
  const std::string base = std::filesystem::path(path).filename().string();
  std::string stem = base;
  if (stem.size() > 4) {
    std::string ext = stem.substr(stem.size() - 4);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") stem.resize(stem.size() - 4);
  }
  const auto fields = SplitOn(stem, '_');
  if (fields.size() != 4) {
    Fail(ErrorKind::kManifest, "malformed CREMA-D file name '" + path +
                                   "': expected ActorID_Sentence_Emotion_Intensity.wav");
  }
  SampleMeta m;
  m.path = path;
  if (!ParseInt(fields[0], m.actor_id)) {
    Fail(ErrorKind::kManifest, "bad actor id '" + fields[0] + "' in file name '" + path + "'");
  }
  m.sentence_code = fields[1];
  m.emotion = EmotionFromCode(fields[2]);
  if (m.emotion < 0) {
    Fail(ErrorKind::kManifest, "unknown emotion code '" + fields[2] + "' in file name '" + path + "'");
  }
  m.intensity_code = fields[3];
  return m;
}

ManifestScan ScanCremaDirectory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) Fail(ErrorKind::kIo, "not a directory: " + dir.string());
  ManifestScan scan;
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    try {
      scan.samples.push_back(ParseCremaFilename(p));
    } catch (const Error&) {
      scan.rejected.push_back(p);
    }
  }
  return scan;
}

void WriteManifestCsv(const std::filesystem::path& path, const std::vector<SampleMeta>& samples) {
  std::ofstream out(path);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "path,actor_id,sentence,emotion,intensity\n";
  for (const auto& m : samples) {
    out << CsvField(m.path) << ',' << m.actor_id << ',' << CsvField(m.sentence_code) << ','
        << kEmotionNames[m.emotion] << ',' << CsvField(m.intensity_code) << '\n';
  }
  if (!out) Fail(ErrorKind::kIo, "write failed: " + path.string());
}

std::vector<SampleMeta> ReadManifestCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("path,actor_id,sentence,emotion,intensity", 0) != 0) {
    Fail(ErrorKind::kManifest, path.string() + ": unexpected manifest header");
  }
  std::vector<SampleMeta> samples;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = ParseCsvLine(line);
    SampleMeta m;
    if (f.size() != 5 || !ParseInt(f[1], m.actor_id) || (m.emotion = EmotionFromName(f[3])) < 0) {
      Fail(ErrorKind::kManifest, path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    m.path = f[0];
    m.sentence_code = f[2];
    m.intensity_code = f[4];
    samples.push_back(std::move(m));
  }
  return samples;
}

void SplitAssignment::CheckDisjoint() const {
  std::map<int, int> owner;
  for (int s = 0; s < 3; ++s) {
    for (int a : actors[s]) {
      auto [it, fresh] = owner.emplace(a, s);
      if (!fresh) {
        Fail(ErrorKind::kSplit, "actor " + std::to_string(a) + " appears in both " +
                                    std::string(kSplitNames[it->second]) + " and " +
                                    std::string(kSplitNames[s]));
      }
    }
  }
}

int SplitIndex(std::string_view name) {
  for (int i = 0; i < 3; ++i) {
    if (kSplitNames[i] == name) return i;
  }
  Fail(ErrorKind::kConfig, "unknown split '" + std::string(name) + "' (expected train, val or test)");
}

namespace {

void InduceSamples(SplitAssignment& split, const std::vector<SampleMeta>& samples) {
  std::map<int, int> owner;
  for (int s = 0; s < 3; ++s) {
    std::sort(split.actors[s].begin(), split.actors[s].end());
    for (int a : split.actors[s]) owner[a] = s;
    split.samples[s].clear();
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto it = owner.find(samples[i].actor_id);
    if (it == owner.end()) {
      Fail(ErrorKind::kSplit, "actor " + std::to_string(samples[i].actor_id) + " of " +
                                  samples[i].path + " is not assigned to any split");
    }
    split.samples[it->second].push_back(i);
  }
  split.CheckDisjoint();
}

}  // namespace

SplitAssignment SpeakerIndependentSplit(const std::vector<SampleMeta>& samples,
                                        const std::array<double, 3>& ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r > 0.0)) Fail(ErrorKind::kConfig, "dataset.split_ratios entries must be positive");
  }
  std::map<int, std::size_t> counts;
  for (const auto& m : samples) ++counts[m.actor_id];
  if (counts.size() < 3) {
    Fail(ErrorKind::kSplit, "need at least 3 distinct actors for a three-way split, got " +
                                std::to_string(counts.size()));
  }
  std::vector<int> actors;
  for (const auto& [a, n] : counts) actors.push_back(a);
  Rng rng = MakeRng(seed, Stream::kSplit);
  Shuffle(actors.begin(), actors.end(), rng);

  const double ratio_sum = ratios[0] + ratios[1] + ratios[2];
  std::array<double, 3> target;
  for (int s = 0; s < 3; ++s) target[s] = ratios[s] / ratio_sum * static_cast<double>(samples.size());
  std::array<double, 3> filled{0, 0, 0};

  SplitAssignment split;
  split.seed = seed;
  split.ratios = ratios;
  for (std::size_t i = 0; i < actors.size(); ++i) {
    int dest = 0;
    if (i < 3) {
      dest = static_cast<int>(i);
    } else {
      for (int s = 1; s < 3; ++s) {
        if (target[s] - filled[s] > target[dest] - filled[dest]) dest = s;
      }
    }
    split.actors[dest].push_back(actors[i]);
    filled[dest] += static_cast<double>(counts[actors[i]]);
  }
  InduceSamples(split, samples);
  return split;
}

nlohmann::json SplitToJson(const SplitAssignment& split) {
  nlohmann::json j;
  j["seed"] = split.seed;
  j["ratios"] = split.ratios;
  j["train_actors"] = split.actors[0];
  j["val_actors"] = split.actors[1];
  j["test_actors"] = split.actors[2];
  return j;
}

SplitAssignment SplitFromJson(const nlohmann::json& j, const std::vector<SampleMeta>& samples) {
  SplitAssignment split;
  try {
    split.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("ratios")) split.ratios = j.at("ratios").get<std::array<double, 3>>();
    split.actors[0] = j.at("train_actors").get<std::vector<int>>();
    split.actors[1] = j.at("val_actors").get<std::vector<int>>();
    split.actors[2] = j.at("test_actors").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kSplit, std::string("malformed split file: ") + e.what());
  }
  InduceSamples(split, samples);
  return split;
}

// ---- Synthetic toy corpus --------------------------------------------------

const ToyRecipe& ToyClassRecipe(int emotion) {
  static const std::array<ToyRecipe, 6> kRecipes{{
      {240.0, 6.0, 0.10, 0.85},  // angry
      {110.0, 3.0, 0.30, 0.70},  // disgust
      {340.0, 9.0, 0.20, 0.75},  // fear
      {180.0, 5.0, 0.05, 0.80},  // happy
      {140.0, 1.0, 0.02, 0.60},  // neutral
      {95.0, 2.0, 0.05, 0.45},   // sad
  }};
  if (emotion < 0 || emotion >= 6) Fail(ErrorKind::kLabel, "emotion index out of range: " + std::to_string(emotion));
  return kRecipes[emotion];
}

std::vector<SampleMeta> ToyManifest(int n_per_class, const ToyOptions& opt) {
  if (n_per_class < 1) Fail(ErrorKind::kConfig, "dataset.toy_per_class must be >= 1");
  if (opt.samples_per_actor < 1) Fail(ErrorKind::kConfig, "dataset.toy_samples_per_actor must be >= 1");
  const int n = 6 * n_per_class;
  std::vector<SampleMeta> out(n);
  for (int i = 0; i < n; ++i) {
    out[i].path = "toy:" + std::to_string(i);
    out[i].actor_id = 1 + i / opt.samples_per_actor;
    out[i].sentence_code = "TOY";
    out[i].emotion = i % 6;
    out[i].intensity_code = "XX";
  }
  return out;
}

Waveform SynthesizeToySample(std::uint64_t seed, std::size_t index, const SampleMeta& meta,
                             const ToyOptions& opt) {
  const ToyRecipe& r = ToyClassRecipe(meta.emotion);
  Rng actor_rng = MakeRng(seed, Stream::kToy, static_cast<std::uint64_t>(meta.actor_id), 1);
  const double actor_shift = UniformRange(actor_rng, -0.04, 0.04);
  Rng rng = MakeRng(seed, Stream::kToy, index, 0);
  const double f0 = r.f0_hz * (1.0 + actor_shift) * (1.0 + UniformRange(rng, -0.03, 0.03));
  const double am_rate = r.am_rate_hz * (1.0 + UniformRange(rng, -0.1, 0.1));
  const double am_phase = UniformRange(rng, 0.0, 2.0 * std::numbers::pi);
  const double vib_phase = UniformRange(rng, 0.0, 2.0 * std::numbers::pi);
  constexpr int kHarmonics = 12;
  std::array<double, kHarmonics> phase;
  for (auto& p : phase) p = UniformRange(rng, 0.0, 2.0 * std::numbers::pi);

  const int rate = opt.sample_rate;
  const auto n = static_cast<std::size_t>(std::lround(opt.seconds * rate));
  const double ramp = 0.05 * rate;
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  double theta = 0.0;
  double power = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double f = f0 * (1.0 + 0.01 * std::sin(2.0 * std::numbers::pi * 5.0 * t + vib_phase));
    theta += 2.0 * std::numbers::pi * f / rate;
    double v = 0.0, amp = 1.0;
    for (int h = 0; h < kHarmonics; ++h, amp *= r.rolloff) {
      if ((h + 1) * f0 >= 0.45 * rate) break;
      v += amp * std::sin((h + 1) * theta + phase[h]);
    }
    v *= 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * am_rate * t + am_phase);
    const double di = static_cast<double>(i);
    v *= std::min({1.0, di / ramp, (static_cast<double>(n) - di) / ramp});
    w.samples[i] = v;
    power += v * v;
  }
  const double noise_std = r.noise_level * std::sqrt(power / std::max<std::size_t>(n, 1));
  for (auto& s : w.samples) s += noise_std * StandardNormal(rng);
  return PeakNormalize(w);
}

std::vector<LabelledWaveform> SynthesizeToyDataset(int n_per_class, std::uint64_t seed,
                                                   const ToyOptions& opt) {
  const auto metas = ToyManifest(n_per_class, opt);
  std::vector<LabelledWaveform> out;
  out.reserve(metas.size());
  for (std::size_t i = 0; i < metas.size(); ++i) {
    out.push_back({SynthesizeToySample(seed, i, metas[i], opt), metas[i]});
  }
  return out;
}

// ---- Batching --------------------------------------------------------------

std::vector<std::vector<std::size_t>> MakeBatches(const std::vector<std::size_t>& split,
                                                  int batch_size, std::uint64_t seed,
                                                  std::uint64_t epoch, bool shuffle) {
  if (batch_size < 1) Fail(ErrorKind::kConfig, "train.batch_size must be >= 1");
  std::vector<std::size_t> order = split;
  if (shuffle) {
    Rng rng = MakeRng(seed, Stream::kShuffle, epoch);
    Shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::uint64_t BatchHash(const std::vector<std::size_t>& batch) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t idx : batch) {
    for (int b = 0; b < 8; ++b) {
      h ^= (static_cast<std::uint64_t>(idx) >> (8 * b)) & 0xff;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace serforge
