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

#include "serforge/config.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "serforge/error.h"

namespace serforge {

namespace {

using nlohmann::json;

// Typed access to one config table; remembers consumed keys so leftovers can
// be reported as unknown fields.
class Section {
 public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_null() && !j_->is_object()) Bad("", "expected a table");
  }

  std::string Path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void Bad(const std::string& key, const std::string& what) const {
    Fail(ErrorKind::kConfig, (key.empty() ? (path_.empty() ? std::string("config") : path_) : Path(key)) + ": " + what);
  }

  const json* Find(const std::string& key) {
    if (!j_ || j_->is_null() || !j_->contains(key)) return nullptr;
    used_.insert(key);
    return &j_->at(key);
  }

  Section Sub(const std::string& key) {
    const json* v = Find(key);
    return Section(v, Path(key));
  }

  void Get(const std::string& key, double& out) {
    if (const json* v = Find(key)) out = Number(key, *v);
  }

  void Get(const std::string& key, int& out) {
    if (const json* v = Find(key)) {
      if (!v->is_number_integer()) Bad(key, "expected an integer");
      out = v->get<int>();
    }
  }

  void Get(const std::string& key, std::uint64_t& out) {
    if (const json* v = Find(key)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0) Bad(key, "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void Get(const std::string& key, std::string& out) {
    if (const json* v = Find(key)) {
      if (!v->is_string()) Bad(key, "expected a string");
      out = v->get<std::string>();
    }
  }

  void Get(const std::string& key, std::pair<double, double>& out) {
    if (const json* v = Find(key)) {
      if (!v->is_array() || v->size() != 2) Bad(key, "expected [lo, hi]");
      out = {Number(key, (*v)[0]), Number(key, (*v)[1])};
    }
  }

  void Get(const std::string& key, std::array<double, 3>& out) {
    if (const json* v = Find(key)) {
      if (!v->is_array() || v->size() != 3) Bad(key, "expected three numbers");
      for (int i = 0; i < 3; ++i) out[i] = Number(key, (*v)[i]);
    }
  }

  void Get(const std::string& key, std::vector<double>& out) {
    if (const json* v = Find(key)) {
      if (!v->is_array()) Bad(key, "expected an array of numbers");
      out.clear();
      for (const auto& e : *v) out.push_back(Number(key, e));
    }
  }

  void Get(const std::string& key, std::vector<int>& out) {
    if (const json* v = Find(key)) {
      if (!v->is_array()) Bad(key, "expected an array of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) Bad(key, "expected an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }

  void Get(const std::string& key, std::vector<std::string>& out) {
    if (const json* v = Find(key)) {
      if (!v->is_array()) Bad(key, "expected an array of strings");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) Bad(key, "expected an array of strings");
        out.push_back(e.get<std::string>());
      }
    }
  }

  void Finish() const {
    if (!j_ || j_->is_null()) return;
    for (const auto& [k, v] : j_->items()) {
      if (!used_.count(k)) Bad(k, "unknown field");
    }
  }

 private:
  double Number(const std::string& key, const json& v) const {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
      if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    Bad(key, "expected a number");
  }

  const json* j_;
  std::string path_;
  std::set<std::string> used_;
};

json Num(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return v;
}

json Pair(const std::pair<double, double>& p) { return json::array({Num(p.first), Num(p.second)}); }

LossMode ParseLossMode(const std::string& s) {
  if (s == "macro") return LossMode::kMacro;
  if (s == "mean") return LossMode::kMean;
  Fail(ErrorKind::kConfig, "train.loss_mode: expected 'macro' or 'mean', got '" + s + "'");
}

json FromToml(const toml::node& node, const std::string& path) {
  if (const auto* t = node.as_table()) {
    json j = json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = FromToml(v, path.empty() ? std::string(k.str()) : path + "." + std::string(k.str()));
    return j;
  }
  if (const auto* a = node.as_array()) {
    json j = json::array();
    for (const auto& v : *a) j.push_back(FromToml(v, path));
    return j;
  }
  if (const auto* v = node.as_string()) return v->get();
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return Num(v->get());
  if (const auto* v = node.as_boolean()) return v->get();
  Fail(ErrorKind::kConfig, path + ": unsupported TOML value type");
}

}  // namespace

void ExperimentConfig::Validate() const {
  const int sources = !dataset.crema_dir.empty() + !dataset.manifest.empty() + (dataset.toy_per_class > 0);
  if (sources != 1) {
    Fail(ErrorKind::kConfig, "dataset: set exactly one of crema_dir, manifest or toy_per_class");
  }
  if (dataset.toy_per_class < 0) Fail(ErrorKind::kConfig, "dataset.toy_per_class must be >= 0");
  if (!(dataset.toy.seconds > 0)) Fail(ErrorKind::kConfig, "dataset.toy_seconds must be positive");
  if (dataset.toy.samples_per_actor < 1) Fail(ErrorKind::kConfig, "dataset.toy_samples_per_actor must be >= 1");
  if (!(dataset.max_seconds > 0)) Fail(ErrorKind::kConfig, "dataset.max_seconds must be positive");
  for (double r : dataset.split_ratios) {
    if (!(r > 0)) Fail(ErrorKind::kConfig, "dataset.split_ratios entries must be positive");
  }
  features.Validate(kCanonicalRate);
  augment.Validate();
  model.Validate();
  train.Validate();
  if (!train.class_weights.empty() && static_cast<int>(train.class_weights.size()) != model.head.num_classes) {
    Fail(ErrorKind::kConfig, "train.class_weights needs one entry per class");
  }
  if (eval.warmup < 0 || eval.reps < 1) Fail(ErrorKind::kConfig, "eval: warmup >= 0 and reps >= 1 required");
  if (output_dir.empty()) Fail(ErrorKind::kConfig, "output_dir must not be empty");
}

nlohmann::json ExperimentConfig::ToJson() const {
  json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  auto& d = j["dataset"];
  d["crema_dir"] = dataset.crema_dir;
  d["manifest"] = dataset.manifest;
  d["toy_per_class"] = dataset.toy_per_class;
  d["toy_seconds"] = dataset.toy.seconds;
  d["toy_samples_per_actor"] = dataset.toy.samples_per_actor;
  d["max_seconds"] = dataset.max_seconds;
  d["split_ratios"] = dataset.split_ratios;
  d["split_file"] = dataset.split_file;
  d["cache_dir"] = dataset.cache_dir;
  auto& f = j["features"];
  f["frame_length"] = features.frame_length;
  f["hop"] = features.hop;
  f["fft_size"] = features.fft_size;
  f["n_mels"] = features.n_mels;
  f["fmin"] = features.fmin;
  f["fmax"] = features.fmax;
  f["n_mfcc"] = features.n_mfcc;
  f["log_floor"] = features.log_floor;
  auto& a = j["augment"];
  a["gain_db_range"] = Pair(augment.gain_db_range);
  a["noise_snr_db_range"] = Pair(augment.noise_snr_db_range);
  a["pitch_factor_range"] = Pair(augment.pitch_factor_range);
  a["max_shift_fraction"] = augment.max_shift_fraction;
  a["gain_probability"] = augment.gain_probability;
  a["noise_probability"] = augment.noise_probability;
  a["pitch_probability"] = augment.pitch_probability;
  a["shift_probability"] = augment.shift_probability;
  auto& m = j["model"];
  m["family"] = ModelFamilyName(model.family);
  const auto& pc = model.patch;
  m["patch"] = {{"patch_h", pc.patch_h},         {"patch_w", pc.patch_w},
                {"embed_dim", pc.embed_dim},     {"n_blocks", pc.n_blocks},
                {"n_heads", pc.n_heads},         {"mlp_ratio", pc.mlp_ratio},
                {"patchout_freq", pc.patchout_freq}, {"patchout_time", pc.patchout_time},
                {"patchout_random", pc.patchout_random}};
  const auto& wc = model.waveform;
  m["waveform"] = {{"conv_kernels", wc.conv_kernels}, {"conv_strides", wc.conv_strides},
                   {"conv_channels", wc.conv_channels}, {"embed_dim", wc.embed_dim},
                   {"n_blocks", wc.n_blocks}, {"n_heads", wc.n_heads}, {"mlp_ratio", wc.mlp_ratio}};
  const auto& cc = model.cnn_lstm;
  m["cnn_lstm"] = {{"conv_channels", cc.conv_channels}, {"kernel", cc.kernel}, {"pool", cc.pool},
                   {"lstm_hidden", cc.lstm_hidden}, {"lstm_layers", cc.lstm_layers}};
  const auto& hc = model.head;
  j["head"] = {{"kind", HeadKindName(hc.kind)}, {"mlp_hidden", hc.mlp_hidden},
               {"dropout_p", hc.dropout_p}, {"num_classes", hc.num_classes},
               {"d_att", hc.d_att}, {"eps_var", hc.eps_var}};
  auto& t = j["train"];
  t["max_epochs"] = train.max_epochs;
  t["patience"] = train.patience;
  t["lr0"] = train.lr0;
  t["betas"] = {train.beta1, train.beta2};
  t["adam_eps"] = train.adam_eps;
  t["batch_size"] = train.batch_size;
  t["loss_mode"] = train.loss_mode == LossMode::kMacro ? "macro" : "mean";
  t["class_weights"] = train.class_weights;
  t["clip_norm"] = train.clip_norm;
  t["freeze_mask"] = train.freeze_mask;
  j["eval"] = {{"warmup", eval.warmup}, {"reps", eval.reps}};
  return j;
}

std::string ExperimentConfig::Hash() const {
  json j = ToJson();
  j.erase("output_dir");
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

ExperimentConfig ParseConfigJson(const nlohmann::json& j) {
  ExperimentConfig c;
  Section root(&j, "");
  root.Get("seed", c.seed);
  root.Get("output_dir", c.output_dir);

  Section d = root.Sub("dataset");
  d.Get("crema_dir", c.dataset.crema_dir);
  d.Get("manifest", c.dataset.manifest);
  d.Get("toy_per_class", c.dataset.toy_per_class);
  d.Get("toy_seconds", c.dataset.toy.seconds);
  d.Get("toy_samples_per_actor", c.dataset.toy.samples_per_actor);
  d.Get("max_seconds", c.dataset.max_seconds);
  d.Get("split_ratios", c.dataset.split_ratios);
  d.Get("split_file", c.dataset.split_file);
  d.Get("cache_dir", c.dataset.cache_dir);
  d.Finish();

  Section f = root.Sub("features");
  f.Get("frame_length", c.features.frame_length);
  f.Get("hop", c.features.hop);
  f.Get("fft_size", c.features.fft_size);
  f.Get("n_mels", c.features.n_mels);
  f.Get("fmin", c.features.fmin);
  f.Get("fmax", c.features.fmax);
  f.Get("n_mfcc", c.features.n_mfcc);
  f.Get("log_floor", c.features.log_floor);
  f.Finish();

  Section a = root.Sub("augment");
  a.Get("gain_db_range", c.augment.gain_db_range);
  a.Get("noise_snr_db_range", c.augment.noise_snr_db_range);
  a.Get("pitch_factor_range", c.augment.pitch_factor_range);
  a.Get("max_shift_fraction", c.augment.max_shift_fraction);
  a.Get("gain_probability", c.augment.gain_probability);
  a.Get("noise_probability", c.augment.noise_probability);
  a.Get("pitch_probability", c.augment.pitch_probability);
  a.Get("shift_probability", c.augment.shift_probability);
  a.Finish();

  Section m = root.Sub("model");
  std::string family = std::string(ModelFamilyName(c.model.family));
  m.Get("family", family);
  c.model.family = ParseModelFamily(family);
  Section mp = m.Sub("patch");
  auto& pc = c.model.patch;
  mp.Get("patch_h", pc.patch_h);
  mp.Get("patch_w", pc.patch_w);
  mp.Get("embed_dim", pc.embed_dim);
  mp.Get("n_blocks", pc.n_blocks);
  mp.Get("n_heads", pc.n_heads);
  mp.Get("mlp_ratio", pc.mlp_ratio);
  mp.Get("patchout_freq", pc.patchout_freq);
  mp.Get("patchout_time", pc.patchout_time);
  mp.Get("patchout_random", pc.patchout_random);
  mp.Finish();
  Section mw = m.Sub("waveform");
  auto& wc = c.model.waveform;
  mw.Get("conv_kernels", wc.conv_kernels);
  mw.Get("conv_strides", wc.conv_strides);
  mw.Get("conv_channels", wc.conv_channels);
  mw.Get("embed_dim", wc.embed_dim);
  mw.Get("n_blocks", wc.n_blocks);
  mw.Get("n_heads", wc.n_heads);
  mw.Get("mlp_ratio", wc.mlp_ratio);
  mw.Finish();
  Section ml = m.Sub("cnn_lstm");
  auto& cc = c.model.cnn_lstm;
  ml.Get("conv_channels", cc.conv_channels);
  ml.Get("kernel", cc.kernel);
  ml.Get("pool", cc.pool);
  ml.Get("lstm_hidden", cc.lstm_hidden);
  ml.Get("lstm_layers", cc.lstm_layers);
  ml.Finish();
  m.Finish();

  Section h = root.Sub("head");
  std::string kind = std::string(HeadKindName(c.model.head.kind));
  h.Get("kind", kind);
  c.model.head.kind = ParseHeadKind(kind);
  h.Get("mlp_hidden", c.model.head.mlp_hidden);
  h.Get("dropout_p", c.model.head.dropout_p);
  h.Get("num_classes", c.model.head.num_classes);
  h.Get("d_att", c.model.head.d_att);
  h.Get("eps_var", c.model.head.eps_var);
  h.Finish();

  Section t = root.Sub("train");
  t.Get("max_epochs", c.train.max_epochs);
  t.Get("patience", c.train.patience);
  t.Get("lr0", c.train.lr0);
  std::pair<double, double> betas{c.train.beta1, c.train.beta2};
  t.Get("betas", betas);
  c.train.beta1 = betas.first;
  c.train.beta2 = betas.second;
  t.Get("adam_eps", c.train.adam_eps);
  t.Get("batch_size", c.train.batch_size);
  std::string loss_mode = c.train.loss_mode == LossMode::kMacro ? "macro" : "mean";
  t.Get("loss_mode", loss_mode);
  c.train.loss_mode = ParseLossMode(loss_mode);
  t.Get("class_weights", c.train.class_weights);
  t.Get("clip_norm", c.train.clip_norm);
  t.Get("freeze_mask", c.train.freeze_mask);
  t.Finish();

  Section e = root.Sub("eval");
  e.Get("warmup", c.eval.warmup);
  e.Get("reps", c.eval.reps);
  e.Finish();
  root.Finish();

  c.train.seed = c.seed;
  c.augment.seed = DeriveSeed({c.seed, static_cast<std::uint64_t>(Stream::kAugment)});
  // Input geometry is only known once features are fixed; validate the rest now.
  c.features.Validate(kCanonicalRate);
  c.augment.Validate();
  c.model.head.Validate();
  c.train.Validate();
  return c;
}

ExperimentConfig ParseConfigToml(std::string_view text, std::string_view source) {
  toml::table table;
  try {
    table = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": "
       << e.description();
    Fail(ErrorKind::kConfig, os.str());
  }
  return ParseConfigJson(FromToml(table, ""));
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.extension() == ".json") {
    json j;
    try {
      j = json::parse(ss.str());
    } catch (const json::exception& e) {
      Fail(ErrorKind::kConfig, path.string() + ": " + e.what());
    }
    return ParseConfigJson(j);
  }
  return ParseConfigToml(ss.str(), path.string());
}

}  // namespace serforge
