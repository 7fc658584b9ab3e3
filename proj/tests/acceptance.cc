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

// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exit status is
// non-zero when any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "oracles.h"
#include "serforge/config.h"
#include "serforge/dataset.h"
#include "serforge/eval.h"
#include "serforge/features.h"
#include "serforge/grad_check.h"
#include "serforge/heads.h"
#include "serforge/models.h"
#include "serforge/ops.h"
#include "serforge/pipeline.h"
#include "test_util.h"
#include "tolerances.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace serforge;
using testutil::RandomTensor;

namespace {

struct Outcome {
  enum Status { kPass, kFail, kSkip } status = kPass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Collects failed checks of one criterion.
class Checker {
 public:
  void Expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  Outcome Finish(std::string summary) const {
    Outcome o;
    if (failures_.empty()) {
      o.detail = std::move(summary);
      return o;
    }
    o.status = Outcome::kFail;
    o.detail = failures_.front();
    if (failures_.size() > 1) o.detail += " (+" + std::to_string(failures_.size() - 1) + " more)";
    return o;
  }

 private:
  std::vector<std::string> failures_;
};

fs::path WorkDir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "serforge_acceptance" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
  double seconds = 0.0;
};

CliResult Cli(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + SERFORGE_CLI_PATH + "\" " + args + " > \"" + out.string() +
                          "\" 2> \"" + err.string() + "\"";
  const auto t0 = Clock::now();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.seconds = Seconds(t0);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testutil::ReadText(out);
  r.err = testutil::ReadText(err);
  return r;
}

std::string LastLine(const std::string& s) {
  std::string t = s;
  while (!t.empty() && t.back() == '\n') t.pop_back();
  const auto p = t.rfind('\n');
  return p == std::string::npos ? t : t.substr(p + 1);
}

fs::path ConfigPath(const std::string& name) { return fs::path(SERFORGE_SOURCE_DIR) / "configs" / name; }

json ReadJson(const fs::path& p) { return json::parse(testutil::ReadText(p)); }

using V = Var<double>;

V C(Tensor<double> t) { return V::Constant(std::move(t)); }

V WeightedSum(const V& y) {
  Tensor<double> w(y.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
  return SumAll(Mul(y, C(w)));
}

oracle::Matrix Rows(const Tensor<double>& t) {
  oracle::Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (int r = 0; r < t.rows(); ++r)
    for (int c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  return m;
}

HeadConfig HeadCfg(HeadKind kind, int d, int k = kNumEmotions) {
  HeadConfig c;
  c.kind = kind;
  c.d_in = d;
  c.num_classes = k;
  c.mlp_hidden = 2 * d;
  c.d_att = d;
  c.dropout_p = 0.0;
  return c;
}

ParamStore<double> RandomHead(const HeadConfig& cfg, Rng& rng, double scale) {
  ParamStore<double> s;
  InitHeadParams(s, cfg, rng);
  for (auto& e : s.entries()) e.value = RandomTensor<double>(e.value.shape(), rng, scale);
  return s;
}

ModelConfig ToyPatchModel(int frames, HeadKind head) {
  ModelConfig m;
  m.family = ModelFamily::kPatchTransformer;
  m.patch.embed_dim = 128;
  m.patch.n_blocks = 2;
  m.patch.n_heads = 4;
  m.head.kind = head;
  m.head.mlp_hidden = 256;
  m.head.dropout_p = 0.1;
  m.input_frames = frames;
  m.input_bins = 128;
  m.Finalize();
  return m;
}

// ---- 1 ---------------------------------------------------------------------

Outcome GradientCorrectness() {
  const auto t0 = Clock::now();
  Checker ck;
  double worst = 0.0;
  std::string worst_name;
  auto run = [&](const std::string& name, const ScalarLossFn& fn, ParamStore<double>& s,
                 const GradCheckOptions& opt = {}) {
    const auto r = GradCheck(fn, s, opt);
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = name + " / " + r.worst_parameter;
    }
    ck.Expect(r.max_relative_error <= tol::kGradCheck,
              name + ": relative error " + Fmt("%.3g", r.max_relative_error) + " at " + r.worst_parameter);
  };
  Rng rng(101);

  {
    ParamStore<double> s;
    s.Add("W", RandomTensor<double>({5, 4}, rng));
    s.Add("b", RandomTensor<double>({5}, rng));
    const auto x = RandomTensor<double>({3, 4}, rng);
    run("linear", [&](const Bindings<double>& p) { return WeightedSum(Linear(C(x), p["W"], p["b"])); }, s);
  }
  {
    ParamStore<double> s;
    s.Add("x", RandomTensor<double>({4, 6}, rng, 2.0));
    s.Add("g", RandomTensor<double>({6}, rng));
    s.Add("b", RandomTensor<double>({6}, rng));
    run("layer_norm", [](const Bindings<double>& p) { return WeightedSum(LayerNorm(p["x"], p["g"], p["b"])); }, s);
  }
  {
    ParamStore<double> s;
    InitBlockParams(s, "blk", 8, 16, rng);
    for (auto& e : s.entries()) e.value = RandomTensor<double>(e.value.shape(), rng, 0.5);
    s.Add("x", RandomTensor<double>({5, 8}, rng));
    run("mhsa", [](const Bindings<double>& p) { return WeightedSum(MultiHeadSelfAttention(p["x"], p, "blk", 2)); }, s);
    run("transformer_block", [](const Bindings<double>& p) { return WeightedSum(TransformerBlock(p["x"], p, "blk", 2)); }, s);
  }
  {
    ParamStore<double> s;
    s.Add("x", RandomTensor<double>({2, 7, 6}, rng));
    s.Add("w", RandomTensor<double>({3, 2, 3, 3}, rng));
    s.Add("b", RandomTensor<double>({3}, rng));
    run("conv2d", [](const Bindings<double>& p) {
      return WeightedSum(Conv2d(p["x"], p["w"], p["b"], Conv2dOptions{2, 1, 1, 1}));
    }, s);
  }
  {
    ParamStore<double> s;
    s.Add("x", RandomTensor<double>({4, 3}, rng));
    s.Add("wih", RandomTensor<double>({20, 3}, rng, 0.5));
    s.Add("whh", RandomTensor<double>({20, 5}, rng, 0.5));
    s.Add("b", RandomTensor<double>({20}, rng, 0.5));
    run("lstm", [](const Bindings<double>& p) { return WeightedSum(Lstm(p["x"], p["wih"], p["whh"], p["b"], false)); }, s);
  }
  for (HeadKind kind : {HeadKind::kLinear, HeadKind::kMlp, HeadKind::kAttentivePool}) {
    const auto cfg = HeadCfg(kind, 8);
    auto s = RandomHead(cfg, rng, 0.7);
    s.Add("h", RandomTensor<double>({4, 8}, rng, 1.5));
    run(std::string("head ") + std::string(HeadKindName(kind)), [&](const Bindings<double>& p) {
      ForwardContext ctx;
      const V pooled = MeanRows(p["h"]);
      return WeightedSum(HeadForward(cfg, pooled, p["h"], p, ctx));
    }, s);
  }
  // Full toy-size patch transformer: 32 frames x 128 mels, 16 patches.
  for (HeadKind kind : {HeadKind::kLinear, HeadKind::kMlp, HeadKind::kAttentivePool}) {
    const auto m = ToyPatchModel(32, kind);
    auto s = InitParams<double>(m, 7);
    const auto x = RandomTensor<double>({32, 128}, rng, 3.0);
    GradCheckOptions opt;
    opt.max_per_tensor = 3;
    opt.seed = 5;
    run(std::string("toy patch transformer + ") + std::string(HeadKindName(kind)), [&](const Bindings<double>& p) {
      ForwardContext ctx;
      return WeightedSum(ModelLogits(m, x, p, ctx));
    }, s, opt);
  }
  const double secs = Seconds(t0);
  ck.Expect(secs < 120.0, "grad checks took " + Fmt("%.1f", secs) + " s");
  return ck.Finish("max relative error " + Fmt("%.2e", worst) + " (" + worst_name + ") in " + Fmt("%.1f", secs) + " s");
}

// ---- 2 ---------------------------------------------------------------------

Outcome DspOracles() {
  Checker ck;
  FeatureConfig cfg;
  FeatureExtractor fx(cfg);
  Rng rng(202);
  double stft_worst = 0.0, dct_worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Waveform w;
    w.sample_rate = 16000;
    w.samples.resize(16000);
    for (auto& v : w.samples) v = UniformRange(rng, -1.0, 1.0);
    const auto s = Stft(w, cfg);
    for (int f = 0; f < s.frames; ++f) {
      const auto ref = oracle::NaiveDftFrame(w.samples, static_cast<std::size_t>(f) * cfg.hop, cfg.frame_length,
                                             cfg.fft_size);
      for (int k = 0; k < s.bins; ++k) stft_worst = std::max(stft_worst, std::abs(s.at(f, k) - ref[k]));
    }
    if (trial < 5) {
      const auto lm = fx.LogMel(w);
      const auto mf = fx.MfccFromLogMel(lm);
      for (int f = 0; f < lm.frames(); f += 3) {
        std::vector<double> row(lm.data.data() + static_cast<std::size_t>(f) * cfg.n_mels,
                                lm.data.data() + static_cast<std::size_t>(f + 1) * cfg.n_mels);
        const auto ref = oracle::DctII(row, cfg.n_mfcc);
        for (int k = 0; k < cfg.n_mfcc; ++k) dct_worst = std::max(dct_worst, std::abs(mf.data(f, k) - ref[k]));
      }
    }
  }
  ck.Expect(stft_worst <= tol::kStftVsDft, "stft vs DFT max abs " + Fmt("%.3g", stft_worst));
  ck.Expect(dct_worst <= tol::kDct, "mfcc vs DCT-II max abs " + Fmt("%.3g", dct_worst));
  const double mel = HzToMel(1000.0);
  ck.Expect(std::abs(mel - 1000.0) <= tol::kMel1000, "mel(1000 Hz) = " + Fmt("%.4f", mel));
  return ck.Finish("stft " + Fmt("%.2e", stft_worst) + ", mfcc " + Fmt("%.2e", dct_worst) + ", mel(1000) " +
                   Fmt("%.3f", mel));
}

// ---- 3 ---------------------------------------------------------------------

Outcome HeadEquations() {
  Checker ck;
  Rng rng(303);
  double alpha_worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int t = static_cast<int>(UniformInt(rng, 1, 40));
    const int d = static_cast<int>(UniformInt(rng, 1, 24));
    auto cfg = HeadCfg(HeadKind::kAttentivePool, d);
    cfg.d_att = static_cast<int>(UniformInt(rng, 1, 16));
    const auto s = RandomHead(cfg, rng, 2.0);
    const auto out = AttentivePool(C(RandomTensor<double>({t, d}, rng, 3.0)), Bindings<double>::FromStore(s, false), cfg);
    double sum = 0.0;
    for (double a : out.alpha.value().values()) sum += a;
    alpha_worst = std::max(alpha_worst, std::abs(sum - 1.0));
  }
  ck.Expect(alpha_worst <= tol::kAlphaSum, "alpha sum off by " + Fmt("%.3g", alpha_worst));

  {
    auto cfg = HeadCfg(HeadKind::kAttentivePool, 6);
    const auto s = RandomHead(cfg, rng, 1.0);
    const auto h = RandomTensor<double>({1, 6}, rng);
    const auto out = AttentivePool(C(h), Bindings<double>::FromStore(s, false), cfg);
    double err = 0.0;
    for (int i = 0; i < 6; ++i) {
      err = std::max(err, std::abs(out.mu.value()[i] - h[i]));
      err = std::max(err, std::abs(out.sigma.value()[i] - std::sqrt(cfg.eps_var)));
    }
    ck.Expect(err <= tol::kHeadOracle, "T=1 case off by " + Fmt("%.3g", err));
  }
  {
    auto cfg = HeadCfg(HeadKind::kAttentivePool, 1, 2);
    cfg.d_att = 1;
    ParamStore<double> s;
    InitHeadParams(s, cfg, rng);
    s.at("head.attn.W1").value.Fill(1.0);
    s.at("head.attn.w2").value.Fill(1.0);
    const auto out = AttentivePool(C(Tensor<double>({2, 1}, {0.0, 1.0})), Bindings<double>::FromStore(s, false), cfg);
    const double a2 = 1.0 / (1.0 + std::exp(-std::tanh(1.0)));
    const double a1 = 1.0 - a2;
    const double err = std::max({std::abs(out.alpha.value()[0] - a1), std::abs(out.alpha.value()[1] - a2),
                                 std::abs(out.mu.value()[0] - a2), std::abs(out.sigma.value()[0] - std::sqrt(a1 * a2))});
    ck.Expect(err <= tol::kHeadOracle, "T=2, d=1 hand case off by " + Fmt("%.3g", err));
  }
  double mlp_worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = static_cast<int>(UniformInt(rng, 2, 16));
    auto cfg = HeadCfg(HeadKind::kMlp, d);
    const auto s = RandomHead(cfg, rng, 1.0);
    const auto h = RandomTensor<double>({1, d}, rng, 2.0);
    ForwardContext ctx;
    const auto y = MlpHead(C(h), Bindings<double>::FromStore(s, false), cfg, ctx).value();
    const auto ref = oracle::MlpHead(h.vector(), s.value("head.mlp.ln.gamma").vector(), s.value("head.mlp.ln.beta").vector(),
                                     Rows(s.value("head.mlp.W1")), s.value("head.mlp.b1").vector(),
                                     Rows(s.value("head.mlp.W2")), s.value("head.mlp.b2").vector(), 1e-5);
    for (int k = 0; k < cfg.num_classes; ++k) mlp_worst = std::max(mlp_worst, std::abs(y[k] - ref[k]));
  }
  ck.Expect(mlp_worst <= tol::kHeadOracle, "MLP head vs oracle " + Fmt("%.3g", mlp_worst));
  return ck.Finish("alpha sum " + Fmt("%.1e", alpha_worst) + ", MLP " + Fmt("%.1e", mlp_worst));
}

// ---- 4 ---------------------------------------------------------------------

Outcome PatchoutSemantics() {
  Checker ck;
  auto m = ToyPatchModel(96, HeadKind::kMlp);
  const auto store = InitParams<double>(m, 404);
  const auto p = Bindings<double>::FromStore(store, false);
  Rng rng(405);
  const auto spec = RandomTensor<double>({96, 128}, rng, 3.0);
  const auto seq = EmbedPatches(Patchify(spec, 16, 16), m.patch, p);
  ck.Expect(seq.n_freq == 8 && seq.n_time == 6, "grid is not 8x6");

  PatchConfig cfg = m.patch;
  cfg.patchout_freq = 2;
  cfg.patchout_time = 1;
  cfg.patchout_random = 0.5;
  ck.Expect(Patchout(seq, cfg, &rng, false).tokens.value() == seq.tokens.value(), "eval-mode patchout changed tokens");

  {
    auto zero = m;
    zero.patch.patchout_freq = zero.patch.patchout_time = zero.patch.patchout_random = 0.0;
    zero.head.dropout_p = 0.0;
    ForwardContext eval;
    Rng r(406);
    ForwardContext train{true, &r};
    const auto a = ModelLogits(zero, spec, p, eval).value();
    const auto b = ModelLogits(zero, spec, p, train).value();
    const double diff = testutil::MaxAbsDiff(a, b);
    ck.Expect(diff <= tol::kModeEquivalence, "rate-0 train vs eval differ by " + Fmt("%.3g", diff));
  }

  cfg.patchout_random = 0.0;
  int good = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng r(seed);
    const auto out = Patchout(seq, cfg, &r, true);
    std::set<int> rows, cols;
    for (int cell : out.kept_indices) {
      rows.insert(cell / seq.n_time);
      cols.insert(cell % seq.n_time);
    }
    bool ok = out.kept_indices.size() == 30 && out.tokens.shape()[0] == 31 && rows.size() == 6 && cols.size() == 5 &&
              std::is_sorted(out.kept_indices.begin(), out.kept_indices.end());
    for (int c = 0; ok && c < m.patch.embed_dim; ++c) ok = out.tokens.value()(0, c) == seq.tokens.value()(0, c);
    good += ok;
  }
  ck.Expect(good == 200, std::to_string(200 - good) + " of 200 seeds violated the (2,1) structured drop");
  return ck.Finish("200/200 seeds keep 30 patches and CLS");
}

// ---- 5 ---------------------------------------------------------------------

Outcome SplitSafety() {
  Checker ck;
  std::vector<SampleMeta> m;
  Rng rng(505);
  for (int a = 0; a < 91; ++a) {
    const int clips = static_cast<int>(UniformInt(rng, 70, 95));
    for (int c = 0; c < clips; ++c) {
      SampleMeta s;
      s.actor_id = 1001 + a;
      s.path = std::to_string(s.actor_id) + "_" + std::to_string(c) + ".wav";
      s.sentence_code = "S" + std::to_string(c % 12);
      s.emotion = c % 6;
      s.intensity_code = "XX";
      m.push_back(s);
    }
  }
  double worst = 0.0;
  int overlaps = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = SpeakerIndependentSplit(m, {0.70, 0.15, 0.15}, seed);
    std::set<int> seen;
    for (int k = 0; k < 3; ++k) {
      for (std::size_t i : s.samples[k]) {
        // Sample-level check: every sample's actor belongs to its split.
        if (!std::binary_search(s.actors[k].begin(), s.actors[k].end(), m[i].actor_id)) ++overlaps;
      }
      for (int a : s.actors[k]) {
        if (!seen.insert(a).second) ++overlaps;
      }
      worst = std::max(worst, std::abs(static_cast<double>(s.samples[k].size()) / m.size() - s.ratios[k]));
    }
    ck.Expect(seen.size() == 91, "seed " + std::to_string(seed) + " lost actors");
  }
  ck.Expect(overlaps == 0, std::to_string(overlaps) + " actor overlaps");
  ck.Expect(worst <= tol::kSplitFraction, "fraction off by " + Fmt("%.4f", worst));
  return ck.Finish("0 overlaps over 100 seeds, " + std::to_string(m.size()) + " clips, worst fraction error " +
                   Fmt("%.4f", worst));
}

// ---- 6 ---------------------------------------------------------------------

Outcome MetricsOracle() {
  Checker ck;
  Rng rng(606);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = static_cast<int>(UniformInt(rng, 1, 200));
    std::vector<int> t(n), p(n);
    for (int i = 0; i < n; ++i) {
      t[i] = static_cast<int>(UniformInt(rng, 0, 5));
      p[i] = UniformUnit(rng) < 0.5 ? t[i] : static_cast<int>(UniformInt(rng, 0, 5));
    }
    const auto cm = Confusion(t, p, 6);
    std::int64_t total = 0, diag = 0;
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b) total += cm.at(a, b), diag += a == b ? cm.at(a, b) : 0;
    int correct = 0;
    for (int i = 0; i < n; ++i) correct += t[i] == p[i];
    ck.Expect(total == n && diag == correct, "integer counts disagree in trial " + std::to_string(trial));
    const auto m = ComputeMetrics(cm);
    const auto o = oracle::FromPairs(t, p, 6);
    worst = std::max({worst, std::abs(m.accuracy - o.accuracy), std::abs(m.macro_precision - o.macro_p),
                      std::abs(m.macro_recall - o.macro_r), std::abs(m.macro_f1 - o.macro_f1)});
  }
  ck.Expect(worst <= tol::kMetricsFloat, "metrics differ by " + Fmt("%.3g", worst));

  ConfusionMatrix cm(2);
  cm.at(0, 0) = 3;
  cm.at(0, 1) = 1;
  cm.at(1, 0) = 2;
  cm.at(1, 1) = 4;
  const auto m = ComputeMetrics(cm);
  const double p0 = 3.0 / 5, p1 = 4.0 / 5, r0 = 3.0 / 4, r1 = 4.0 / 6;
  const double f0 = 2 * p0 * r0 / (p0 + r0), f1 = 2 * p1 * r1 / (p1 + r1);
  const double pinned = std::max({std::abs(m.accuracy - 0.7), std::abs(m.macro_precision - (p0 + p1) / 2),
                                  std::abs(m.macro_recall - (r0 + r1) / 2), std::abs(m.macro_f1 - (f0 + f1) / 2)});
  ck.Expect(pinned <= tol::kMetricsFloat, "pinned [[3,1],[2,4]] off by " + Fmt("%.3g", pinned));
  return ck.Finish("1000 pairs within " + Fmt("%.1e", worst) + ", pinned case exact");
}

// ---- 7 ---------------------------------------------------------------------

Outcome ToyEndToEnd() {
  Checker ck;
  std::string summary;
  struct Run {
    const char* config;
    double threshold;
  };
  for (const Run& run : {Run{"toy_patch_mlp.toml", tol::kToyPatchAccuracy}, Run{"toy_cnn_lstm.toml", tol::kToyCnnLstmAccuracy}}) {
    const auto dir = WorkDir(std::string("e2e_") + run.config);
    const auto r = Cli("train --config " + ConfigPath(run.config).string() + " --out " + (dir / "run").string(), dir);
    if (r.code != 0) {
      ck.Expect(false, std::string(run.config) + ": exit " + std::to_string(r.code) + ": " + LastLine(r.err));
      continue;
    }
    const auto report = ReadJson(dir / "run" / "report.json")["reports"][0];
    const auto history = ReadJson(dir / "run" / "history.json");
    const double acc = report["accuracy"].get<double>();
    const std::size_t epochs = history["epoch"].size();
    const auto split = ReadJson(dir / "run" / "split.json");
    ck.Expect(report["samples"].get<std::size_t>() == 120, std::string(run.config) + ": test split is not 120 clips");
    ck.Expect(acc >= run.threshold, std::string(run.config) + ": accuracy " + Fmt("%.4f", acc));
    ck.Expect(epochs <= 30, std::string(run.config) + ": " + std::to_string(epochs) + " epochs");
    ck.Expect(r.seconds < tol::kToyRunSeconds, std::string(run.config) + ": " + Fmt("%.0f", r.seconds) + " s");
    if (!summary.empty()) summary += "; ";
    summary += report["model"].get<std::string>() + " acc " + Fmt("%.4f", acc) + " in " + std::to_string(epochs) +
               " epochs, " + Fmt("%.0f", r.seconds) + " s";
  }
  return ck.Finish(summary);
}

// ---- 8 ---------------------------------------------------------------------

Outcome ToyCorpusValidity() {
  Checker ck;
  const auto cfg = LoadConfig(ConfigPath("toy_patch_mlp.toml"));
  const auto corpus = Corpus::Toy(cfg.dataset.toy_per_class, cfg.seed, cfg.dataset.toy);
  const auto split = SpeakerIndependentSplit(corpus.samples(), cfg.dataset.split_ratios, cfg.seed);
  PipelineOptions po;
  po.kind = InputKind::kLogMel;
  po.features = cfg.features;
  po.max_seconds = cfg.dataset.max_seconds;
  InputPipeline pipe(corpus, po);

  const int bins = cfg.features.n_mels;
  auto clip_mean = [&](std::size_t i) {
    const auto x = pipe.Input(i, false, 0);
    std::vector<double> v(bins, 0.0);
    for (int f = 0; f < x.rows(); ++f)
      for (int b = 0; b < bins; ++b) v[b] += x(f, b);
    for (auto& e : v) e /= x.rows();
    return v;
  };
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };

  // Pairwise property on whole-corpus class centroids.
  std::vector<std::vector<double>> all(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) all[i] = clip_mean(i);
  auto centroids = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::vector<double>> c(6, std::vector<double>(bins, 0.0));
    std::vector<int> n(6, 0);
    for (std::size_t i : idx) {
      const int y = corpus.samples()[i].emotion;
      for (int b = 0; b < bins; ++b) c[y][b] += all[i][b];
      ++n[y];
    }
    for (int y = 0; y < 6; ++y)
      for (auto& e : c[y]) e /= std::max(n[y], 1);
    return c;
  };
  std::vector<std::size_t> every(corpus.size());
  for (std::size_t i = 0; i < every.size(); ++i) every[i] = i;
  const auto cc = centroids(every);
  int pairs = 0;
  double min_dist = 1e300;
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b) {
      const double d = dist(cc[a], cc[b]);
      pairs += d >= tol::kCentroidDistance;
      min_dist = std::min(min_dist, d);
    }
  ck.Expect(pairs >= tol::kCentroidPairsRequired, std::to_string(pairs) + " of 15 centroid pairs >= 1.0");

  const auto train_c = centroids(split.train());
  int correct = 0;
  for (std::size_t i : split.test()) {
    int best = 0;
    for (int y = 1; y < 6; ++y)
      if (dist(all[i], train_c[y]) < dist(all[i], train_c[best])) best = y;
    correct += best == corpus.samples()[i].emotion;
  }
  const double acc = static_cast<double>(correct) / split.test().size();
  ck.Expect(acc >= tol::kNearestCentroidAccuracy, "nearest-centroid accuracy " + Fmt("%.4f", acc));
  return ck.Finish(std::to_string(pairs) + "/15 pairs >= 1.0 (min " + Fmt("%.2f", min_dist) +
                   "), nearest-centroid test accuracy " + Fmt("%.4f", acc));
}

// ---- 9 ---------------------------------------------------------------------

Outcome Determinism() {
  Checker ck;
  const auto dir = WorkDir("determinism");
  // Same --out for both runs: the checkpoint header records output_dir.
  for (const char* sub : {"a", "b"}) {
    const auto r = Cli("train --config " + ConfigPath("toy_ablate.toml").string() + " --deterministic --out " +
                           (dir / "run").string(),
                       dir);
    if (r.code != 0) return ck.Expect(false, "run " + std::string(sub) + ": " + LastLine(r.err)), ck.Finish("");
    fs::rename(dir / "run", dir / sub);
  }
  for (const char* f : {"history.json", "report.json", "checkpoint.bin"}) {
    ck.Expect(testutil::ReadBytes(dir / "a" / f) == testutil::ReadBytes(dir / "b" / f), std::string(f) + " differs");
  }
  return ck.Finish("history.json, report.json and checkpoint.bin bitwise equal");
}

// ---- 10 --------------------------------------------------------------------

Outcome AblationHarness() {
  Checker ck;
  const auto dir = WorkDir("ablate");
  const auto r = Cli("ablate --config " + ConfigPath("toy_ablate.toml").string() + " --out " + (dir / "out").string(), dir);
  if (r.code != 0) return ck.Expect(false, "ablate exit " + std::to_string(r.code) + ": " + LastLine(r.err)), ck.Finish("");
  std::ifstream in(dir / "out" / "table3.csv");
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  ck.Expect(rows.size() == 4, "table3.csv has " + std::to_string(rows.size()) + " lines");
  std::set<std::string> heads;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ck.Expect(rows[i].size() >= 5, "short row in table3.csv");
    if (rows[i].size() < 5) continue;
    heads.insert(rows[i][0]);
    for (int c = 1; c <= 2; ++c) {
      const double v = std::stod(rows[i][c]);
      ck.Expect(v >= 0.0 && v <= 1.0, "metric out of range: " + rows[i][c]);
    }
    ck.Expect(std::stoll(rows[i][3]) > 0, "head parameter count missing");
  }
  ck.Expect(heads == std::set<std::string>{"Linear", "MLP", "AttentivePool"}, "head rows are not Linear/MLP/AttentivePool");
  const auto summary = ReadJson(dir / "out" / "ablation.json");
  ck.Expect(summary["identical_data_order"].get<bool>(), "heads saw different batch orders");
  std::string detail = "3 rows:";
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() >= 2) detail += " " + rows[i][0] + "=" + rows[i][1];
  }
  return ck.Finish(detail);
}

// ---- 11 --------------------------------------------------------------------

Outcome CremaGated() {
  const char* env = std::getenv("SERFORGE_CREMA_DIR");
  if (!env || !*env) return {Outcome::kSkip, "set SERFORGE_CREMA_DIR to the CREMA-D AudioWAV directory"};
  Checker ck;
  const auto dir = WorkDir("crema");
  auto r = Cli("prepare --data-dir \"" + std::string(env) + "\" --out " + (dir / "prep").string(), dir);
  if (r.code != 0) return ck.Expect(false, "prepare: " + LastLine(r.err)), ck.Finish("");
  const auto rows = ReadManifestCsv(dir / "prep" / "manifest.csv").size();
  ck.Expect(rows == kCremaClipCount || r.err.find("warning") != std::string::npos,
            std::to_string(rows) + " rows without a warning");

  std::string text = testutil::ReadText(ConfigPath("crema_cnn_lstm.toml"));
  const auto pos = text.find("crema_dir = ");
  text.replace(pos, text.find('\n', pos) - pos, "crema_dir = " + json(std::string(env)).dump());
  std::ofstream(dir / "crema.toml") << text;
  r = Cli("train --config " + (dir / "crema.toml").string() + " --out " + (dir / "run").string(), dir);
  if (r.code != 0) return ck.Expect(false, "train: " + LastLine(r.err)), ck.Finish("");
  const double acc = ReadJson(dir / "run" / "report.json")["reports"][0]["accuracy"].get<double>();
  ck.Expect(acc >= tol::kCremaAccuracy, "CNN-LSTM test accuracy " + Fmt("%.4f", acc));
  return ck.Finish(std::to_string(rows) + " clips, CNN-LSTM test accuracy " + Fmt("%.4f", acc));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ser-forge acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "criterion numbers to run");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", GradientCorrectness},
      {"DSP oracles", DspOracles},
      {"head equations", HeadEquations},
      {"patchout semantics", PatchoutSemantics},
      {"split safety", SplitSafety},
      {"metrics oracle", MetricsOracle},
      {"toy end-to-end", ToyEndToEnd},
      {"toy corpus validity", ToyCorpusValidity},
      {"determinism", Determinism},
      {"ablation harness", AblationHarness},
      {"CREMA-D (optional)", CremaGated},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Outcome::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Outcome::kPass ? "PASS" : o.status == Outcome::kFail ? "FAIL" : "SKIP";
    failed += o.status == Outcome::kFail;
    std::cout << tag << " criterion " << n << " (" << criteria[i].first << "): " << o.detail << " ["
              << Fmt("%.1f", Seconds(t0)) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
