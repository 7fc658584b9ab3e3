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

#include "serforge/models.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "serforge/error.h"
#include "serforge/init.h"

namespace serforge {

namespace {

std::vector<int> Range(int begin, int end) {
  std::vector<int> v(std::max(0, end - begin));
  std::iota(v.begin(), v.end(), begin);
  return v;
}

template <typename T>
void AddLayerNorm(ParamStore<T>& store, const std::string& prefix, int d) {
  store.Add(prefix + ".gamma", Tensor<T>(Shape{d}, T(1)));
  store.Add(prefix + ".beta", Tensor<T>(Shape{d}));
}

template <typename T>
void AddProjection(ParamStore<T>& store, const std::string& prefix, int out, int in, Rng& rng) {
  store.Add(prefix + ".W", TruncatedNormal<T>({out, in}, 0.02, rng));
  store.Add(prefix + ".b", Tensor<T>(Shape{out}));
}

template <typename T>
Var<T> Norm(const Var<T>& x, const Bindings<T>& p, const std::string& prefix) {
  return LayerNorm(x, p[prefix + ".gamma"], p[prefix + ".beta"]);
}

template <typename T>
Var<T> Proj(const Var<T>& x, const Bindings<T>& p, const std::string& prefix) {
  return Linear(x, p[prefix + ".W"], p[prefix + ".b"]);
}

int ResolveCount(double v, int n) {
  if (v <= 0.0) return 0;
  if (v < 1.0) return static_cast<int>(std::lround(v * n));
  return static_cast<int>(v);
}

// k distinct values from [0, n), ascending.
std::vector<int> SampleWithoutReplacement(int n, int k, Rng& rng) {
  auto all = Range(0, n);
  Shuffle(all.begin(), all.end(), rng);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

// ---- Transformer blocks ----------------------------------------------------

template <typename T>
void InitBlockParams(ParamStore<T>& store, const std::string& prefix, int d, int mlp_hidden,
                     Rng& rng) {
  AddLayerNorm(store, prefix + ".ln1", d);
  for (const char* n : {"q", "k", "v", "o"}) {
    store.Add(prefix + ".attn.W" + n, TruncatedNormal<T>({d, d}, 0.02, rng));
    store.Add(prefix + ".attn.b" + n, Tensor<T>(Shape{d}));
  }
  AddLayerNorm(store, prefix + ".ln2", d);
  store.Add(prefix + ".mlp.W1", TruncatedNormal<T>({mlp_hidden, d}, 0.02, rng));
  store.Add(prefix + ".mlp.b1", Tensor<T>(Shape{mlp_hidden}));
  store.Add(prefix + ".mlp.W2", TruncatedNormal<T>({d, mlp_hidden}, 0.02, rng));
  store.Add(prefix + ".mlp.b2", Tensor<T>(Shape{d}));
}

template <typename T>
Var<T> MultiHeadSelfAttention(const Var<T>& x, const Bindings<T>& p, const std::string& prefix,
                              int n_heads) {
  const std::string a = prefix + ".attn.";
  auto q = Linear(x, p[a + "Wq"], p[a + "bq"]);
  auto k = Linear(x, p[a + "Wk"], p[a + "bk"]);
  auto v = Linear(x, p[a + "Wv"], p[a + "bv"]);
  return Linear(Attention(q, k, v, n_heads), p[a + "Wo"], p[a + "bo"]);
}

template <typename T>
Var<T> TransformerBlock(const Var<T>& x, const Bindings<T>& p, const std::string& prefix,
                        int n_heads) {
  auto h = Add(x, MultiHeadSelfAttention(Norm(x, p, prefix + ".ln1"), p, prefix, n_heads));
  auto m = Relu(Linear(Norm(h, p, prefix + ".ln2"), p[prefix + ".mlp.W1"], p[prefix + ".mlp.b1"]));
  return Add(h, Linear(m, p[prefix + ".mlp.W2"], p[prefix + ".mlp.b2"]));
}

namespace {

template <typename T>
Var<T> RunBlocks(Var<T> x, const Bindings<T>& p, int n_blocks, int n_heads) {
  for (int i = 0; i < n_blocks; ++i) x = TransformerBlock(x, p, "blocks." + std::to_string(i), n_heads);
  return Norm(x, p, "norm");
}

}  // namespace

// ---- Patch spectrogram transformer -----------------------------------------

void PatchConfig::Validate() const {
  if (patch_h < 1 || patch_w < 1) Fail(ErrorKind::kConfig, "model.patch: patch sizes must be >= 1");
  if (embed_dim < 1 || n_heads < 1 || embed_dim % n_heads != 0) {
    Fail(ErrorKind::kConfig, "model.patch.embed_dim must be divisible by model.patch.n_heads");
  }
  if (n_blocks < 0 || mlp_ratio < 1) Fail(ErrorKind::kConfig, "model.patch: n_blocks >= 0 and mlp_ratio >= 1 required");
  if (patchout_freq < 0 || patchout_time < 0) Fail(ErrorKind::kConfig, "model.patch: patchout must be >= 0");
  if (!(patchout_random >= 0 && patchout_random < 1)) {
    Fail(ErrorKind::kConfig, "model.patch.patchout_random must lie in [0, 1)");
  }
  if (n_freq_patches < 1 || n_time_patches < 1) {
    Fail(ErrorKind::kConfig, "model.patch: input smaller than one patch");
  }
}

template <typename T>
Patches<T> Patchify(const Tensor<T>& spec, int patch_h, int patch_w) {
  if (spec.rank() != 2) Fail(ErrorKind::kShape, "patchify expects [frames, bins], got " + ShapeString(spec.shape()));
  const int frames = spec.dim(0), bins = spec.dim(1);
  Patches<T> out;
  out.n_freq = bins / patch_h;
  out.n_time = frames / patch_w;
  if (out.n_freq == 0 || out.n_time == 0) {
    Fail(ErrorKind::kShape, "spectrogram " + ShapeString(spec.shape()) + " is smaller than one " +
                                std::to_string(patch_h) + "x" + std::to_string(patch_w) + " patch");
  }
  const int plen = patch_h * patch_w;
  out.data = Tensor<T>(Shape{out.n_freq * out.n_time, plen});
  for (int f = 0; f < out.n_freq; ++f) {
    for (int t = 0; t < out.n_time; ++t) {
      T* dst = out.data.data() + static_cast<std::size_t>(f * out.n_time + t) * plen;
      for (int i = 0; i < patch_h; ++i) {
        for (int j = 0; j < patch_w; ++j) dst[i * patch_w + j] = spec(t * patch_w + j, f * patch_h + i);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> AssemblePatches(const Patches<T>& patches, int patch_h, int patch_w) {
  Tensor<T> spec(Shape{patches.n_time * patch_w, patches.n_freq * patch_h});
  const int plen = patch_h * patch_w;
  for (int f = 0; f < patches.n_freq; ++f) {
    for (int t = 0; t < patches.n_time; ++t) {
      const T* src = patches.data.data() + static_cast<std::size_t>(f * patches.n_time + t) * plen;
      for (int i = 0; i < patch_h; ++i) {
        for (int j = 0; j < patch_w; ++j) spec(t * patch_w + j, f * patch_h + i) = src[i * patch_w + j];
      }
    }
  }
  return spec;
}

template <typename T>
PatchSequence<T> EmbedPatches(const Patches<T>& patches, const PatchConfig& cfg,
                              const Bindings<T>& p) {
  if (patches.n_freq > cfg.n_freq_patches || patches.n_time > cfg.n_time_patches) {
    Fail(ErrorKind::kShape, "patch grid " + std::to_string(patches.n_freq) + "x" +
                                std::to_string(patches.n_time) + " exceeds positional tables " +
                                std::to_string(cfg.n_freq_patches) + "x" +
                                std::to_string(cfg.n_time_patches));
  }
  const int n = patches.n_freq * patches.n_time;
  std::vector<int> freq_idx(n), time_idx(n);
  for (int i = 0; i < n; ++i) {
    freq_idx[i] = i / patches.n_time;
    time_idx[i] = i % patches.n_time;
  }
  auto x = Proj(Var<T>::Constant(patches.data), p, "patch_embed");
  x = Add(x, GatherRows(p["pos.time"], time_idx));
  x = Add(x, GatherRows(p["pos.freq"], freq_idx));
  PatchSequence<T> seq;
  seq.tokens = ConcatRows<T>({p["cls"], x});
  seq.n_freq = patches.n_freq;
  seq.n_time = patches.n_time;
  seq.kept_indices = Range(0, n);
  return seq;
}

std::vector<int> PatchoutKeep(int n_freq, int n_time, const PatchConfig& cfg, Rng& rng) {
  const int drop_f = ResolveCount(cfg.patchout_freq, n_freq);
  const int drop_t = ResolveCount(cfg.patchout_time, n_time);
  if (drop_f >= n_freq || drop_t >= n_time) {
    Fail(ErrorKind::kConfig, "patchout removes every patch of a " + std::to_string(n_freq) + "x" +
                                 std::to_string(n_time) + " grid");
  }
  std::vector<char> freq_gone(n_freq, 0), time_gone(n_time, 0);
  if (drop_f > 0) {
    for (int f : SampleWithoutReplacement(n_freq, drop_f, rng)) freq_gone[f] = 1;
  }
  if (drop_t > 0) {
    for (int t : SampleWithoutReplacement(n_time, drop_t, rng)) time_gone[t] = 1;
  }
  std::vector<int> kept;
  for (int f = 0; f < n_freq; ++f) {
    for (int t = 0; t < n_time; ++t) {
      if (!freq_gone[f] && !time_gone[t]) kept.push_back(f * n_time + t);
    }
  }
  const int drop_r = static_cast<int>(std::floor(cfg.patchout_random * kept.size()));
  if (drop_r > 0) {
    const auto pick = SampleWithoutReplacement(static_cast<int>(kept.size()),
                                               static_cast<int>(kept.size()) - drop_r, rng);
    std::vector<int> sub;
    sub.reserve(pick.size());
    for (int i : pick) sub.push_back(kept[i]);
    kept = std::move(sub);
  }
  return kept;
}

template <typename T>
PatchSequence<T> Patchout(const PatchSequence<T>& seq, const PatchConfig& cfg, Rng* rng,
                          bool training) {
  if (!training) return seq;
  if (cfg.patchout_freq == 0 && cfg.patchout_time == 0 && cfg.patchout_random == 0) return seq;
  if (rng == nullptr) Fail(ErrorKind::kConfig, "patchout in training mode needs a random stream");
  const auto keep = PatchoutKeep(seq.n_freq, seq.n_time, cfg, *rng);
  // Map grid cells to rows of the current token matrix.
  std::vector<int> row_of(seq.n_freq * seq.n_time, -1);
  for (std::size_t i = 0; i < seq.kept_indices.size(); ++i) row_of[seq.kept_indices[i]] = static_cast<int>(i) + 1;
  PatchSequence<T> out;
  out.n_freq = seq.n_freq;
  out.n_time = seq.n_time;
  std::vector<int> rows{0};
  for (int cell : keep) {
    if (row_of[cell] < 0) continue;
    rows.push_back(row_of[cell]);
    out.kept_indices.push_back(cell);
  }
  if (out.kept_indices.empty()) Fail(ErrorKind::kConfig, "patchout left no patch tokens");
  out.tokens = GatherRows(seq.tokens, rows);
  return out;
}

template <typename T>
Hidden<T> PatchTransformerForward(const Tensor<T>& spec, const PatchConfig& cfg,
                                  const Bindings<T>& p, ForwardContext& ctx) {
  auto seq = EmbedPatches(Patchify(spec, cfg.patch_h, cfg.patch_w), cfg, p);
  seq = Patchout(seq, cfg, ctx.rng, ctx.training);
  auto h = RunBlocks(seq.tokens, p, cfg.n_blocks, cfg.n_heads);
  const int n = static_cast<int>(seq.kept_indices.size());
  return {GatherRows(h, {0}), GatherRows(h, Range(1, n + 1))};
}

// ---- Raw waveform encoder --------------------------------------------------

void WaveformConfig::Validate() const {
  if (conv_kernels.empty() || conv_kernels.size() != conv_strides.size()) {
    Fail(ErrorKind::kConfig, "model.waveform: conv_kernels and conv_strides must be non-empty and equally long");
  }
  for (std::size_t i = 0; i < conv_kernels.size(); ++i) {
    if (conv_kernels[i] < 1 || conv_strides[i] < 1) {
      Fail(ErrorKind::kConfig, "model.waveform: kernels and strides must be >= 1");
    }
  }
  if (conv_channels < 1) Fail(ErrorKind::kConfig, "model.waveform.conv_channels must be >= 1");
  if (embed_dim < 1 || n_heads < 1 || embed_dim % n_heads != 0) {
    Fail(ErrorKind::kConfig, "model.waveform.embed_dim must be divisible by model.waveform.n_heads");
  }
  if (n_blocks < 0 || mlp_ratio < 1) Fail(ErrorKind::kConfig, "model.waveform: n_blocks >= 0 and mlp_ratio >= 1 required");
}

int WaveformConfig::TotalStride() const {
  int s = 1;
  for (int v : conv_strides) s *= v;
  return s;
}

int WaveformTokenCount(int samples, const WaveformConfig& cfg) {
  int len = samples;
  for (std::size_t i = 0; i < cfg.conv_kernels.size(); ++i) {
    if (len < cfg.conv_kernels[i]) return 0;
    len = ConvOutputSize(len, cfg.conv_kernels[i], cfg.conv_strides[i], 0);
  }
  return len;
}

template <typename T>
Hidden<T> WaveformEncoderForward(const Tensor<T>& samples, const WaveformConfig& cfg,
                                 const Bindings<T>& p, ForwardContext&) {
  const int len = static_cast<int>(samples.size());
  if (WaveformTokenCount(len, cfg) < 1) {
    Fail(ErrorKind::kShape, "waveform of " + std::to_string(len) +
                                " samples is shorter than the encoder receptive field");
  }
  auto x = Var<T>::Constant(samples.Reshaped(Shape{1, len}));
  for (std::size_t i = 0; i < cfg.conv_kernels.size(); ++i) {
    const std::string pre = "wave.conv." + std::to_string(i);
    x = Relu(Conv1d(x, p[pre + ".W"], p[pre + ".b"], cfg.conv_strides[i], 0));
  }
  auto tokens = Proj(Norm(Transpose(x), p, "wave.proj.ln"), p, "wave.proj");
  auto h = RunBlocks(tokens, p, cfg.n_blocks, cfg.n_heads);
  return {MeanRows(h), h};
}

// ---- CNN-LSTM baseline -----------------------------------------------------

void CnnLstmConfig::Validate() const {
  if (conv_channels.empty()) Fail(ErrorKind::kConfig, "model.cnn_lstm.conv_channels must be non-empty");
  for (int c : conv_channels) {
    if (c < 1) Fail(ErrorKind::kConfig, "model.cnn_lstm.conv_channels entries must be >= 1");
  }
  if (kernel < 1 || kernel % 2 == 0) Fail(ErrorKind::kConfig, "model.cnn_lstm.kernel must be odd and >= 1");
  if (pool < 1) Fail(ErrorKind::kConfig, "model.cnn_lstm.pool must be >= 1");
  if (lstm_hidden < 1 || lstm_layers < 1) Fail(ErrorKind::kConfig, "model.cnn_lstm: lstm_hidden and lstm_layers must be >= 1");
}

namespace {

int CnnLstmSteps(int frames, const CnnLstmConfig& cfg) {
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) frames /= cfg.pool;
  return frames;
}

int CnnLstmFeatureWidth(int bins, const CnnLstmConfig& cfg) {
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) bins /= cfg.pool;
  return bins * cfg.conv_channels.back();
}

}  // namespace

template <typename T>
Hidden<T> CnnLstmForward(const Tensor<T>& feat, const CnnLstmConfig& cfg, const Bindings<T>& p,
                         ForwardContext&) {
  if (feat.rank() != 2) Fail(ErrorKind::kShape, "CNN-LSTM expects [frames, coeffs], got " + ShapeString(feat.shape()));
  const int frames = feat.dim(0), bins = feat.dim(1);
  if (CnnLstmSteps(frames, cfg) < 1 || CnnLstmFeatureWidth(bins, cfg) < 1) {
    Fail(ErrorKind::kShape, "input " + ShapeString(feat.shape()) + " too small for " +
                                std::to_string(cfg.conv_channels.size()) + " pooling stages");
  }
  const int pad = cfg.kernel / 2;
  auto x = Var<T>::Constant(feat.Reshaped(Shape{1, frames, bins}));
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    const std::string pre = "cnn.conv." + std::to_string(i);
    x = Relu(Conv2d(x, p[pre + ".W"], p[pre + ".b"], Conv2dOptions{1, 1, pad, pad}));
    if (cfg.pool > 1) x = MaxPool2d(x, cfg.pool);
  }
  // [C, T', F'] -> [T', F' * C]
  const int c = x.shape()[0], t = x.shape()[1], f = x.shape()[2];
  auto seq = Reshape(Transpose(Reshape(x, Shape{c, t * f})), Shape{t, f * c});
  Var<T> fwd, bwd;
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    const std::string pre = "lstm." + std::to_string(l);
    fwd = Lstm(seq, p[pre + ".fwd.W_ih"], p[pre + ".fwd.W_hh"], p[pre + ".fwd.b"], false);
    bwd = Lstm(seq, p[pre + ".bwd.W_ih"], p[pre + ".bwd.W_hh"], p[pre + ".bwd.b"], true);
    seq = ConcatCols<T>({fwd, bwd});
  }
  auto pooled = ConcatCols<T>({GatherRows(fwd, {t - 1}), GatherRows(bwd, {0})});
  return {pooled, seq};
}

// ---- Whole model -----------------------------------------------------------

std::string_view ModelFamilyName(ModelFamily family) {
  switch (family) {
    case ModelFamily::kPatchTransformer: return "patch_transformer";
    case ModelFamily::kWaveformEncoder: return "waveform_encoder";
    case ModelFamily::kCnnLstm: return "cnn_lstm";
  }
  return "?";
}

ModelFamily ParseModelFamily(std::string_view name) {
  std::string s;
  for (char c : name) {
    if (c != '_' && c != '-') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "patchtransformer" || s == "passt") return ModelFamily::kPatchTransformer;
  if (s == "waveformencoder" || s == "distilhubert") return ModelFamily::kWaveformEncoder;
  if (s == "cnnlstm") return ModelFamily::kCnnLstm;
  Fail(ErrorKind::kConfig, "model.family: unknown model family '" + std::string(name) +
                               "' (expected patch_transformer, waveform_encoder or cnn_lstm)");
}

InputKind ModelConfig::input_kind() const {
  switch (family) {
    case ModelFamily::kPatchTransformer: return InputKind::kLogMel;
    case ModelFamily::kWaveformEncoder: return InputKind::kWaveform;
    case ModelFamily::kCnnLstm: return InputKind::kMfcc;
  }
  return InputKind::kLogMel;
}

int ModelConfig::BackboneDim() const {
  switch (family) {
    case ModelFamily::kPatchTransformer: return patch.embed_dim;
    case ModelFamily::kWaveformEncoder: return waveform.embed_dim;
    case ModelFamily::kCnnLstm: return 2 * cnn_lstm.lstm_hidden;
  }
  return 0;
}

void ModelConfig::Finalize() {
  if (family == ModelFamily::kPatchTransformer && patch.patch_h > 0 && patch.patch_w > 0) {
    patch.n_freq_patches = input_bins / patch.patch_h;
    patch.n_time_patches = input_frames / patch.patch_w;
  }
  head.d_in = BackboneDim();
  Validate();
}

void ModelConfig::Validate() const {
  head.Validate();
  if (head.d_in != BackboneDim()) {
    Fail(ErrorKind::kConfig, "head.d_in " + std::to_string(head.d_in) + " does not match backbone width " +
                                 std::to_string(BackboneDim()));
  }
  switch (family) {
    case ModelFamily::kPatchTransformer:
      patch.Validate();
      if (input_frames < patch.patch_w || input_bins < patch.patch_h) {
        Fail(ErrorKind::kConfig, "model.patch: input " + std::to_string(input_frames) + "x" +
                                     std::to_string(input_bins) + " is smaller than one patch");
      }
      break;
    case ModelFamily::kWaveformEncoder:
      waveform.Validate();
      if (WaveformTokenCount(input_samples, waveform) < 1) {
        Fail(ErrorKind::kConfig, "model.waveform: clips of " + std::to_string(input_samples) +
                                     " samples are shorter than the receptive field");
      }
      break;
    case ModelFamily::kCnnLstm:
      cnn_lstm.Validate();
      if (CnnLstmSteps(input_frames, cnn_lstm) < 1 || CnnLstmFeatureWidth(input_bins, cnn_lstm) < 1) {
        Fail(ErrorKind::kConfig, "model.cnn_lstm: input " + std::to_string(input_frames) + "x" +
                                     std::to_string(input_bins) + " is too small for the pooling stack");
      }
      break;
  }
}

template <typename T>
ParamStore<T> InitParams(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  ParamStore<T> store;
  Rng rng = MakeRng(seed, Stream::kInit);
  if (cfg.input_kind() != InputKind::kWaveform) {
    store.Add("input_norm.mean", Tensor<T>(Shape{cfg.input_bins}), false);
    store.Add("input_norm.std", Tensor<T>(Shape{cfg.input_bins}, T(1)), false);
  }
  switch (cfg.family) {
    case ModelFamily::kPatchTransformer: {
      const auto& pc = cfg.patch;
      const int d = pc.embed_dim;
      AddProjection(store, "patch_embed", d, pc.patch_h * pc.patch_w, rng);
      store.Add("pos.time", TruncatedNormal<T>({pc.n_time_patches, d}, 0.02, rng));
      store.Add("pos.freq", TruncatedNormal<T>({pc.n_freq_patches, d}, 0.02, rng));
      store.Add("cls", TruncatedNormal<T>({1, d}, 0.02, rng));
      for (int i = 0; i < pc.n_blocks; ++i) {
        InitBlockParams(store, "blocks." + std::to_string(i), d, pc.mlp_ratio * d, rng);
      }
      AddLayerNorm(store, "norm", d);
      break;
    }
    case ModelFamily::kWaveformEncoder: {
      const auto& wc = cfg.waveform;
      int in = 1;
      for (std::size_t i = 0; i < wc.conv_kernels.size(); ++i) {
        const std::string pre = "wave.conv." + std::to_string(i);
        const int fan_in = in * wc.conv_kernels[i];
        store.Add(pre + ".W", UniformInit<T>({wc.conv_channels, in, wc.conv_kernels[i]},
                                             std::sqrt(6.0 / fan_in), rng));
        store.Add(pre + ".b", Tensor<T>(Shape{wc.conv_channels}));
        in = wc.conv_channels;
      }
      AddLayerNorm(store, "wave.proj.ln", wc.conv_channels);
      AddProjection(store, "wave.proj", wc.embed_dim, wc.conv_channels, rng);
      for (int i = 0; i < wc.n_blocks; ++i) {
        InitBlockParams(store, "blocks." + std::to_string(i), wc.embed_dim, wc.mlp_ratio * wc.embed_dim, rng);
      }
      AddLayerNorm(store, "norm", wc.embed_dim);
      break;
    }
    case ModelFamily::kCnnLstm: {
      const auto& cc = cfg.cnn_lstm;
      int in = 1;
      for (std::size_t i = 0; i < cc.conv_channels.size(); ++i) {
        const std::string pre = "cnn.conv." + std::to_string(i);
        const int fan_in = in * cc.kernel * cc.kernel;
        store.Add(pre + ".W", UniformInit<T>({cc.conv_channels[i], in, cc.kernel, cc.kernel},
                                             std::sqrt(6.0 / fan_in), rng));
        store.Add(pre + ".b", Tensor<T>(Shape{cc.conv_channels[i]}));
        in = cc.conv_channels[i];
      }
      const int h = cc.lstm_hidden;
      const double bound = 1.0 / std::sqrt(static_cast<double>(h));
      int width = CnnLstmFeatureWidth(cfg.input_bins, cc);
      for (int l = 0; l < cc.lstm_layers; ++l) {
        for (const char* dir : {"fwd", "bwd"}) {
          const std::string pre = "lstm." + std::to_string(l) + "." + dir;
          store.Add(pre + ".W_ih", UniformInit<T>({4 * h, width}, bound, rng));
          store.Add(pre + ".W_hh", UniformInit<T>({4 * h, h}, bound, rng));
          store.Add(pre + ".b", UniformInit<T>({4 * h}, bound, rng));
        }
        width = 2 * h;
      }
      break;
    }
  }
  InitHeadParams(store, cfg.head, rng);
  return store;
}

template <typename T>
Hidden<T> BackboneForward(const ModelConfig& cfg, const Tensor<T>& input, const Bindings<T>& p,
                          ForwardContext& ctx) {
  if (cfg.input_kind() == InputKind::kWaveform) {
    return WaveformEncoderForward(input, cfg.waveform, p, ctx);
  }
  if (input.rank() != 2 || input.dim(1) != cfg.input_bins) {
    Fail(ErrorKind::kShape, "model expects [frames, " + std::to_string(cfg.input_bins) +
                                "] features, got " + ShapeString(input.shape()));
  }
  // Per-bin standardization with the frozen training statistics.
  const auto& mean = p["input_norm.mean"].value();
  const auto& sd = p["input_norm.std"].value();
  Tensor<T> x = input;
  for (int r = 0; r < x.rows(); ++r) {
    for (int c = 0; c < x.cols(); ++c) x(r, c) = (x(r, c) - mean[c]) / sd[c];
  }
  if (cfg.family == ModelFamily::kPatchTransformer) return PatchTransformerForward(x, cfg.patch, p, ctx);
  return CnnLstmForward(x, cfg.cnn_lstm, p, ctx);
}

template <typename T>
Var<T> ModelLogits(const ModelConfig& cfg, const Tensor<T>& input, const Bindings<T>& p,
                   ForwardContext& ctx) {
  auto hidden = BackboneForward(cfg, input, p, ctx);
  return HeadForward(cfg.head, hidden.pooled, hidden.tokens, p, ctx);
}

#define SERFORGE_INSTANTIATE_MODELS(T)                                                           \
  template void InitBlockParams<T>(ParamStore<T>&, const std::string&, int, int, Rng&);          \
  template Var<T> MultiHeadSelfAttention<T>(const Var<T>&, const Bindings<T>&,                   \
                                            const std::string&, int);                            \
  template Var<T> TransformerBlock<T>(const Var<T>&, const Bindings<T>&, const std::string&,     \
                                      int);                                                      \
  template Patches<T> Patchify<T>(const Tensor<T>&, int, int);                                   \
  template Tensor<T> AssemblePatches<T>(const Patches<T>&, int, int);                            \
  template PatchSequence<T> EmbedPatches<T>(const Patches<T>&, const PatchConfig&,               \
                                            const Bindings<T>&);                                 \
  template PatchSequence<T> Patchout<T>(const PatchSequence<T>&, const PatchConfig&, Rng*,       \
                                        bool);                                                   \
  template Hidden<T> PatchTransformerForward<T>(const Tensor<T>&, const PatchConfig&,            \
                                                const Bindings<T>&, ForwardContext&);            \
  template Hidden<T> WaveformEncoderForward<T>(const Tensor<T>&, const WaveformConfig&,          \
                                               const Bindings<T>&, ForwardContext&);             \
  template Hidden<T> CnnLstmForward<T>(const Tensor<T>&, const CnnLstmConfig&,                   \
                                       const Bindings<T>&, ForwardContext&);                     \
  template ParamStore<T> InitParams<T>(const ModelConfig&, std::uint64_t);                       \
  template Hidden<T> BackboneForward<T>(const ModelConfig&, const Tensor<T>&,                    \
                                        const Bindings<T>&, ForwardContext&);                    \
  template Var<T> ModelLogits<T>(const ModelConfig&, const Tensor<T>&, const Bindings<T>&,       \
                                 ForwardContext&);

SERFORGE_INSTANTIATE_MODELS(float)
SERFORGE_INSTANTIATE_MODELS(double)

}  // namespace serforge
