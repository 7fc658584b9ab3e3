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

#ifndef SERFORGE_MODELS_H_
#define SERFORGE_MODELS_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "serforge/heads.h"
#include "serforge/ops.h"
#include "serforge/param_store.h"

namespace serforge {

// ---- Transformer blocks ----------------------------------------------------

// Parameters under `prefix`: ln1.{gamma,beta}, attn.{Wq,bq,Wk,bk,Wv,bv,Wo,bo},
// ln2.{gamma,beta}, mlp.{W1,b1,W2,b2}.
template <typename T>
void InitBlockParams(ParamStore<T>& store, const std::string& prefix, int d, int mlp_hidden,
                     Rng& rng);

// Wo · Attention(Wq x, Wk x, Wv x) with scale 1/sqrt(d / n_heads).
template <typename T>
Var<T> MultiHeadSelfAttention(const Var<T>& x, const Bindings<T>& p, const std::string& prefix,
                              int n_heads);

// Pre-norm: x + MHSA(LN1(x)), then + MLP(LN2(.)) with a ReLU hidden layer.
template <typename T>
Var<T> TransformerBlock(const Var<T>& x, const Bindings<T>& p, const std::string& prefix,
                        int n_heads);

// Backbone output consumed by the heads.
template <typename T>
struct Hidden {
  Var<T> pooled;  // [1, d]: CLS, mean of tokens, or final recurrent state
  Var<T> tokens;  // [N, d]
};

// ---- Patch spectrogram transformer -----------------------------------------

struct PatchConfig {
  int patch_h = 16;  // mel bins
  int patch_w = 16;  // frames
  int embed_dim = 128;
  int n_blocks = 2;
  int n_heads = 4;
  int mlp_ratio = 4;
  // Whole frequency rows / time columns dropped in training. Values below 1
  // are fractions of the grid axis, values >= 1 are counts.
  double patchout_freq = 0.0;
  double patchout_time = 0.0;
  // Extra unstructured fraction of the surviving patches.
  double patchout_random = 0.0;
  // Positional table sizes; derived from the input shape by the model config.
  int n_freq_patches = 8;
  int n_time_patches = 62;

  void Validate() const;
};

template <typename T>
struct Patches {
  Tensor<T> data;  // [N, patch_h * patch_w], freq-major patch order
  int n_freq = 0;
  int n_time = 0;
};

// spec is [frames, bins]. Trailing frames/bins that do not fill a patch are
// trimmed. Within a patch, element (i, j) is bin i and frame j of the patch.
template <typename T>
Patches<T> Patchify(const Tensor<T>& spec, int patch_h, int patch_w);
// Inverse of Patchify on the trimmed spectrogram.
template <typename T>
Tensor<T> AssemblePatches(const Patches<T>& patches, int patch_h, int patch_w);

template <typename T>
struct PatchSequence {
  Var<T> tokens;  // [1 + kept, d], CLS at row 0
  int n_freq = 0;
  int n_time = 0;
  std::vector<int> kept_indices;  // strictly increasing, into the freq-major grid
};

// Projection to d plus learned time and frequency embeddings, CLS prepended.
template <typename T>
PatchSequence<T> EmbedPatches(const Patches<T>& patches, const PatchConfig& cfg,
                              const Bindings<T>& p);

// Grid cells kept by one patchout draw, ascending.
std::vector<int> PatchoutKeep(int n_freq, int n_time, const PatchConfig& cfg, Rng& rng);

// Identity outside training; CLS is always retained.
template <typename T>
PatchSequence<T> Patchout(const PatchSequence<T>& seq, const PatchConfig& cfg, Rng* rng,
                          bool training);

// patchify -> embed -> patchout -> blocks -> final LayerNorm. pooled is the
// CLS row, tokens are the patch rows.
template <typename T>
Hidden<T> PatchTransformerForward(const Tensor<T>& spec, const PatchConfig& cfg,
                                  const Bindings<T>& p, ForwardContext& ctx);

// ---- Raw waveform encoder --------------------------------------------------

struct WaveformConfig {
  std::vector<int> conv_kernels{5, 2, 2, 2, 2, 2, 2};
  std::vector<int> conv_strides{5, 2, 2, 2, 2, 2, 2};
  int conv_channels = 64;
  int embed_dim = 128;
  int n_blocks = 2;
  int n_heads = 4;
  int mlp_ratio = 4;

  void Validate() const;
  int TotalStride() const;
};

// Tokens produced for `samples` input samples; 0 when shorter than the receptive field.
int WaveformTokenCount(int samples, const WaveformConfig& cfg);

// Strided conv1d + ReLU stack -> LayerNorm -> projection to d -> blocks ->
// final LayerNorm; pooled is the token mean.
template <typename T>
Hidden<T> WaveformEncoderForward(const Tensor<T>& samples, const WaveformConfig& cfg,
                                 const Bindings<T>& p, ForwardContext& ctx);

// ---- CNN-LSTM baseline -----------------------------------------------------

struct CnnLstmConfig {
  std::vector<int> conv_channels{32, 64, 64, 128};
  int kernel = 3;
  int pool = 2;
  int lstm_hidden = 128;
  int lstm_layers = 3;

  void Validate() const;
};

// Conv2d + ReLU + max-pool blocks over [time, coeff], coefficient axis folded
// into channels, stacked bidirectional LSTMs. pooled is the forward state at
// the last step joined with the backward state at the first step.
template <typename T>
Hidden<T> CnnLstmForward(const Tensor<T>& feat, const CnnLstmConfig& cfg, const Bindings<T>& p,
                         ForwardContext& ctx);

// ---- Whole model -----------------------------------------------------------

enum class ModelFamily { kPatchTransformer, kWaveformEncoder, kCnnLstm };
enum class InputKind { kLogMel, kMfcc, kWaveform };

std::string_view ModelFamilyName(ModelFamily family);
ModelFamily ParseModelFamily(std::string_view name);

struct ModelConfig {
  ModelFamily family = ModelFamily::kPatchTransformer;
  PatchConfig patch;
  WaveformConfig waveform;
  CnnLstmConfig cnn_lstm;
  HeadConfig head;
  // Input geometry: frames x bins for feature models, samples for the
  // waveform encoder.
  int input_frames = 0;
  int input_bins = 0;
  int input_samples = 0;

  InputKind input_kind() const;
  int BackboneDim() const;
  // Fills derived fields (positional table sizes, head input width) from the
  // input geometry, then validates.
  void Finalize();
  void Validate() const;
};

// Every parameter of backbone and head. Feature models also carry frozen
// input_norm.{mean,std} per-bin statistics (identity until set).
template <typename T>
ParamStore<T> InitParams(const ModelConfig& cfg, std::uint64_t seed);

template <typename T>
Hidden<T> BackboneForward(const ModelConfig& cfg, const Tensor<T>& input, const Bindings<T>& p,
                          ForwardContext& ctx);

// Logits [1, K] for one sample.
template <typename T>
Var<T> ModelLogits(const ModelConfig& cfg, const Tensor<T>& input, const Bindings<T>& p,
                   ForwardContext& ctx);

}  // namespace serforge

#endif  // SERFORGE_MODELS_H_
