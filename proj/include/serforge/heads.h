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

#ifndef SERFORGE_HEADS_H_
#define SERFORGE_HEADS_H_

#include <string>
#include <string_view>

#include "serforge/ops.h"
#include "serforge/param_store.h"

namespace serforge {

inline constexpr int kNumEmotions = 6;

// Mode flag and random stream shared by every stochastic layer of one forward.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

enum class HeadKind { kLinear, kMlp, kAttentivePool };

std::string_view HeadKindName(HeadKind kind);
// Accepts "linear", "mlp", "attentive_pool" (case-insensitive) and the
// display names; anything else is a config error naming head.kind.
HeadKind ParseHeadKind(std::string_view name);

struct HeadConfig {
  HeadKind kind = HeadKind::kMlp;
  int d_in = 128;
  int mlp_hidden = 256;
  double dropout_p = 0.1;
  int num_classes = kNumEmotions;
  int d_att = 128;
  double eps_var = 1e-6;

  void Validate() const;
};

// Parameter names use the prefixes head.linear., head.mlp. and head.attn.
template <typename T>
void InitHeadParams(ParamStore<T>& store, const HeadConfig& cfg, Rng& rng);

// h [1, d] -> logits [1, K]
template <typename T>
Var<T> LinearHead(const Var<T>& h, const Bindings<T>& p);

// W2 · Dropout(ReLU(W1 · LayerNorm(h) + b1)) + b2
template <typename T>
Var<T> MlpHead(const Var<T>& h, const Bindings<T>& p, const HeadConfig& cfg, ForwardContext& ctx);

template <typename T>
struct AttentivePoolOutput {
  Var<T> logits;  // [1, K]
  Var<T> alpha;   // [1, T]
  Var<T> mu;      // [1, d]
  Var<T> sigma;   // [1, d]
};

// alpha = softmax_t(w2 · tanh(W1 h_t)), mu = sum alpha_t h_t,
// sigma = sqrt(max(sum alpha_t (h_t - mu)^2, eps_var)), logits = W [mu; sigma] + b.
template <typename T>
AttentivePoolOutput<T> AttentivePool(const Var<T>& tokens, const Bindings<T>& p,
                                     const HeadConfig& cfg);

// Dispatches on cfg.kind: Linear and MLP consume `pooled`, attentive pooling
// consumes `tokens`.
template <typename T>
Var<T> HeadForward(const HeadConfig& cfg, const Var<T>& pooled, const Var<T>& tokens,
                   const Bindings<T>& p, ForwardContext& ctx);

}  // namespace serforge

#endif  // SERFORGE_HEADS_H_
