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

#include "serforge/heads.h"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "serforge/error.h"
#include "serforge/init.h"

namespace serforge {

std::string_view HeadKindName(HeadKind kind) {
  switch (kind) {
    case HeadKind::kLinear: return "Linear";
    case HeadKind::kMlp: return "MLP";
    case HeadKind::kAttentivePool: return "AttentivePool";
  }
  return "?";
}

HeadKind ParseHeadKind(std::string_view name) {
  std::string s;
  for (char c : name) {
    if (c != '_' && c != '-') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "linear") return HeadKind::kLinear;
  if (s == "mlp") return HeadKind::kMlp;
  if (s == "attentivepool" || s == "attentivepooling" || s == "attention") {
    return HeadKind::kAttentivePool;
  }
  Fail(ErrorKind::kConfig, "head.kind: unknown head kind '" + std::string(name) +
                               "' (expected linear, mlp or attentive_pool)");
}

void HeadConfig::Validate() const {
  if (d_in < 1) Fail(ErrorKind::kConfig, "head.d_in must be >= 1");
  if (mlp_hidden < 1) Fail(ErrorKind::kConfig, "head.mlp_hidden must be >= 1");
  if (num_classes < 2) Fail(ErrorKind::kConfig, "head.num_classes must be >= 2");
  if (d_att < 1) Fail(ErrorKind::kConfig, "head.d_att must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) Fail(ErrorKind::kConfig, "head.dropout_p must lie in [0, 1)");
  if (!(eps_var > 0.0)) Fail(ErrorKind::kConfig, "head.eps_var must be positive");
}

template <typename T>
void InitHeadParams(ParamStore<T>& store, const HeadConfig& cfg, Rng& rng) {
  cfg.Validate();
  const int d = cfg.d_in, k = cfg.num_classes;
  switch (cfg.kind) {
    case HeadKind::kLinear:
      store.Add("head.linear.W", TruncatedNormal<T>({k, d}, 0.02, rng));
      store.Add("head.linear.b", Tensor<T>(Shape{k}));
      break;
    case HeadKind::kMlp:
      store.Add("head.mlp.ln.gamma", Tensor<T>(Shape{d}, T(1)));
      store.Add("head.mlp.ln.beta", Tensor<T>(Shape{d}));
      store.Add("head.mlp.W1", TruncatedNormal<T>({cfg.mlp_hidden, d}, 0.02, rng));
      store.Add("head.mlp.b1", Tensor<T>(Shape{cfg.mlp_hidden}));
      store.Add("head.mlp.W2", TruncatedNormal<T>({k, cfg.mlp_hidden}, 0.02, rng));
      store.Add("head.mlp.b2", Tensor<T>(Shape{k}));
      break;
    case HeadKind::kAttentivePool:
      store.Add("head.attn.W1", TruncatedNormal<T>({cfg.d_att, d}, 0.02, rng));
      store.Add("head.attn.w2", TruncatedNormal<T>({1, cfg.d_att}, 0.02, rng));
      store.Add("head.attn.W", TruncatedNormal<T>({k, 2 * d}, 0.02, rng));
      store.Add("head.attn.b", Tensor<T>(Shape{k}));
      break;
  }
}

template <typename T>
Var<T> LinearHead(const Var<T>& h, const Bindings<T>& p) {
  return Linear(h, p["head.linear.W"], p["head.linear.b"]);
}

template <typename T>
Var<T> MlpHead(const Var<T>& h, const Bindings<T>& p, const HeadConfig& cfg, ForwardContext& ctx) {
  auto x = LayerNorm(h, p["head.mlp.ln.gamma"], p["head.mlp.ln.beta"]);
  auto h1 = Relu(Linear(x, p["head.mlp.W1"], p["head.mlp.b1"]));
  h1 = Dropout(h1, cfg.dropout_p, ctx.rng, ctx.training);
  return Linear(h1, p["head.mlp.W2"], p["head.mlp.b2"]);
}

template <typename T>
AttentivePoolOutput<T> AttentivePool(const Var<T>& tokens, const Bindings<T>& p,
                                     const HeadConfig& cfg) {
  if (tokens.value().rank() != 2 || tokens.shape()[0] == 0) {
    Fail(ErrorKind::kShape, "attentive pooling needs a non-empty [T, d] token matrix, got " +
                                ShapeString(tokens.shape()));
  }
  const int t = tokens.shape()[0];
  Var<T> none;
  auto hidden = Tanh(Linear(tokens, p["head.attn.W1"], none));  // [T, d_att]
  auto scores = Linear(hidden, p["head.attn.w2"], none);        // [T, 1]
  AttentivePoolOutput<T> out;
  out.alpha = Softmax(Reshape(scores, Shape{1, t}));
  out.mu = MatMul(out.alpha, tokens);
  auto centered = SubRow(tokens, Reshape(out.mu, Shape{tokens.shape()[1]}));
  auto var = MatMul(out.alpha, Mul(centered, centered));
  out.sigma = SqrtFloor(var, static_cast<T>(cfg.eps_var));
  out.logits = Linear(ConcatCols<T>({out.mu, out.sigma}), p["head.attn.W"], p["head.attn.b"]);
  return out;
}

template <typename T>
Var<T> HeadForward(const HeadConfig& cfg, const Var<T>& pooled, const Var<T>& tokens,
                   const Bindings<T>& p, ForwardContext& ctx) {
  switch (cfg.kind) {
    case HeadKind::kLinear: return LinearHead(pooled, p);
    case HeadKind::kMlp: return MlpHead(pooled, p, cfg, ctx);
    case HeadKind::kAttentivePool: return AttentivePool(tokens, p, cfg).logits;
  }
  return {};
}

#define SERFORGE_INSTANTIATE_HEADS(T)                                                        \
  template void InitHeadParams<T>(ParamStore<T>&, const HeadConfig&, Rng&);                  \
  template Var<T> LinearHead<T>(const Var<T>&, const Bindings<T>&);                          \
  template Var<T> MlpHead<T>(const Var<T>&, const Bindings<T>&, const HeadConfig&,           \
                             ForwardContext&);                                               \
  template AttentivePoolOutput<T> AttentivePool<T>(const Var<T>&, const Bindings<T>&,        \
                                                   const HeadConfig&);                       \
  template Var<T> HeadForward<T>(const HeadConfig&, const Var<T>&, const Var<T>&,            \
                                 const Bindings<T>&, ForwardContext&);

SERFORGE_INSTANTIATE_HEADS(float)
SERFORGE_INSTANTIATE_HEADS(double)

}  // namespace serforge
