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

#include "serforge/optim.h"

#include <cmath>
#include <numbers>

#include "serforge/error.h"

namespace serforge {

template <typename T>
void AdamStep(ParamStore<T>& store, AdamState<T>& state, double lr, const AdamOptions& opt) {
  for (const auto& e : store.entries()) {
    if (e.trainable && !e.has_grad) {
      Fail(ErrorKind::kTraining, "trainable parameter '" + e.name + "' has no gradient");
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (auto& e : store.entries()) {
    if (!e.trainable) continue;
    auto& m = state.first_moment[e.name];
    auto& v = state.second_moment[e.name];
    if (m.size() != e.value.size()) m = Tensor<T>(e.value.shape());
    if (v.size() != e.value.size()) v = Tensor<T>(e.value.shape());
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      const double mi = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
      const double vi = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + opt.eps);
      e.value[i] = static_cast<T>(e.value[i] - update);
    }
  }
}

double CosineLr(std::int64_t step, std::int64_t total_steps, double lr0) {
  if (total_steps <= 0) return lr0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0;
}

template <typename T>
double ClipGradNorm(ParamStore<T>& store, double max_norm) {
  double sq = 0.0;
  for (const auto& e : store.entries()) {
    if (!e.trainable || e.grad.empty()) continue;
    for (T g : e.grad.values()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& e : store.entries()) {
      if (!e.trainable) continue;
      for (auto& g : e.grad.values()) g *= s;
    }
  }
  return norm;
}

template void AdamStep(ParamStore<float>&, AdamState<float>&, double, const AdamOptions&);
template void AdamStep(ParamStore<double>&, AdamState<double>&, double, const AdamOptions&);
template double ClipGradNorm(ParamStore<float>&, double);
template double ClipGradNorm(ParamStore<double>&, double);

}  // namespace serforge
