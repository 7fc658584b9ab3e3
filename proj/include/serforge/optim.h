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

#ifndef SERFORGE_OPTIM_H_
#define SERFORGE_OPTIM_H_

#include <cstdint>
#include <string>
#include <unordered_map>

#include "serforge/param_store.h"

namespace serforge {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::unordered_map<std::string, Tensor<T>> first_moment;
  std::unordered_map<std::string, Tensor<T>> second_moment;
  std::int64_t step = 0;
};

// Bias-corrected Adam over the trainable entries of `store`. A trainable
// entry without a populated gradient is a training error.
template <typename T>
void AdamStep(ParamStore<T>& store, AdamState<T>& state, double lr, const AdamOptions& opt = {});

// lr0 * (1 + cos(pi * step / total_steps)) / 2
double CosineLr(std::int64_t step, std::int64_t total_steps, double lr0);

// Rescales trainable gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping. max_norm <= 0 disables clipping.
template <typename T>
double ClipGradNorm(ParamStore<T>& store, double max_norm);

}  // namespace serforge

#endif  // SERFORGE_OPTIM_H_
