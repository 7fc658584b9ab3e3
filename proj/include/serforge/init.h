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

#ifndef SERFORGE_INIT_H_
#define SERFORGE_INIT_H_

#include <cmath>

#include "serforge/rng.h"
#include "serforge/tensor.h"

namespace serforge {

// Normal(0, std) redrawn outside two standard deviations.
template <typename T>
Tensor<T> TruncatedNormal(const Shape& shape, double std, Rng& rng) {
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    double z = StandardNormal(rng);
    while (std::abs(z) > 2.0) z = StandardNormal(rng);
    t[i] = static_cast<T>(z * std);
  }
  return t;
}

template <typename T>
Tensor<T> UniformInit(const Shape& shape, double bound, Rng& rng) {
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(UniformRange(rng, -bound, bound));
  return t;
}

}  // namespace serforge

#endif  // SERFORGE_INIT_H_
