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

#ifndef SERFORGE_GRAD_CHECK_H_
#define SERFORGE_GRAD_CHECK_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "serforge/param_store.h"

namespace serforge {

using ScalarLossFn = std::function<Var<double>(const Bindings<double>&)>;

struct GradCheckOptions {
  double eps = 1e-6;
  // Scalars sampled per tensor; 0 checks every scalar.
  std::size_t max_per_tensor = 0;
  std::uint64_t seed = 0;
  // Gradients smaller than this are compared on an absolute scale.
  double denominator_floor = 1e-5;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

// One gradient tensor per store entry; empty for frozen entries.
std::vector<Tensor<double>> AnalyticGradients(const ScalarLossFn& loss,
                                              const ParamStore<double>& store);

// Central differences against supplied analytic gradients. Refuses to run
// when two identical forward passes disagree.
GradCheckResult CompareWithFiniteDifferences(const ScalarLossFn& loss, ParamStore<double>& store,
                                             const std::vector<Tensor<double>>& analytic,
                                             const GradCheckOptions& opt = {});

GradCheckResult GradCheck(const ScalarLossFn& loss, ParamStore<double>& store,
                          const GradCheckOptions& opt = {});

}  // namespace serforge

#endif  // SERFORGE_GRAD_CHECK_H_
