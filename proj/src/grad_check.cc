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

#include "serforge/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "serforge/error.h"
#include "serforge/rng.h"

namespace serforge {
namespace {

double Evaluate(const ScalarLossFn& loss, const ParamStore<double>& store) {
  auto b = Bindings<double>::FromStore(store, false);
  auto v = loss(b);
  if (v.value().size() != 1) {
    Fail(ErrorKind::kGradCheck, "loss must be a scalar, got " + ShapeString(v.shape()));
  }
  return v.value()[0];
}

}  // namespace

std::vector<Tensor<double>> AnalyticGradients(const ScalarLossFn& loss,
                                              const ParamStore<double>& store) {
  auto b = Bindings<double>::FromStore(store, true);
  auto v = loss(b);
  Backward(v);
  ParamStore<double> scratch;
  for (const auto& e : store.entries()) scratch.Add(e.name, e.value, e.trainable);
  scratch.ZeroGrad();
  b.AccumulateInto(scratch);
  std::vector<Tensor<double>> out;
  for (const auto& e : scratch.entries()) {
    out.push_back(e.trainable ? e.grad : Tensor<double>());
  }
  return out;
}

GradCheckResult CompareWithFiniteDifferences(const ScalarLossFn& loss, ParamStore<double>& store,
                                             const std::vector<Tensor<double>>& analytic,
                                             const GradCheckOptions& opt) {
  const double base = Evaluate(loss, store);
  if (Evaluate(loss, store) != base) {
    Fail(ErrorKind::kGradCheck, "forward pass is not deterministic; disable dropout and patchout");
  }
  if (analytic.size() != store.size()) {
    Fail(ErrorKind::kGradCheck, "analytic gradient list does not match the store");
  }
  Rng rng(opt.seed);
  GradCheckResult result;
  result.max_relative_error = 0.0;
  for (std::size_t k = 0; k < store.size(); ++k) {
    auto& e = store.entries()[k];
    if (!e.trainable) continue;
    std::vector<std::size_t> idx(e.value.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (opt.max_per_tensor > 0 && idx.size() > opt.max_per_tensor) {
      Shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.max_per_tensor);
    }
    for (std::size_t i : idx) {
      const double orig = e.value[i];
      e.value[i] = orig + opt.eps;
      const double plus = Evaluate(loss, store);
      e.value[i] = orig - opt.eps;
      const double minus = Evaluate(loss, store);
      e.value[i] = orig;
      const double numeric = (plus - minus) / (2.0 * opt.eps);
      const double a = analytic[k].empty() ? 0.0 : analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.denominator_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_relative_error || result.worst_parameter.empty()) {
        result.max_relative_error = std::max(rel, result.max_relative_error);
        result.worst_parameter = e.name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

GradCheckResult GradCheck(const ScalarLossFn& loss, ParamStore<double>& store,
                          const GradCheckOptions& opt) {
  const auto analytic = AnalyticGradients(loss, store);
  return CompareWithFiniteDifferences(loss, store, analytic, opt);
}

}  // namespace serforge
