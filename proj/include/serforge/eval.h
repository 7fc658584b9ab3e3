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

#ifndef SERFORGE_EVAL_H_
#define SERFORGE_EVAL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "serforge/tensor.h"

namespace serforge {

// Index of the largest entry; ties go to the lowest index.
template <typename T>
int Argmax(std::span<const T> values);

// Row-wise argmax of logits [B, K].
template <typename T>
std::vector<int> Predict(const Tensor<T>& logits);

// Rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int k = 0) : k_(k), counts_(static_cast<std::size_t>(k) * k, 0) {}

  int k() const noexcept { return k_; }
  std::int64_t& at(int t, int p) { return counts_[static_cast<std::size_t>(t) * k_ + p]; }
  std::int64_t at(int t, int p) const { return counts_[static_cast<std::size_t>(t) * k_ + p]; }
  std::int64_t total() const;
  std::int64_t row_sum(int t) const;
  std::int64_t col_sum(int p) const;
  std::int64_t trace() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int k_;
  std::vector<std::int64_t> counts_;
};

ConfusionMatrix Confusion(const std::vector<int>& truth, const std::vector<int>& pred, int k);

struct Metrics {
  double accuracy = 0.0;
  // Means over classes with at least one true sample.
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;  // 0 when the predicted column is empty
  std::vector<double> recall;
  std::vector<double> f1;
  // Recall per class; absent when the class has no true samples.
  std::vector<std::optional<double>> per_class_accuracy;
};

// Empty-eval error when the matrix holds no samples.
Metrics ComputeMetrics(const ConfusionMatrix& cm);

struct TimingSummary {
  double median_ms = 0.0;
  double p25_ms = 0.0;
  double p75_ms = 0.0;
  double iqr_ms = 0.0;
  int reps = 0;
};

// Linear-interpolated quartiles of per-rep wall-clock times.
TimingSummary SummarizeTimings(std::vector<double> ms);
// Wall-clock per call of `fn` after `warmup` untimed calls.
TimingSummary MeasureInference(const std::function<void()>& fn, int warmup = 10, int reps = 100);

// Parameter count times 4 bytes, in MiB.
double ModelSizeMb(std::size_t parameter_count);

struct EvalReport {
  std::string model;   // display name, e.g. "patch_transformer+MLP"
  std::string family;
  std::string head;
  std::string split = "test";
  std::size_t samples = 0;
  Metrics metrics;
  ConfusionMatrix cm;
  std::optional<TimingSummary> timing;
  std::size_t parameter_count = 0;
  std::size_t head_parameter_count = 0;
  double model_size_mb = 0.0;
  double head_size_mb = 0.0;
  std::string config_hash;
  std::string notes;
};

EvalReport MakeReport(const std::vector<int>& truth, const std::vector<int>& pred, int k);

nlohmann::json ReportToJson(const EvalReport& r);
EvalReport ReportFromJson(const nlohmann::json& j);

// Writes report.json, table1.csv, table2.csv, table3.csv, cm_<model>.csv and
// tables.txt under `dir`.
void EmitReport(const std::filesystem::path& dir, const std::vector<EvalReport>& reports);

// File-name safe version of a model name.
std::string SafeName(const std::string& name);

}  // namespace serforge

#endif  // SERFORGE_EVAL_H_
