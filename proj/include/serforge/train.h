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

#ifndef SERFORGE_TRAIN_H_
#define SERFORGE_TRAIN_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "serforge/dataset.h"
#include "serforge/models.h"
#include "serforge/optim.h"
#include "serforge/pipeline.h"

namespace serforge {

struct TrainConfig {
  int max_epochs = 30;
  int patience = 5;
  double lr0 = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 16;
  LossMode loss_mode = LossMode::kMacro;
  std::vector<double> class_weights;
  double clip_norm = 5.0;
  std::vector<std::string> freeze_mask;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct TrainHistory {
  std::vector<int> epoch;  // 1-based
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_acc;
  std::vector<double> lr;  // schedule value after the epoch's last step
  std::vector<std::uint64_t> batch_hash;  // order of samples seen in the epoch
  int best_epoch = 0;
  double best_val_acc = 0.0;
  std::string stop_reason;
  std::int64_t steps = 0;
  std::int64_t total_steps = 0;
};

nlohmann::json HistoryToJson(const TrainHistory& h);
void WriteHistoryCsv(const std::filesystem::path& path, const TrainHistory& h);

// Patience counter on validation accuracy. An epoch improves when it beats
// the best so far by at least min_delta.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience, double min_delta = 1e-6)
      : patience_(patience), min_delta_(min_delta) {}

  // Records one epoch; true when training should stop.
  bool Update(double val_acc);
  bool improved() const noexcept { return improved_; }
  int best_epoch() const noexcept { return best_epoch_; }
  double best() const noexcept { return best_; }

 private:
  int patience_;
  double min_delta_;
  int epochs_ = 0;
  int best_epoch_ = 0;
  double best_ = 0.0;
  int stale_ = 0;
  bool improved_ = false;
};

// Marks parameters whose names match any glob pattern as frozen. Returns the
// number of tensors frozen; patterns that match nothing are appended to
// `unmatched`.
template <typename T>
std::size_t ApplyFreezeMask(ParamStore<T>& store, const std::vector<std::string>& patterns,
                            std::vector<std::string>* unmatched = nullptr);

struct SplitPredictions {
  std::vector<int> labels;
  std::vector<int> preds;
  Tensor<float> logits;  // [N, K]
  double loss = 0.0;
};

// Eval-mode forward over `indices` without augmentation.
SplitPredictions PredictSplit(const ModelConfig& cfg, const ParamStore<float>& store,
                              InputPipeline& pipeline, const std::vector<std::size_t>& indices,
                              LossMode mode = LossMode::kMacro,
                              const std::vector<double>& class_weights = {});

// Sets the frozen input_norm statistics from the non-augmented training inputs.
void FitInputNormalization(ParamStore<float>& store, InputPipeline& pipeline,
                           const std::vector<std::size_t>& train);

using TrainLogger = std::function<void(const std::string&)>;

// Mini-batch Adam with cosine decay over max_epochs * batches_per_epoch
// steps, gradient clipping and early stopping. Best-validation weights are
// restored into `store` before returning.
TrainHistory Train(const ModelConfig& cfg, ParamStore<float>& store, InputPipeline& pipeline,
                   const SplitAssignment& split, const TrainConfig& tc,
                   const TrainLogger& log = nullptr);

// One forward/backward on the first training batch, no update. Returns the loss.
double DryRunStep(const ModelConfig& cfg, ParamStore<float>& store, InputPipeline& pipeline,
                  const SplitAssignment& split, const TrainConfig& tc);

}  // namespace serforge

#endif  // SERFORGE_TRAIN_H_
