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

#include "serforge/train.h"

#include <fnmatch.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "serforge/error.h"
#include "serforge/eval.h"

namespace serforge {

void TrainConfig::Validate() const {
  if (max_epochs < 1) Fail(ErrorKind::kConfig, "train.max_epochs must be >= 1");
  if (patience < 1) Fail(ErrorKind::kConfig, "train.patience must be >= 1");
  if (!(lr0 > 0)) Fail(ErrorKind::kConfig, "train.lr0 must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) Fail(ErrorKind::kConfig, "train.betas must lie in [0, 1)");
  if (!(adam_eps > 0)) Fail(ErrorKind::kConfig, "train.adam_eps must be positive");
  if (batch_size < 1) Fail(ErrorKind::kConfig, "train.batch_size must be >= 1");
  for (double w : class_weights) {
    if (!(w > 0)) Fail(ErrorKind::kConfig, "train.class_weights entries must be positive");
  }
}

nlohmann::json HistoryToJson(const TrainHistory& h) {
  nlohmann::json j;
  j["epoch"] = h.epoch;
  j["train_loss"] = h.train_loss;
  j["val_loss"] = h.val_loss;
  j["val_acc"] = h.val_acc;
  j["lr"] = h.lr;
  std::vector<std::string> hashes;
  for (auto v : h.batch_hash) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    hashes.push_back(os.str());
  }
  j["batch_hash"] = hashes;
  j["best_epoch"] = h.best_epoch;
  j["best_val_acc"] = h.best_val_acc;
  j["stop_reason"] = h.stop_reason;
  j["steps"] = h.steps;
  j["total_steps"] = h.total_steps;
  return j;
}

void WriteHistoryCsv(const std::filesystem::path& path, const TrainHistory& h) {
  std::ofstream out(path);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "epoch,train_loss,val_loss,val_acc,lr\n" << std::setprecision(17);
  for (std::size_t i = 0; i < h.epoch.size(); ++i) {
    out << h.epoch[i] << ',' << h.train_loss[i] << ',' << h.val_loss[i] << ',' << h.val_acc[i] << ','
        << h.lr[i] << '\n';
  }
}

bool EarlyStopping::Update(double val_acc) {
  ++epochs_;
  improved_ = epochs_ == 1 || val_acc >= best_ + min_delta_;
  if (improved_) {
    best_ = val_acc;
    best_epoch_ = epochs_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_;
}

template <typename T>
std::size_t ApplyFreezeMask(ParamStore<T>& store, const std::vector<std::string>& patterns,
                            std::vector<std::string>* unmatched) {
  std::size_t frozen = 0;
  std::vector<bool> hit(patterns.size(), false);
  for (auto& e : store.entries()) {
    bool match = false;
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      if (fnmatch(patterns[i].c_str(), e.name.c_str(), 0) == 0) {
        hit[i] = true;
        match = true;
      }
    }
    if (match && e.trainable) {
      e.trainable = false;
      ++frozen;
    }
  }
  if (unmatched) {
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      if (!hit[i]) unmatched->push_back(patterns[i]);
    }
  }
  return frozen;
}

template std::size_t ApplyFreezeMask<float>(ParamStore<float>&, const std::vector<std::string>&,
                                            std::vector<std::string>*);
template std::size_t ApplyFreezeMask<double>(ParamStore<double>&, const std::vector<std::string>&,
                                             std::vector<std::string>*);

namespace {

// -log softmax(logits)[label] in double.
double Nll(const float* logits, int k, int label) {
  double mx = logits[0];
  for (int c = 1; c < k; ++c) mx = std::max<double>(mx, logits[c]);
  double s = 0.0;
  for (int c = 0; c < k; ++c) s += std::exp(static_cast<double>(logits[c]) - mx);
  return -(static_cast<double>(logits[label]) - mx - std::log(s));
}

}  // namespace

SplitPredictions PredictSplit(const ModelConfig& cfg, const ParamStore<float>& store,
                              InputPipeline& pipeline, const std::vector<std::size_t>& indices,
                              LossMode mode, const std::vector<double>& class_weights) {
  if (indices.empty()) Fail(ErrorKind::kConfig, "cannot evaluate an empty split");
  const int k = cfg.head.num_classes;
  const auto inputs = pipeline.Inputs(indices, false, 0);
  const auto bind = Bindings<float>::FromStore(store, false);
  SplitPredictions out;
  out.logits = Tensor<float>(Shape{static_cast<int>(indices.size()), k});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    ForwardContext ctx;
    const auto logits = ModelLogits(cfg, inputs[i], bind, ctx).value();
    std::copy_n(logits.data(), k, out.logits.data() + i * k);
    out.labels.push_back(pipeline.corpus().samples()[indices[i]].emotion);
  }
  out.preds = Predict(out.logits);
  const auto coef = CrossEntropyCoefficients(out.labels, k, mode, class_weights);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.loss += coef[i] * Nll(out.logits.data() + i * k, k, out.labels[i]);
  }
  return out;
}

void FitInputNormalization(ParamStore<float>& store, InputPipeline& pipeline,
                           const std::vector<std::size_t>& train) {
  if (!store.Contains("input_norm.mean")) return;
  const auto [mean, sd] = pipeline.BinStatistics(train);
  auto& m = store.at("input_norm.mean").value;
  auto& s = store.at("input_norm.std").value;
  if (m.size() != mean.size()) {
    Fail(ErrorKind::kShape, "input_norm has " + std::to_string(m.size()) + " bins, features have " +
                                std::to_string(mean.size()));
  }
  for (std::size_t c = 0; c < mean.size(); ++c) {
    m[c] = static_cast<float>(mean[c]);
    s[c] = static_cast<float>(sd[c]);
  }
}

namespace {

// Accumulates the batch gradient into `store` sample by sample, in batch
// order, and returns the batch loss.
double BatchGradient(const ModelConfig& cfg, ParamStore<float>& store, InputPipeline& pipeline,
                     const std::vector<std::size_t>& batch, std::uint64_t epoch, std::int64_t step,
                     const TrainConfig& tc, std::size_t batch_index) {
  const int k = cfg.head.num_classes;
  const auto inputs = pipeline.Inputs(batch, true, epoch);
  std::vector<int> labels;
  for (auto i : batch) labels.push_back(pipeline.corpus().samples()[i].emotion);
  const auto coef = CrossEntropyCoefficients(labels, k, tc.loss_mode, tc.class_weights);
  store.ZeroGrad();
  double loss = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto bind = Bindings<float>::FromStore(store, true);
    Rng rng = MakeRng(tc.seed, Stream::kPatchout, static_cast<std::uint64_t>(step), s);
    ForwardContext ctx{true, &rng};
    auto logits = ModelLogits(cfg, inputs[s], bind, ctx);
    auto nll = CrossEntropy(logits, {labels[s]}, LossMode::kMean);
    const double v = nll.value()[0];
    if (!std::isfinite(v)) {
      Fail(ErrorKind::kTraining, "non-finite loss in epoch " + std::to_string(epoch) + " batch " +
                                     std::to_string(batch_index) + " (sample " +
                                     pipeline.corpus().samples()[batch[s]].path + ")");
    }
    loss += coef[s] * v;
    Backward(nll);
    bind.AccumulateInto(store, static_cast<float>(coef[s]));
  }
  return loss;
}

}  // namespace

TrainHistory Train(const ModelConfig& cfg, ParamStore<float>& store, InputPipeline& pipeline,
                   const SplitAssignment& split, const TrainConfig& tc, const TrainLogger& log) {
  tc.Validate();
  if (split.train().empty()) Fail(ErrorKind::kConfig, "training split is empty");
  if (split.val().empty()) Fail(ErrorKind::kConfig, "validation split is empty");
  split.CheckDisjoint();

  const std::int64_t per_epoch = (static_cast<std::int64_t>(split.train().size()) + tc.batch_size - 1) / tc.batch_size;
  TrainHistory h;
  h.total_steps = per_epoch * tc.max_epochs;
  AdamState<float> adam;
  const AdamOptions aopt{tc.beta1, tc.beta2, tc.adam_eps};
  EarlyStopping stopper(tc.patience);
  ParamStore<float> best = store;
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto batches = MakeBatches(split.train(), tc.batch_size, tc.seed, epoch, true);
    double loss_sum = 0.0;
    std::uint64_t epoch_hash = 1469598103934665603ULL;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const double loss = BatchGradient(cfg, store, pipeline, batches[b], epoch, step, tc, b);
      const double norm = ClipGradNorm(store, tc.clip_norm);
      if (!std::isfinite(norm)) {
        Fail(ErrorKind::kTraining, "non-finite gradient norm in epoch " + std::to_string(epoch) +
                                       " batch " + std::to_string(b));
      }
      AdamStep(store, adam, CosineLr(step, h.total_steps, tc.lr0), aopt);
      ++step;
      loss_sum += loss;
      epoch_hash = (epoch_hash ^ BatchHash(batches[b])) * 1099511628211ULL;
    }
    const auto val = PredictSplit(cfg, store, pipeline, split.val(), tc.loss_mode, tc.class_weights);
    const auto val_metrics = ComputeMetrics(Confusion(val.labels, val.preds, cfg.head.num_classes));
    h.epoch.push_back(epoch);
    h.train_loss.push_back(loss_sum / static_cast<double>(batches.size()));
    h.val_loss.push_back(val.loss);
    h.val_acc.push_back(val_metrics.accuracy);
    h.lr.push_back(CosineLr(step, h.total_steps, tc.lr0));
    h.batch_hash.push_back(epoch_hash);
    const bool stop = stopper.Update(val_metrics.accuracy);
    if (stopper.improved()) best = store;
    if (log) {
      std::ostringstream os;
      os << "epoch " << epoch << "/" << tc.max_epochs << " train_loss " << std::fixed
         << std::setprecision(4) << h.train_loss.back() << " val_loss " << val.loss << " val_acc "
         << val_metrics.accuracy << (stopper.improved() ? " *" : "");
      log(os.str());
    }
    if (stop) {
      h.stop_reason = "early_stopping";
      break;
    }
  }
  if (h.stop_reason.empty()) h.stop_reason = "max_epochs";
  h.steps = step;
  h.best_epoch = stopper.best_epoch();
  h.best_val_acc = stopper.best();
  for (auto& e : store.entries()) e.value = best.value(e.name);
  store.ZeroGrad();
  return h;
}

double DryRunStep(const ModelConfig& cfg, ParamStore<float>& store, InputPipeline& pipeline,
                  const SplitAssignment& split, const TrainConfig& tc) {
  tc.Validate();
  if (split.train().empty()) Fail(ErrorKind::kConfig, "training split is empty");
  const auto batches = MakeBatches(split.train(), tc.batch_size, tc.seed, 1, true);
  const double loss = BatchGradient(cfg, store, pipeline, batches[0], 1, 0, tc, 0);
  const double norm = ClipGradNorm(store, 0.0);
  if (!std::isfinite(norm)) Fail(ErrorKind::kTraining, "non-finite gradient in dry run");
  store.ZeroGrad();
  return loss;
}

}  // namespace serforge
