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

#include "serforge/eval.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "serforge/dataset.h"
#include "serforge/error.h"

namespace serforge {

template <typename T>
int Argmax(std::span<const T> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

template <typename T>
std::vector<int> Predict(const Tensor<T>& logits) {
  const int k = logits.cols();
  if (k < 2) Fail(ErrorKind::kShape, "predict needs at least 2 classes, got " + ShapeString(logits.shape()));
  std::vector<int> out(logits.rows());
  for (int r = 0; r < logits.rows(); ++r) {
    out[r] = Argmax(std::span<const T>(logits.data() + static_cast<std::size_t>(r) * k, k));
  }
  return out;
}

template int Argmax<float>(std::span<const float>);
template int Argmax<double>(std::span<const double>);
template std::vector<int> Predict<float>(const Tensor<float>&);
template std::vector<int> Predict<double>(const Tensor<double>&);

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::int64_t ConfusionMatrix::row_sum(int t) const {
  std::int64_t s = 0;
  for (int p = 0; p < k_; ++p) s += at(t, p);
  return s;
}

std::int64_t ConfusionMatrix::col_sum(int p) const {
  std::int64_t s = 0;
  for (int t = 0; t < k_; ++t) s += at(t, p);
  return s;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t s = 0;
  for (int c = 0; c < k_; ++c) s += at(c, c);
  return s;
}

ConfusionMatrix Confusion(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  if (truth.size() != pred.size()) {
    Fail(ErrorKind::kLabel, "confusion: " + std::to_string(truth.size()) + " labels vs " +
                                std::to_string(pred.size()) + " predictions");
  }
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= k || pred[i] < 0 || pred[i] >= k) {
      Fail(ErrorKind::kLabel, "confusion: pair (" + std::to_string(truth[i]) + ", " +
                                  std::to_string(pred[i]) + ") outside [0, " + std::to_string(k) + ")");
    }
    ++cm.at(truth[i], pred[i]);
  }
  return cm;
}

Metrics ComputeMetrics(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) Fail(ErrorKind::kEmptyEval, "metrics of an empty confusion matrix");
  const int k = cm.k();
  Metrics m;
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  m.precision.assign(k, 0.0);
  m.recall.assign(k, 0.0);
  m.f1.assign(k, 0.0);
  m.per_class_accuracy.assign(k, std::nullopt);
  int present = 0;
  for (int c = 0; c < k; ++c) {
    const auto tp = static_cast<double>(cm.at(c, c));
    const auto col = cm.col_sum(c);
    const auto row = cm.row_sum(c);
    m.precision[c] = col > 0 ? tp / static_cast<double>(col) : 0.0;
    m.recall[c] = row > 0 ? tp / static_cast<double>(row) : 0.0;
    const double ps = m.precision[c] + m.recall[c];
    m.f1[c] = ps > 0 ? 2.0 * m.precision[c] * m.recall[c] / ps : 0.0;
    if (row > 0) {
      m.per_class_accuracy[c] = m.recall[c];
      m.macro_precision += m.precision[c];
      m.macro_recall += m.recall[c];
      m.macro_f1 += m.f1[c];
      ++present;
    }
  }
  m.macro_precision /= present;
  m.macro_recall /= present;
  m.macro_f1 /= present;
  return m;
}

namespace {

double Quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

TimingSummary SummarizeTimings(std::vector<double> ms) {
  std::sort(ms.begin(), ms.end());
  TimingSummary s;
  s.reps = static_cast<int>(ms.size());
  s.median_ms = Quantile(ms, 0.5);
  s.p25_ms = Quantile(ms, 0.25);
  s.p75_ms = Quantile(ms, 0.75);
  s.iqr_ms = s.p75_ms - s.p25_ms;
  return s;
}

TimingSummary MeasureInference(const std::function<void()>& fn, int warmup, int reps) {
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> ms;
  ms.reserve(reps);
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return SummarizeTimings(std::move(ms));
}

double ModelSizeMb(std::size_t parameter_count) {
  return static_cast<double>(parameter_count) * 4.0 / (1024.0 * 1024.0);
}

EvalReport MakeReport(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  EvalReport r;
  r.cm = Confusion(truth, pred, k);
  r.metrics = ComputeMetrics(r.cm);
  r.samples = truth.size();
  return r;
}

nlohmann::json ReportToJson(const EvalReport& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["family"] = r.family;
  j["head"] = r.head;
  j["split"] = r.split;
  j["samples"] = r.samples;
  j["accuracy"] = r.metrics.accuracy;
  j["macro_precision"] = r.metrics.macro_precision;
  j["macro_recall"] = r.metrics.macro_recall;
  j["macro_f1"] = r.metrics.macro_f1;
  j["precision"] = r.metrics.precision;
  j["recall"] = r.metrics.recall;
  j["f1"] = r.metrics.f1;
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t c = 0; c < r.metrics.per_class_accuracy.size(); ++c) {
    const std::string name = c < kEmotionNames.size() ? std::string(kEmotionNames[c]) : std::to_string(c);
    if (r.metrics.per_class_accuracy[c]) per_class[name] = *r.metrics.per_class_accuracy[c];
  }
  j["per_class_accuracy"] = per_class;
  nlohmann::json rows = nlohmann::json::array();
  for (int t = 0; t < r.cm.k(); ++t) {
    std::vector<std::int64_t> row(r.cm.k());
    for (int p = 0; p < r.cm.k(); ++p) row[p] = r.cm.at(t, p);
    rows.push_back(row);
  }
  j["confusion_matrix"] = rows;
  if (r.timing) {
    j["inference_ms_per_sample"] = r.timing->median_ms;
    j["inference_ms_iqr"] = r.timing->iqr_ms;
    j["inference_ms_p25"] = r.timing->p25_ms;
    j["inference_ms_p75"] = r.timing->p75_ms;
    j["inference_reps"] = r.timing->reps;
  }
  j["parameter_count"] = r.parameter_count;
  j["head_parameter_count"] = r.head_parameter_count;
  j["model_size_mb"] = r.model_size_mb;
  j["head_size_mb"] = r.head_size_mb;
  j["config_hash"] = r.config_hash;
  j["notes"] = r.notes;
  return j;
}

EvalReport ReportFromJson(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.model = j.at("model").get<std::string>();
    r.family = j.at("family").get<std::string>();
    r.head = j.at("head").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.samples = j.at("samples").get<std::size_t>();
    r.metrics.accuracy = j.at("accuracy").get<double>();
    r.metrics.macro_precision = j.at("macro_precision").get<double>();
    r.metrics.macro_recall = j.at("macro_recall").get<double>();
    r.metrics.macro_f1 = j.at("macro_f1").get<double>();
    r.metrics.precision = j.at("precision").get<std::vector<double>>();
    r.metrics.recall = j.at("recall").get<std::vector<double>>();
    r.metrics.f1 = j.at("f1").get<std::vector<double>>();
    const auto rows = j.at("confusion_matrix").get<std::vector<std::vector<std::int64_t>>>();
    r.cm = ConfusionMatrix(static_cast<int>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
      for (std::size_t p = 0; p < rows[t].size(); ++p) r.cm.at(static_cast<int>(t), static_cast<int>(p)) = rows[t][p];
    }
    r.metrics.per_class_accuracy.assign(rows.size(), std::nullopt);
    for (std::size_t c = 0; c < rows.size(); ++c) {
      const std::string name = c < kEmotionNames.size() ? std::string(kEmotionNames[c]) : std::to_string(c);
      if (j.at("per_class_accuracy").contains(name)) {
        r.metrics.per_class_accuracy[c] = j.at("per_class_accuracy").at(name).get<double>();
      }
    }
    if (j.contains("inference_ms_per_sample")) {
      TimingSummary t;
      t.median_ms = j.at("inference_ms_per_sample").get<double>();
      t.iqr_ms = j.at("inference_ms_iqr").get<double>();
      t.p25_ms = j.at("inference_ms_p25").get<double>();
      t.p75_ms = j.at("inference_ms_p75").get<double>();
      t.reps = j.at("inference_reps").get<int>();
      r.timing = t;
    }
    r.parameter_count = j.at("parameter_count").get<std::size_t>();
    r.head_parameter_count = j.at("head_parameter_count").get<std::size_t>();
    r.model_size_mb = j.at("model_size_mb").get<double>();
    r.head_size_mb = j.at("head_size_mb").get<double>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.notes = j.value("notes", "");
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kIo, std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string SafeName(const std::string& name) {
  std::string s;
  for (char c : name) s.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  return s;
}

namespace {

std::string Fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string Percent(double v) { return Fixed(100.0 * v, 2); }

void WriteFile(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out << content;
  if (!out) Fail(ErrorKind::kIo, "write failed: " + path.string());
}

// Fixed-width text table with a header rule.
std::string TextTable(const std::string& title, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream os;
  os << title << "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      os << (c ? "  " : "") << std::setw(static_cast<int>(width[c])) << (c ? std::right : std::left)
         << rows[i][c];
    }
    os << "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total - 2, '-') << "\n";
    }
  }
  return os.str();
}

std::string Csv(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << r[c];
    os << "\n";
  }
  return os.str();
}

}  // namespace

void EmitReport(const std::filesystem::path& dir, const std::vector<EvalReport>& reports) {
  if (reports.empty()) Fail(ErrorKind::kEmptyEval, "no reports to emit");
  std::filesystem::create_directories(dir);

  nlohmann::json j;
  j["reports"] = nlohmann::json::array();
  for (const auto& r : reports) j["reports"].push_back(ReportToJson(r));
  WriteFile(dir / "report.json", j.dump(2) + "\n");

  // Model comparison.
  std::vector<std::vector<std::string>> t1{{"model", "accuracy", "f1", "precision", "recall",
                                            "ms_per_sample", "size_mb", "head_size_mb"}};
  for (const auto& r : reports) {
    t1.push_back({r.model, Fixed(r.metrics.accuracy, 4), Fixed(r.metrics.macro_f1, 4),
                  Fixed(r.metrics.macro_precision, 4), Fixed(r.metrics.macro_recall, 4),
                  r.timing ? Fixed(r.timing->median_ms, 3) : "", Fixed(r.model_size_mb, 2),
                  Fixed(r.head_size_mb, 2)});
  }
  WriteFile(dir / "table1.csv", Csv(t1));

  // Per-emotion accuracy, one column per model.
  std::vector<std::vector<std::string>> t2{{"emotion"}};
  for (const auto& r : reports) t2[0].push_back(r.model);
  for (std::size_t c = 0; c < kEmotionNames.size(); ++c) {
    std::vector<std::string> row{std::string(kEmotionNames[c])};
    for (const auto& r : reports) {
      const auto& v = c < r.metrics.per_class_accuracy.size() ? r.metrics.per_class_accuracy[c] : std::nullopt;
      row.push_back(v ? Fixed(*v, 4) : "");
    }
    t2.push_back(row);
  }
  WriteFile(dir / "table2.csv", Csv(t2));

  // Head comparison.
  std::vector<std::vector<std::string>> t3{{"head", "accuracy", "f1", "head_parameters", "parameters", "notes"}};
  for (const auto& r : reports) {
    t3.push_back({r.head, Fixed(r.metrics.accuracy, 4), Fixed(r.metrics.macro_f1, 4),
                  std::to_string(r.head_parameter_count), std::to_string(r.parameter_count), r.notes});
  }
  WriteFile(dir / "table3.csv", Csv(t3));

  for (const auto& r : reports) {
    std::vector<std::vector<std::string>> cm{{"true\\pred"}};
    for (int p = 0; p < r.cm.k(); ++p) {
      cm[0].push_back(p < static_cast<int>(kEmotionNames.size()) ? std::string(kEmotionNames[p]) : std::to_string(p));
    }
    for (int t = 0; t < r.cm.k(); ++t) {
      std::vector<std::string> row{cm[0][t + 1]};
      for (int p = 0; p < r.cm.k(); ++p) row.push_back(std::to_string(r.cm.at(t, p)));
      cm.push_back(row);
    }
    WriteFile(dir / ("cm_" + SafeName(r.model) + ".csv"), Csv(cm));
  }

  std::vector<std::vector<std::string>> h1{{"Model", "Accuracy(%)", "F1(%)", "Precision(%)", "Recall(%)", "ms/sample", "Size(MB)"}};
  for (const auto& r : reports) {
    h1.push_back({r.model, Percent(r.metrics.accuracy), Percent(r.metrics.macro_f1),
                  Percent(r.metrics.macro_precision), Percent(r.metrics.macro_recall),
                  r.timing ? Fixed(r.timing->median_ms, 2) : "-", Fixed(r.model_size_mb, 2)});
  }
  std::vector<std::vector<std::string>> h2{{"Emotion"}};
  for (const auto& r : reports) h2[0].push_back(r.model);
  for (std::size_t c = 0; c < kEmotionNames.size(); ++c) {
    std::vector<std::string> row{std::string(kEmotionNames[c])};
    for (const auto& r : reports) {
      const auto& v = c < r.metrics.per_class_accuracy.size() ? r.metrics.per_class_accuracy[c] : std::nullopt;
      row.push_back(v ? Percent(*v) : "-");
    }
    h2.push_back(row);
  }
  std::vector<std::vector<std::string>> h3{{"Head", "Accuracy(%)", "F1(%)", "Head params", "Notes"}};
  for (const auto& r : reports) {
    h3.push_back({r.head, Percent(r.metrics.accuracy), Percent(r.metrics.macro_f1),
                  std::to_string(r.head_parameter_count), r.notes});
  }
  WriteFile(dir / "tables.txt", TextTable("Model comparison", h1) + "\n" +
                                    TextTable("Per-emotion accuracy (%)", h2) + "\n" +
                                    TextTable("Classification heads", h3));
}

}  // namespace serforge
