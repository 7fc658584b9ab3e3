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

#include "serforge/experiment.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "serforge/checkpoint.h"
#include "serforge/error.h"

namespace serforge {

namespace {

void Log(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << std::endl;
}

void WriteJson(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) Fail(ErrorKind::kIo, "write failed: " + path.string());
}

std::string ModelName(const ModelConfig& m) {
  return std::string(ModelFamilyName(m.family)) + "+" + std::string(HeadKindName(m.head.kind));
}

EvalReport Evaluate(const ExperimentConfig& cfg, const ParamStore<float>& store,
                    InputPipeline& pipeline, const std::vector<std::size_t>& indices,
                    const std::string& split_name) {
  const auto pred = PredictSplit(cfg.model, store, pipeline, indices, cfg.train.loss_mode,
                                 cfg.train.class_weights);
  EvalReport r = MakeReport(pred.labels, pred.preds, cfg.model.head.num_classes);
  r.model = ModelName(cfg.model);
  r.family = std::string(ModelFamilyName(cfg.model.family));
  r.head = std::string(HeadKindName(cfg.model.head.kind));
  r.split = split_name;
  r.parameter_count = store.ParameterCount();
  r.head_parameter_count = store.ParameterCount("head.");
  r.model_size_mb = ModelSizeMb(r.parameter_count);
  r.head_size_mb = ModelSizeMb(r.head_parameter_count);
  r.config_hash = cfg.Hash();
  return r;
}

TimingSummary TimeInference(const ExperimentConfig& cfg, const ParamStore<float>& store,
                            InputPipeline& pipeline, std::size_t sample) {
  const auto input = pipeline.Input(sample, false, 0);
  const auto bind = Bindings<float>::FromStore(store, false);
  return MeasureInference(
      [&] {
        ForwardContext ctx;
        auto logits = ModelLogits(cfg.model, input, bind, ctx);
        (void)logits;
      },
      cfg.eval.warmup, cfg.eval.reps);
}

nlohmann::json TimingJson(const std::string& model, const TimingSummary& t) {
  return {{"model", model},       {"inference_ms_per_sample", t.median_ms},
          {"inference_ms_iqr", t.iqr_ms}, {"inference_ms_p25", t.p25_ms},
          {"inference_ms_p75", t.p75_ms}, {"inference_reps", t.reps}};
}

}  // namespace

std::string ResolveCacheDir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("SER_FORGE_CACHE"); env && *env) return env;
  return cfg.dataset.cache_dir;
}

PipelineOptions MakePipelineOptions(const ExperimentConfig& cfg, int workers) {
  PipelineOptions p;
  p.kind = cfg.model.input_kind();
  p.features = cfg.features;
  p.augment = cfg.augment;
  p.max_seconds = cfg.dataset.max_seconds;
  p.cache_dir = ResolveCacheDir(cfg);
  p.workers = workers;
  return p;
}

void ResolveModelInput(ExperimentConfig& cfg) {
  const auto samples = static_cast<std::size_t>(std::lround(kCanonicalRate * cfg.dataset.max_seconds));
  auto& m = cfg.model;
  m.input_samples = static_cast<int>(samples);
  if (m.input_kind() == InputKind::kWaveform) {
    m.input_frames = 0;
    m.input_bins = 0;
  } else {
    m.input_frames = NumFrames(samples, cfg.features);
    m.input_bins = m.input_kind() == InputKind::kLogMel ? cfg.features.n_mels : cfg.features.n_mfcc;
  }
  m.Finalize();
  cfg.Validate();
}

Data LoadData(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  Data data{Corpus(), SplitAssignment()};
  if (d.toy_per_class > 0) {
    data.corpus = Corpus::Toy(d.toy_per_class, cfg.seed, d.toy);
  } else if (!d.manifest.empty()) {
    data.corpus = Corpus::FromManifest(ReadManifestCsv(d.manifest));
  } else {
    auto scan = ScanCremaDirectory(d.crema_dir);
    if (scan.samples.empty()) Fail(ErrorKind::kManifest, "no parseable CREMA-D WAV files in " + d.crema_dir);
    data.corpus = Corpus::FromManifest(std::move(scan.samples));
  }
  if (!d.split_file.empty()) {
    std::ifstream in(d.split_file);
    if (!in) Fail(ErrorKind::kIo, "cannot read split file " + d.split_file);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorKind::kSplit, d.split_file + ": " + e.what());
    }
    data.split = SplitFromJson(j, data.corpus.samples());
  } else {
    data.split = SpeakerIndependentSplit(data.corpus.samples(), d.split_ratios, cfg.seed);
  }
  return data;
}

TrainOutcome RunTrain(ExperimentConfig cfg, const RunOptions& opt) {
  if (!opt.output_dir.empty()) cfg.output_dir = opt.output_dir;
  const int workers = opt.deterministic ? 1 : std::max(1, opt.workers);
  ResolveModelInput(cfg);
  Data data = LoadData(cfg);
  InputPipeline pipeline(data.corpus, MakePipelineOptions(cfg, workers));

  auto store = InitParams<float>(cfg.model, cfg.seed);
  FitInputNormalization(store, pipeline, data.split.train());
  std::vector<std::string> unmatched;
  const auto frozen = ApplyFreezeMask(store, cfg.train.freeze_mask, &unmatched);
  for (const auto& p : unmatched) Log(opt.log, "warning: freeze pattern '" + p + "' matches no parameter");
  Log(opt.log, ModelName(cfg.model) + ": " + std::to_string(store.ParameterCount()) + " parameters, " +
                   std::to_string(frozen) + " frozen tensors; split " +
                   std::to_string(data.split.train().size()) + "/" + std::to_string(data.split.val().size()) +
                   "/" + std::to_string(data.split.test().size()));

  TrainOutcome outcome;
  if (opt.dry_run) {
    outcome.dry_run_loss = DryRunStep(cfg.model, store, pipeline, data.split, cfg.train);
    Log(opt.log, "dry run ok, loss " + std::to_string(outcome.dry_run_loss));
    return outcome;
  }

  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  outcome.run_dir = dir;
  WriteJson(dir / "config.json", cfg.ToJson());
  WriteJson(dir / "split.json", SplitToJson(data.split));
  WriteManifestCsv(dir / "manifest.csv", data.corpus.samples());

  outcome.history = Train(cfg.model, store, pipeline, data.split, cfg.train,
                          [&](const std::string& s) { Log(opt.log, s); });
  WriteJson(dir / "history.json", HistoryToJson(outcome.history));
  WriteHistoryCsv(dir / "history.csv", outcome.history);

  nlohmann::json meta;
  meta["config"] = cfg.ToJson();
  meta["split"] = SplitToJson(data.split);
  meta["best_epoch"] = outcome.history.best_epoch;
  meta["steps"] = outcome.history.steps;
  SaveCheckpoint(dir / "checkpoint.bin", store, meta);

  outcome.report = Evaluate(cfg, store, pipeline, data.split.test(), "test");
  const auto timing = TimeInference(cfg, store, pipeline, data.split.test().front());
  if (opt.deterministic) {
    WriteJson(dir / "timing.json", TimingJson(outcome.report.model, timing));
  } else {
    outcome.report.timing = timing;
  }
  EmitReport(dir, {outcome.report});
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << "test accuracy " << outcome.report.metrics.accuracy
     << " macro F1 " << outcome.report.metrics.macro_f1 << " (best epoch " << outcome.history.best_epoch
     << ", " << outcome.history.stop_reason << ")";
  Log(opt.log, os.str());
  return outcome;
}

AblationOutcome RunAblate(ExperimentConfig cfg, const RunOptions& opt) {
  if (!opt.output_dir.empty()) cfg.output_dir = opt.output_dir;
  if (cfg.model.family != ModelFamily::kPatchTransformer) {
    Fail(ErrorKind::kConfig, "model.family: the head ablation runs on patch_transformer");
  }
  const std::filesystem::path base = cfg.output_dir;
  AblationOutcome out;
  std::vector<EvalReport> reports;
  RunOptions sub = opt;
  sub.output_dir.clear();
  for (HeadKind kind : {HeadKind::kLinear, HeadKind::kMlp, HeadKind::kAttentivePool}) {
    ExperimentConfig c = cfg;
    c.model.head.kind = kind;
    c.output_dir = (base / std::string(HeadKindName(kind))).string();
    Log(opt.log, "== head " + std::string(HeadKindName(kind)));
    out.runs.push_back(RunTrain(c, sub));
    auto r = out.runs.back().report;
    std::ostringstream notes;
    notes << "best_epoch=" << out.runs.back().history.best_epoch << " epochs="
          << out.runs.back().history.epoch.size();
    r.notes = notes.str();
    reports.push_back(r);
  }
  out.identical_data_order = true;
  const auto& ref = out.runs.front().history.batch_hash;
  for (const auto& run : out.runs) {
    const auto& h = run.history.batch_hash;
    for (std::size_t e = 0; e < std::min(ref.size(), h.size()); ++e) {
      if (ref[e] != h[e]) out.identical_data_order = false;
    }
  }
  nlohmann::json summary;
  summary["identical_data_order"] = out.identical_data_order;
  for (std::size_t i = 0; i < out.runs.size(); ++i) {
    summary["runs"].push_back({{"head", reports[i].head},
                               {"run_dir", out.runs[i].run_dir.string()},
                               {"head_parameters", reports[i].head_parameter_count},
                               {"batch_hash", HistoryToJson(out.runs[i].history)["batch_hash"]}});
  }
  std::filesystem::create_directories(base);
  WriteJson(base / "ablation.json", summary);
  EmitReport(base, reports);
  return out;
}

EvalReport RunEval(const std::filesystem::path& checkpoint, const std::string& split,
                   const RunOptions& opt) {
  const int which = SplitIndex(split);
  auto ck = LoadCheckpoint(checkpoint);
  if (!ck.meta.contains("config") || !ck.meta.contains("split")) {
    Fail(ErrorKind::kCheckpoint, checkpoint.string() + ": metadata lacks config or split");
  }
  ExperimentConfig cfg = ParseConfigJson(ck.meta["config"]);
  ResolveModelInput(cfg);
  Data data = LoadData(cfg);
  data.split = SplitFromJson(ck.meta["split"], data.corpus.samples());
  auto store = InitParams<float>(cfg.model, cfg.seed);
  LoadInto(store, ck.store);
  InputPipeline pipeline(data.corpus, MakePipelineOptions(cfg, opt.deterministic ? 1 : opt.workers));
  auto report = Evaluate(cfg, store, pipeline, data.split.samples[which], split);
  if (!opt.deterministic) {
    report.timing = TimeInference(cfg, store, pipeline, data.split.samples[which].front());
  }
  if (!opt.output_dir.empty()) EmitReport(opt.output_dir, {report});
  return report;
}

PrepareSummary RunPrepare(const std::string& data_dir, int toy_per_class, const std::filesystem::path& out,
                          std::uint64_t seed, const std::array<double, 3>& ratios,
                          const ToyOptions& toy, std::ostream* log) {
  PrepareSummary summary;
  std::vector<SampleMeta> samples;
  std::filesystem::create_directories(out);
  if (toy_per_class > 0) {
    const auto wav_dir = out / "wav";
    std::filesystem::create_directories(wav_dir);
    samples = ToyManifest(toy_per_class, toy);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto w = SynthesizeToySample(seed, i, samples[i], toy);
      char name[64];
      std::snprintf(name, sizeof name, "%04d_T%04zu_%s_XX.wav", samples[i].actor_id, i,
                    std::string(kEmotionCodes[samples[i].emotion]).c_str());
      samples[i].path = (wav_dir / name).string();
      samples[i].sentence_code = name + 5;
      samples[i].sentence_code.resize(5);
      WriteWav(samples[i].path, w);
    }
  } else {
    auto scan = ScanCremaDirectory(data_dir);
    summary.rejected = scan.rejected;
    for (const auto& r : scan.rejected) Log(log, "warning: skipping unparseable file " + r);
    if (scan.samples.empty()) Fail(ErrorKind::kManifest, "no parseable CREMA-D WAV files in " + data_dir);
    if (scan.samples.size() != kCremaClipCount) {
      Log(log, "warning: found " + std::to_string(scan.samples.size()) + " clips, the full corpus has " +
                   std::to_string(kCremaClipCount));
    }
    samples = std::move(scan.samples);
  }
  const auto split = SpeakerIndependentSplit(samples, ratios, seed);
  WriteManifestCsv(out / "manifest.csv", samples);
  WriteJson(out / "split.json", SplitToJson(split));
  summary.samples = samples.size();
  for (int s = 0; s < 3; ++s) {
    for (auto i : split.samples[s]) ++summary.counts[s][samples[i].emotion];
  }
  return summary;
}

std::size_t RunFeaturizeCorpus(const ExperimentConfig& cfg_in, const std::filesystem::path& out,
                               int workers) {
  ExperimentConfig cfg = cfg_in;
  ResolveModelInput(cfg);
  Data data = LoadData(cfg);
  auto popt = MakePipelineOptions(cfg, workers);
  if (!out.empty()) popt.cache_dir = out.string();
  if (popt.cache_dir.empty()) Fail(ErrorKind::kConfig, "featurize needs --out, SER_FORGE_CACHE or dataset.cache_dir");
  InputPipeline pipeline(data.corpus, popt);
  std::vector<std::size_t> all(data.corpus.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  pipeline.Inputs(all, false, 0);
  return all.size();
}

std::size_t RunFeaturizeFiles(const std::filesystem::path& in, const std::filesystem::path& out,
                              InputKind kind, const FeatureConfig& features, double max_seconds) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(in)) {
    for (const auto& e : fs::directory_iterator(in)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(in);
  }
  if (kind == InputKind::kWaveform) Fail(ErrorKind::kConfig, "featurize: kind must be log_mel or mfcc");
  FeatureExtractor fx(features);
  for (const auto& f : files) {
    auto w = Canonicalize(ReadWav(f), max_seconds);
    w = PeakNormalize(w);
    const auto spec = kind == InputKind::kLogMel ? fx.LogMel(w) : fx.Mfcc(w);
    nlohmann::json meta{{"source", f.string()},
                        {"kind", InputKindName(kind)},
                        {"config_hash", features.Hash()},
                        {"frame_rate", spec.frame_rate},
                        {"max_seconds", max_seconds}};
    WriteFeatureFile(out / (f.stem().string() + ".f32"), spec.data.Cast<float>(), meta);
  }
  return files.size();
}

std::vector<std::filesystem::path> RunAugmentPreview(const std::filesystem::path& in,
                                                     std::uint64_t seed,
                                                     const std::filesystem::path& out, int count,
                                                     const AugmentConfig& augment,
                                                     double max_seconds) {
  if (count < 1) Fail(ErrorKind::kConfig, "augment-preview: --count must be >= 1");
  auto w = Resample(ReadWav(in), kCanonicalRate);
  if (max_seconds > 0) w = PadOrTrim(w, max_seconds);
  AugmentConfig cfg = augment;
  cfg.seed = seed;
  cfg.Validate();
  std::filesystem::create_directories(out);
  std::vector<std::filesystem::path> paths;
  for (int k = 0; k < count; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "aug_%02d.wav", k);
    paths.push_back(out / name);
    WriteWav(paths.back(), AugmentPipeline(w, cfg, 0, static_cast<std::uint64_t>(k)));
  }
  return paths;
}

}  // namespace serforge
