/*
 * Copyright 2026 The msprog Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "msprog/error.hpp"
#include "msprog/evaluation.hpp"
#include "msprog/features.hpp"
#include "msprog/ingestion.hpp"
#include "msprog/io.hpp"
#include "msprog/labels.hpp"
#include "msprog/log.hpp"
#include "msprog/models/model.hpp"
#include "msprog/random.hpp"
#include "msprog/subject.hpp"
#include "msprog/synth.hpp"

#ifndef MSPROG_VERSION
#define MSPROG_VERSION "1.0.0"
#endif

namespace msprog::pipeline {

namespace fs = std::filesystem;
using models::HyperGrid;
using models::ModelSpec;

inline constexpr const char* kVersion = MSPROG_VERSION;

// ---------------------------------------------------------------------------
// Durations like "6mo", "2wk", "1d", "3600s", "1y".

inline Timestamp parse_duration(const nlohmann::json& j) {
  if (j.is_number_integer()) return j.get<Timestamp>();
  if (!j.is_string()) throw config_error("INVALID_DURATION", "duration must be seconds or a string like 6mo");
  const auto s = j.get<std::string>();
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw config_error("INVALID_DURATION", "cannot parse duration " + s);
  }
  const auto unit = s.substr(pos);
  Timestamp scale = 0;
  if (unit == "s") scale = 1;
  else if (unit == "h") scale = seconds::kHour;
  else if (unit == "d") scale = seconds::kDay;
  else if (unit == "wk") scale = seconds::kWeek;
  else if (unit == "mo") scale = seconds::kMonth;
  else if (unit == "y") scale = seconds::kYear;
  else throw config_error("INVALID_DURATION", "unknown duration unit in " + s);
  if (!(v > 0)) throw config_error("INVALID_DURATION", "duration must be positive: " + s);
  return static_cast<Timestamp>(std::llround(v * static_cast<double>(scale)));
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ModelEntry {
  std::string name;
  models::ModelFamily family = models::ModelFamily::LogisticRegression;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::optional<nlohmann::json> loss;
  std::optional<HyperGrid> grid;  // nullopt: no search
  std::vector<std::string> tasks;  // empty: every supported task

  bool applies_to(const labels::TaskDef& t) const {
    if (!models::supports(family, t.kind())) return false;
    return tasks.empty() || std::find(tasks.begin(), tasks.end(), t.name) != tasks.end();
  }

  ModelSpec spec_for(labels::TaskKind kind) const {
    nlohmann::json j{{"family", to_string(family)}, {"hyperparameters", hyperparameters}};
    if (loss) j["loss"] = *loss;
    return ModelSpec::from_json(j, kind);
  }
};

struct CohortSource {
  enum class Kind { Synth, Ingest, File } kind = Kind::Synth;
  nlohmann::json synth;                // generator config
  fs::path mapping;                    // ingest
  std::vector<fs::path> files;         // ingest inputs
  fs::path cohort_file;                // precomputed JSONL cohort
};

struct ExperimentConfig {
  nlohmann::json raw;
  fs::path base_dir;
  std::string name = "experiment";
  std::uint64_t seed = 1;
  bool seed_overridden = false;
  CohortSource cohort;
  labels::LabelOptions label_options;
  std::vector<labels::TaskDef> tasks;
  features::FeaturizeOptions featurize;
  int text_vocabulary = features::kDefaultTextVocabulary;
  features::FeatureGroup feature_group = features::FeatureGroup::Full;
  std::vector<features::FeatureGroup> ablation_groups = features::all_groups();
  std::vector<ModelEntry> models;
  std::size_t k = 10;
  std::size_t jobs = 1;
  bool save_checkpoints = true;
  Timestamp sparsity_bucket = seconds::kWeek;
  fs::path out_dir = "out";

  void check() const {
    if (k < 2) throw config_error("INVALID_CONFIG", "k must be at least 2");
    if (tasks.empty()) throw config_error("INVALID_CONFIG", "no tasks configured");
    if (cohort.kind == CohortSource::Kind::Ingest) {
      if (!fs::exists(cohort.mapping)) throw config_error("MISSING_FILE", "mapping not found: " + cohort.mapping.string());
      for (const auto& f : cohort.files)
        if (!fs::exists(f)) throw config_error("MISSING_FILE", "input not found: " + f.string());
    }
    if (cohort.kind == CohortSource::Kind::File && !fs::exists(cohort.cohort_file))
      throw config_error("MISSING_FILE", "cohort file not found: " + cohort.cohort_file.string());
    std::set<std::string> names;
    for (const auto& m : models)
      if (!names.insert(m.name).second) throw config_error("INVALID_CONFIG", "duplicate model name " + m.name);
  }

  /// Hash of the canonical config after command-line overrides.
  std::string hash() const {
    nlohmann::json j = raw;
    j["seed"] = seed;
    j["jobs"] = nullptr;  // scheduling does not affect outputs
    j.erase("jobs");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
  }
};

inline std::optional<HyperGrid> parse_grid(const nlohmann::json& m, models::ModelFamily family) {
  if (!m.contains("grid")) return std::nullopt;
  const auto& g = m.at("grid");
  if (g.is_string()) {
    if (g.get<std::string>() != "default") throw config_error("INVALID_GRID", "grid must be \"default\" or axes");
    auto d = models::default_grid(family);
    if (d.axes.empty()) return std::nullopt;
    return d;
  }
  if (g.is_null()) return std::nullopt;
  return HyperGrid::from_json(g);
}

inline ExperimentConfig parse_experiment(const nlohmann::json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  c.raw = j;
  c.base_dir = base_dir;
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  try {
    c.name = j.value("name", c.name);
    c.seed = j.value("seed", c.seed);
    const auto& src = j.at("cohort");
    if (src.contains("synth")) {
      c.cohort.kind = CohortSource::Kind::Synth;
      const auto& s = src.at("synth");
      if (s.is_string()) c.cohort.synth = io::read_json(resolve(s.get<std::string>()));
      else c.cohort.synth = s;
    } else if (src.contains("ingest")) {
      c.cohort.kind = CohortSource::Kind::Ingest;
      const auto& in = src.at("ingest");
      c.cohort.mapping = resolve(in.at("mapping").get<std::string>());
      for (const auto& f : in.at("files")) c.cohort.files.push_back(resolve(f.get<std::string>()));
    } else if (src.contains("file")) {
      c.cohort.kind = CohortSource::Kind::File;
      c.cohort.cohort_file = resolve(src.at("file").get<std::string>());
    } else {
      throw config_error("INVALID_CONFIG", "cohort needs one of synth, ingest, file");
    }
    c.label_options = labels::label_options_from_json(j.value("labels", nlohmann::json::object()));
    for (const auto& t : j.at("tasks")) c.tasks.push_back(labels::parse_task(t.get<std::string>()));
    if (j.contains("featurize")) {
      const auto& f = j.at("featurize");
      if (f.contains("lookback")) c.featurize.lookback = parse_duration(f.at("lookback"));
      if (f.contains("bucket")) c.featurize.bucket_duration = parse_duration(f.at("bucket"));
      c.featurize.default_buckets = f.value("buckets", c.featurize.default_buckets);
      c.featurize.strict_leakage = f.value("strict_leakage", c.featurize.strict_leakage);
      c.text_vocabulary = f.value("text_vocabulary", c.text_vocabulary);
      if (c.text_vocabulary < 1) throw config_error("INVALID_CONFIG", "text_vocabulary must be >= 1");
    }
    if (j.contains("feature_group")) c.feature_group = features::parse_group(j.at("feature_group").get<std::string>());
    if (j.contains("ablation_groups")) {
      c.ablation_groups.clear();
      for (const auto& g : j.at("ablation_groups")) c.ablation_groups.push_back(features::parse_group(g.get<std::string>()));
    }
    for (const auto& m : j.value("models", nlohmann::json::array())) {
      ModelEntry e;
      e.family = models::parse_family(m.at("family").get<std::string>());
      e.name = m.value("name", std::string(to_string(e.family)));
      e.hyperparameters = m.value("hyperparameters", nlohmann::json::object());
      if (m.contains("loss")) e.loss = m.at("loss");
      e.grid = parse_grid(m, e.family);
      e.tasks = m.value("tasks", std::vector<std::string>{});
      // validate names and hyperparameters early
      for (const auto& t : c.tasks)
        if (e.applies_to(t)) {
          auto spec = e.spec_for(t.kind());
          spec.check(t.kind());
          if (e.grid)
            for (const auto& cell : e.grid->cells()) {
              auto s2 = spec;
              for (const auto& [key, v] : cell.items()) s2.hyperparameters[key] = v;
              s2.check(t.kind());
            }
        }
      c.models.push_back(std::move(e));
    }
    c.k = j.value("k", c.k);
    c.jobs = j.value("jobs", c.jobs);
    c.save_checkpoints = j.value("save_checkpoints", c.save_checkpoints);
    if (j.contains("sparsity_bucket")) c.sparsity_bucket = parse_duration(j.at("sparsity_bucket"));
    if (j.contains("out")) c.out_dir = resolve(j.at("out").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw config_error("INVALID_CONFIG", e.what());
  }
  c.check();
  return c;
}

inline ExperimentConfig load_experiment(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw config_error("CONFIG_NOT_FOUND", "cannot read config " + path.string());
  return parse_experiment(io::read_json(path), fs::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// Serialization of feature spaces and instances

inline nlohmann::json space_to_json(const features::FeatureSpace& s) {
  nlohmann::json f = nlohmann::json::array();
  for (const auto& x : s.features())
    f.push_back({{"name", x.name},
                 {"kind", x.kind == features::FeatureKind::Text ? "text" : "numeric"},
                 {"group", to_string(x.group)},
                 {"source", x.source},
                 {"category", x.category},
                 {"text_bucket", x.text_bucket}});
  return {{"text_vocabulary", s.text_vocabulary()}, {"fingerprint", s.fingerprint()}, {"features", f}};
}

inline features::FeatureSpace space_from_json(const nlohmann::json& j) {
  std::vector<features::FeatureInfo> f;
  for (const auto& x : j.at("features"))
    f.push_back({x.at("name"), x.at("kind") == "text" ? features::FeatureKind::Text : features::FeatureKind::Numeric,
                 features::parse_group(x.at("group").get<std::string>()), x.at("source"), x.at("category"),
                 x.at("text_bucket").get<int>()});
  features::FeatureSpace s(std::move(f), j.at("text_vocabulary").get<int>());
  if (j.contains("fingerprint") && j.at("fingerprint").get<std::string>() != s.fingerprint())
    throw data_error("CORRUPT_FEATURES", "feature-space fingerprint mismatch");
  return s;
}

inline nlohmann::json subgroup_to_json(const features::SubgroupAttributes& s) { return evaluation::subgroup_json(s); }

inline features::SubgroupAttributes subgroup_from_json(const nlohmann::json& j) {
  features::SubgroupAttributes s;
  if (j.contains("sex")) s.sex = parse_sex(j.at("sex").get<std::string>()).value_or(Sex::Unknown);
  if (j.contains("age")) s.age = j.at("age").get<double>();
  return s;
}

/// Header line (task, mode, feature space) followed by one instance per line.
inline std::string encode_instances(const features::InstanceSet& set) {
  std::string out =
      nlohmann::json{{"task", set.task.name},
                     {"mode", set.mode == features::Mode::Tabular ? "tabular" : "sequence"},
                     {"space", space_to_json(set.space)}}
          .dump() +
      "\n";
  if (set.mode == features::Mode::Tabular) {
    for (const auto& t : set.tabular)
      out += nlohmann::json{{"subject_id", t.subject_id},
                            {"trigger", t.trigger},
                            {"target", t.target},
                            {"values", t.values},
                            {"mask", t.mask},
                            {"subgroup", subgroup_to_json(t.subgroup)},
                            {"feature_time_max", t.feature_time_max},
                            {"target_window_start", t.target_window_start}}
                 .dump() +
             "\n";
  } else {
    for (const auto& t : set.sequence)
      out += nlohmann::json{{"subject_id", t.subject_id},
                            {"trigger", t.trigger},
                            {"target", t.target},
                            {"buckets", t.buckets},
                            {"values", t.values},
                            {"counts", t.counts},
                            {"subgroup", subgroup_to_json(t.subgroup)},
                            {"feature_time_max", t.feature_time_max},
                            {"target_window_start", t.target_window_start}}
                 .dump() +
             "\n";
  }
  return out;
}

inline features::InstanceSet decode_instances(const std::string& text) {
  const auto lines = io::split_lines(text);
  if (lines.empty()) throw data_error("MALFORMED_RECORD", "empty instance file");
  features::InstanceSet set;
  try {
    const auto head = nlohmann::json::parse(lines[0]);
    set.task = labels::parse_task(head.at("task").get<std::string>());
    set.mode = head.at("mode") == "tabular" ? features::Mode::Tabular : features::Mode::Sequence;
    set.space = space_from_json(head.at("space"));
    const std::size_t F = set.space.size();
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto j = nlohmann::json::parse(lines[i]);
      if (set.mode == features::Mode::Tabular) {
        features::TabularInstance t;
        t.subject_id = j.at("subject_id");
        t.trigger = j.at("trigger");
        t.target = j.at("target");
        t.values = j.at("values").get<std::vector<double>>();
        t.mask = j.at("mask").get<std::vector<std::uint8_t>>();
        t.subgroup = subgroup_from_json(j.at("subgroup"));
        t.feature_time_max = j.at("feature_time_max");
        t.target_window_start = j.at("target_window_start");
        if (t.values.size() != F || t.mask.size() != F) throw data_error("MALFORMED_RECORD", "instance width mismatch");
        set.tabular.push_back(std::move(t));
      } else {
        features::SequenceInstance t;
        t.subject_id = j.at("subject_id");
        t.trigger = j.at("trigger");
        t.target = j.at("target");
        t.buckets = j.at("buckets");
        t.features = F;
        t.values = j.at("values").get<std::vector<double>>();
        t.counts = j.at("counts").get<std::vector<double>>();
        t.mask.resize(t.counts.size());
        for (std::size_t c = 0; c < t.counts.size(); ++c) t.mask[c] = t.counts[c] > 0 ? 1 : 0;
        t.subgroup = subgroup_from_json(j.at("subgroup"));
        t.feature_time_max = j.at("feature_time_max");
        t.target_window_start = j.at("target_window_start");
        if (t.values.size() != F * t.buckets || t.counts.size() != F * t.buckets)
          throw data_error("MALFORMED_RECORD", "instance shape mismatch");
        set.sequence.push_back(std::move(t));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error("MALFORMED_RECORD", std::string("instances: ") + e.what());
  }
  return set;
}

// ---------------------------------------------------------------------------
// Worker pool: runs jobs [0, n) on up to `jobs` threads. Exceptions are
// rethrown by lowest job index after all workers finish.

inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < std::min(jobs, n); ++w)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldOutcome {
  std::vector<evaluation::PredictionRecord> records;
  std::optional<models::TrainedModel> model;
  std::optional<models::GridResult> grid;
  std::string error;
};

struct CvResult {
  std::vector<FoldOutcome> folds;

  std::vector<evaluation::PredictionRecord> records() const {
    std::vector<evaluation::PredictionRecord> out;
    for (const auto& f : folds) out.insert(out.end(), f.records.begin(), f.records.end());
    return out;
  }
};

inline std::uint64_t model_seed(std::uint64_t seed, const std::string& task, const std::string& model,
                                std::size_t fold) {
  return derive_seed(seed, fnv1a64(task), fnv1a64(model), fold);
}

/// For each fold f: test on f, select hyperparameters (and early-stop) on
/// fold f+1 mod k, train on the remaining folds. Folds whose training fails
/// with a data error are reported and left without predictions.
inline CvResult cross_validate(const features::InstanceSet& set, const std::string& model_name, const ModelSpec& spec,
                               const std::optional<HyperGrid>& grid, const evaluation::FoldPlan& plan,
                               std::uint64_t seed, std::size_t jobs = 1) {
  std::vector<std::vector<std::size_t>> by_fold(plan.k);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto f = plan.find(set.subject_id(i));
    if (!f) throw data_error("UNKNOWN_SUBJECT", "instance subject " + set.subject_id(i) + " not in the fold plan");
    by_fold[*f].push_back(i);
  }
  CvResult res;
  res.folds.resize(plan.k);
  parallel_for(plan.k, jobs, [&](std::size_t f) {
    auto& out = res.folds[f];
    const std::size_t v = plan.validation_fold(f);
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < plan.k; ++g)
      if (g != f && g != v) train_idx.insert(train_idx.end(), by_fold[g].begin(), by_fold[g].end());
    std::sort(train_idx.begin(), train_idx.end());
    if (by_fold[f].empty()) return;
    const auto train = models::to_dataset(set, train_idx);
    const auto val = models::to_dataset(set, by_fold[v]);
    const auto test = models::to_dataset(set, by_fold[f]);
    const auto s = model_seed(seed, set.task.name, model_name, f);
    try {
      if (grid && grid->size() > 1 && val.n > 0) {
        out.grid = models::grid_search(spec, *grid, train, val, s);
        out.model = std::move(out.grid->best_model);
        out.grid->best_model.reset();
        out.model->metadata.fold = static_cast<int>(f);
      } else {
        auto cell = spec;
        if (grid) {
          const auto cells = grid->cells();
          for (const auto& [key, value] : cells.front().items()) cell.hyperparameters[key] = value;
        }
        out.model = models::fit(cell, train, val.n > 0 ? &val : nullptr, s, static_cast<int>(f));
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Data) throw;
      out.error = e.code() + ": " + e.what();
      log::warn(set.task.name + "/" + model_name + " fold " + std::to_string(f) + " skipped: " + out.error);
      return;
    }
    const auto preds = models::predict(*out.model, test);
    for (std::size_t i = 0; i < test.n; ++i) {
      const auto idx = by_fold[f][i];
      evaluation::PredictionRecord r;
      r.subject_id = set.subject_id(idx);
      r.timestamp = set.trigger(idx);
      r.label_targets[set.task.name] = set.target(idx);
      r.label_predictions[set.task.name] = preds[i];
      r.subgroup_attributes = evaluation::subgroup_json(set.subgroup(idx));
      out.records.push_back(std::move(r));
    }
  });
  bool any = false;
  for (const auto& f : res.folds) any = any || f.model.has_value();
  if (!any) throw data_error("NO_TRAINABLE_FOLDS", set.task.name + "/" + model_name + ": no fold could be trained");
  return res;
}

// ---------------------------------------------------------------------------
// Stage artifacts

struct Layout {
  fs::path root;
  fs::path cohort() const { return root / "cohort.jsonl"; }
  fs::path cohort_stats() const { return root / "cohort_stats.json"; }
  fs::path ingestion_summary() const { return root / "ingestion_summary.json"; }
  fs::path labeled() const { return root / "labeled.jsonl"; }
  fs::path label_stats() const { return root / "label_stats.json"; }
  fs::path features_dir() const { return root / "features"; }
  fs::path instances(const std::string& task, features::Mode m) const {
    return features_dir() / (task + (m == features::Mode::Tabular ? ".tabular.jsonl" : ".sequence.jsonl"));
  }
  fs::path folds() const { return root / "folds.json"; }
  fs::path predictions(const std::string& model, const std::string& task) const {
    return root / "predictions" / model / (task + ".jsonl");
  }
  fs::path checkpoint(const std::string& model, const std::string& task, std::size_t fold) const {
    return root / "models" / model / task / ("fold" + std::to_string(fold) + ".json");
  }
  fs::path grid_report(const std::string& model, const std::string& task) const {
    return root / "grid" / model / (task + ".json");
  }
  fs::path metrics_csv() const { return root / "metrics.csv"; }
  fs::path metrics_json() const { return root / "metrics.json"; }
  fs::path metrics_summary() const { return root / "metrics_summary.json"; }
  fs::path ablation_csv() const { return root / "ablation.csv"; }
  fs::path ablation_metrics_csv() const { return root / "ablation_metrics.csv"; }
  fs::path sparsity_csv() const { return root / "sparsity.csv"; }
  fs::path report_md() const { return root / "report.md"; }
  fs::path report_csv() const { return root / "report.csv"; }
  fs::path manifest(const std::string& stage) const { return root / "manifests" / (stage + ".json"); }
  fs::path incomplete(const std::string& stage) const { return root / "manifests" / (stage + ".incomplete"); }
};

inline std::string content_hash(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(s)));
  return buf;
}

/// Tracks one stage: marks it incomplete until `commit` writes the manifest
/// listing config hash, seed, version and every artifact with its hash.
class StageRun {
 public:
  StageRun(const ExperimentConfig& c, std::string stage) : config_(c), stage_(std::move(stage)) {
    layout_.root = c.out_dir;
    fs::create_directories(layout_.root / "manifests");
    io::write_file_atomic(layout_.incomplete(stage_), "incomplete\n");
  }

  const Layout& layout() const { return layout_; }

  void input(const fs::path& p) { inputs_.push_back(p); }

  void write(const fs::path& p, const std::string& contents) {
    fs::create_directories(p.parent_path());
    io::write_file_atomic(p, contents);
    outputs_.emplace_back(p, content_hash(contents));
  }

  void commit() {
    nlohmann::json in = nlohmann::json::array(), out = nlohmann::json::array();
    for (const auto& p : inputs_)
      in.push_back({{"path", fs::relative(p, layout_.root).generic_string()}, {"hash", content_hash(io::read_file(p))}});
    for (const auto& [p, h] : outputs_)
      out.push_back({{"path", fs::relative(p, layout_.root).generic_string()}, {"hash", h}});
    const nlohmann::json m{{"stage", stage_},       {"tool", "msprog"},     {"version", kVersion},
                           {"config_hash", config_.hash()}, {"seed", config_.seed}, {"inputs", in},
                           {"outputs", out}};
    io::write_file_atomic(layout_.manifest(stage_), m.dump(2) + "\n");
    fs::remove(layout_.incomplete(stage_));
  }

 private:
  const ExperimentConfig& config_;
  std::string stage_;
  Layout layout_;
  std::vector<fs::path> inputs_;
  std::vector<std::pair<fs::path, std::string>> outputs_;
};

inline void require(const fs::path& p, const std::string& stage) {
  if (!fs::exists(p))
    throw data_error("MISSING_ARTIFACT", p.string() + " not found; run `" + stage + "` first");
}

// ---------------------------------------------------------------------------
// Stages

inline synth::GeneratorConfig generator_config(const ExperimentConfig& c) {
  auto g = synth::config_from_json(c.cohort.synth);
  if (c.seed_overridden || !c.cohort.synth.contains("seed")) g.seed = c.seed;
  return g;
}

/// synth / ingest / file: writes cohort.jsonl.
inline void stage_cohort(const ExperimentConfig& c) {
  const char* stage = c.cohort.kind == CohortSource::Kind::Synth    ? "synth"
                      : c.cohort.kind == CohortSource::Kind::Ingest ? "ingest"
                                                                    : "cohort";
  StageRun run(c, stage);
  Cohort cohort;
  if (c.cohort.kind == CohortSource::Kind::Synth) {
    cohort = synth::generate_cohort(generator_config(c));
  } else if (c.cohort.kind == CohortSource::Kind::Ingest) {
    const auto mapping = ingestion::mapping_from_json(io::read_json(c.cohort.mapping));
    std::vector<ingestion::InputFile> files;
    for (const auto& f : c.cohort.files) files.push_back({f.filename().string(), io::read_file(f)});
    auto res = ingestion::ingest_cohort(files, mapping);
    const auto report = validate_cohort(res.cohort, ingestion::validation_options_for(mapping));
    if (!report.ok()) throw InvalidSubjectError(report);
    cohort = std::move(res.cohort);
    run.write(run.layout().ingestion_summary(), res.summary.to_json().dump(2) + "\n");
  } else {
    cohort = io::read_cohort(c.cohort.cohort_file);
    const auto report = validate_cohort(cohort, {});
    if (!report.ok()) throw InvalidSubjectError(report);
  }
  run.write(run.layout().cohort(), io::encode_cohort(cohort));
  run.write(run.layout().cohort_stats(), synth::summarize_cohort(cohort).to_json().dump(2) + "\n");
  run.commit();
}

inline void stage_label(const ExperimentConfig& c) {
  StageRun run(c, "label");
  const auto& L = run.layout();
  require(L.cohort(), "synth");
  run.input(L.cohort());
  const auto cohort = io::read_cohort(L.cohort());
  std::optional<labels::ScoreWeights> weights;
  if (labels::needs_score_weights(c.tasks))
    weights = labels::ScoreWeights::uniform_from_cohort(cohort, c.label_options.orientation);
  const auto labeled = labels::annotate_cohort(cohort, c.tasks, c.label_options, weights ? &*weights : nullptr);
  run.write(L.labeled(), io::encode_cohort(labeled));
  run.write(L.label_stats(), synth::summarize_cohort(labeled).to_json().at("labels").dump(2) + "\n");
  run.commit();
}

inline std::vector<features::Mode> modes_for(const ExperimentConfig& c, const labels::TaskDef& t) {
  bool tab = false, seq = false;
  for (const auto& m : c.models)
    if (m.applies_to(t)) (models::sequence_family(m.family) ? seq : tab) = true;
  if (c.models.empty()) tab = true;
  std::vector<features::Mode> out;
  if (tab) out.push_back(features::Mode::Tabular);
  if (seq) out.push_back(features::Mode::Sequence);
  return out;
}

inline features::InstanceSet featurize_task(const Cohort& labeled, const ExperimentConfig& c,
                                            const labels::TaskDef& task, features::Mode mode) {
  const auto base = features::FeatureSpace::from_cohort(labeled, c.text_vocabulary);
  const auto space = features::exclude_leaky_features(base, task, c.featurize.strict_leakage);
  return features::build_instances(labeled, task, mode, space, c.featurize);
}

inline void stage_featurize(const ExperimentConfig& c) {
  StageRun run(c, "featurize");
  const auto& L = run.layout();
  require(L.labeled(), "label");
  run.input(L.labeled());
  const auto labeled = io::read_cohort(L.labeled());
  for (const auto& task : c.tasks)
    for (auto mode : modes_for(c, task))
      run.write(L.instances(task.name, mode), encode_instances(featurize_task(labeled, c, task, mode)));
  run.commit();
}

inline evaluation::FoldPlan fold_plan_for(const Cohort& cohort, const ExperimentConfig& c) {
  std::vector<std::string> ids;
  for (const auto& s : cohort) ids.push_back(s.subject_id);
  return evaluation::kfold_split(ids, c.k, derive_seed(c.seed, fnv1a64("folds")));
}

inline nlohmann::json grid_report_json(const CvResult& cv) {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t f = 0; f < cv.folds.size(); ++f) {
    const auto& o = cv.folds[f];
    nlohmann::json cells = nlohmann::json::array();
    if (o.grid)
      for (const auto& cell : o.grid->cells)
        cells.push_back({{"hyperparameters", cell.spec.hyperparameters},
                         {"score", std::isfinite(cell.score) ? nlohmann::json(cell.score) : nlohmann::json(nullptr)},
                         {"failed", cell.failed},
                         {"error", cell.error}});
    folds.push_back({{"fold", f},
                     {"best", o.grid ? nlohmann::json(o.grid->best) : nlohmann::json(nullptr)},
                     {"fits", o.grid ? o.grid->fits : 0},
                     {"cells", cells},
                     {"error", o.error},
                     {"warning", o.model ? o.model->metadata.warning : std::string()}});
  }
  return folds;
}

/// Loads instances for `task`/`mode`, applying `group`'s feature mask.
inline features::InstanceSet load_instances(const Layout& L, const labels::TaskDef& task, features::Mode mode,
                                            features::FeatureGroup group) {
  require(L.instances(task.name, mode), "featurize");
  auto set = decode_instances(io::read_file(L.instances(task.name, mode)));
  if (group != features::FeatureGroup::Full) set = features::apply_feature_group_mask(std::move(set), group);
  return set;
}

inline void stage_train(const ExperimentConfig& c) {
  StageRun run(c, "train");
  const auto& L = run.layout();
  require(L.labeled(), "label");
  run.input(L.labeled());
  const auto plan = fold_plan_for(io::read_cohort(L.labeled()), c);
  run.write(L.folds(), plan.to_json().dump(2) + "\n");
  for (const auto& task : c.tasks)
    for (const auto& m : c.models) {
      if (!m.applies_to(task)) continue;
      const auto mode = models::sequence_family(m.family) ? features::Mode::Sequence : features::Mode::Tabular;
      run.input(L.instances(task.name, mode));
      const auto set = load_instances(L, task, mode, c.feature_group);
      const auto cv = cross_validate(set, m.name, m.spec_for(task.kind()), m.grid, plan, c.seed, c.jobs);
      run.write(L.predictions(m.name, task.name), evaluation::encode_records(cv.records()));
      if (m.grid) run.write(L.grid_report(m.name, task.name), grid_report_json(cv).dump(2) + "\n");
      if (c.save_checkpoints)
        for (std::size_t f = 0; f < cv.folds.size(); ++f)
          if (cv.folds[f].model)
            run.write(L.checkpoint(m.name, task.name, f), models::checkpoint_to_json(*cv.folds[f].model).dump() + "\n");
    }
  run.commit();
}

inline evaluation::MetricsReport evaluate_all(const ExperimentConfig& c, const Layout& L,
                                              const evaluation::FoldPlan& plan, StageRun* run) {
  evaluation::MetricsReport report;
  report.k = plan.k;
  for (const auto& t : c.tasks) report.task_order.push_back(t.name);
  for (const auto& m : c.models) report.model_order.push_back(m.name);
  const evaluation::SubgroupScheme scheme;
  for (const auto& task : c.tasks)
    for (const auto& m : c.models) {
      if (!m.applies_to(task)) continue;
      const auto p = L.predictions(m.name, task.name);
      require(p, "train");
      if (run) run->input(p);
      report.merge(evaluation::evaluate(evaluation::decode_records(io::read_file(p)), m.name, scheme, plan));
    }
  return report;
}

inline void stage_evaluate(const ExperimentConfig& c) {
  StageRun run(c, "evaluate");
  const auto& L = run.layout();
  require(L.folds(), "train");
  run.input(L.folds());
  const auto plan = evaluation::FoldPlan::from_json(io::read_json(L.folds()));
  const auto report = evaluate_all(c, L, plan, &run);
  run.write(L.metrics_csv(), report.to_csv());
  run.write(L.metrics_json(), report.to_json().dump(2) + "\n");
  run.write(L.metrics_summary(), report.summary_json().dump(2) + "\n");
  run.commit();
}

inline std::string primary_metric(labels::TaskKind k) { return evaluation::metrics_for(k).front(); }

/// Cross-validates every (task, model) once per feature group.
inline void stage_ablate(const ExperimentConfig& c) {
  StageRun run(c, "ablate");
  const auto& L = run.layout();
  require(L.labeled(), "label");
  run.input(L.labeled());
  const auto plan = fold_plan_for(io::read_cohort(L.labeled()), c);
  const evaluation::SubgroupScheme scheme;
  evaluation::MetricsReport all;
  all.k = plan.k;
  std::string table = "task,model,group,metric,mean,std,folds,display\n";
  for (const auto& task : c.tasks)
    for (const auto& m : c.models) {
      if (!m.applies_to(task)) continue;
      const auto mode = models::sequence_family(m.family) ? features::Mode::Sequence : features::Mode::Tabular;
      run.input(L.instances(task.name, mode));
      for (auto group : c.ablation_groups) {
        const auto set = load_instances(L, task, mode, group);
        const std::string label = m.name + "@" + std::string(to_string(group));
        const auto cv = cross_validate(set, m.name, m.spec_for(task.kind()), m.grid, plan, c.seed, c.jobs);
        auto rep = evaluation::evaluate(cv.records(), label, scheme, plan);
        const auto metric = primary_metric(task.kind());
        const auto s = rep.summary({task.name, label, "All", metric});
        table += csv::escape(task.name) + "," + csv::escape(m.name) + "," + std::string(to_string(group)) + "," +
                 metric + "," + evaluation::format_fixed(s.mean, 3) + "," + evaluation::format_fixed(s.std, 3) + "," +
                 std::to_string(s.folds) + "," + csv::escape(evaluation::format_mean_std(s)) + "\n";
        all.merge(rep);
      }
    }
  run.write(L.ablation_csv(), table);
  run.write(L.ablation_metrics_csv(), all.to_csv());
  run.commit();
}

inline void stage_sparsity(const ExperimentConfig& c) {
  StageRun run(c, "sparsity");
  const auto& L = run.layout();
  require(L.cohort(), "synth");
  run.input(L.cohort());
  const auto table = ingestion::compute_feature_sparsity(io::read_cohort(L.cohort()), c.sparsity_bucket);
  run.write(L.sparsity_csv(), table.to_csv());
  run.commit();
}

/// Summary tables: primary metric "mean (std)" per task x model for All,
/// per-subgroup breakdowns, and the ablation table when present.
inline void stage_report(const ExperimentConfig& c) {
  StageRun run(c, "report");
  const auto& L = run.layout();
  require(L.metrics_json(), "evaluate");
  run.input(L.metrics_json());
  const auto rep = evaluation::MetricsReport::from_json(io::read_json(L.metrics_json()));
  std::string md = "# " + c.name + "\n\n";
  std::string csv_out = "table,task,model,subgroup,metric,display\n";
  md += "## Overall\n\n| Task | Metric |";
  for (const auto& m : rep.model_order) md += " " + m + " |";
  md += "\n|---|---|";
  for (std::size_t i = 0; i < rep.model_order.size(); ++i) md += "---|";
  md += "\n";
  for (const auto& task : c.tasks) {
    const auto metric = primary_metric(task.kind());
    md += "| " + task.name + " | " + metric + " |";
    for (const auto& m : rep.model_order) {
      const auto* v = rep.find({task.name, m, "All", metric});
      const auto cell = v ? evaluation::format_mean_std(evaluation::summarize(*v)) : std::string("-");
      md += " " + cell + " |";
      if (v) csv_out += "overall," + csv::escape(task.name) + "," + csv::escape(m) + ",All," + metric + "," +
                        csv::escape(cell) + "\n";
    }
    md += "\n";
  }
  const evaluation::SubgroupScheme scheme;
  const auto cells = scheme.cells();
  md += "\n## Subgroups\n\n| Task | Model |";
  for (const auto& s : cells) md += " " + s + " |";
  md += "\n|---|---|";
  for (std::size_t i = 0; i < cells.size(); ++i) md += "---|";
  md += "\n";
  for (const auto& task : c.tasks) {
    const auto metric = primary_metric(task.kind());
    for (const auto& m : rep.model_order) {
      if (!rep.find({task.name, m, "All", metric})) continue;
      md += "| " + task.name + " | " + m + " |";
      for (const auto& s : cells) {
        const auto* v = rep.find({task.name, m, s, metric});
        const auto cell = v ? evaluation::format_mean_std(evaluation::summarize(*v)) : std::string("-");
        md += " " + cell + " |";
        if (v) csv_out += "subgroup," + csv::escape(task.name) + "," + csv::escape(m) + "," + csv::escape(s) + "," +
                          metric + "," + csv::escape(cell) + "\n";
      }
      md += "\n";
    }
  }
  if (fs::exists(L.ablation_csv())) {
    run.input(L.ablation_csv());
    const auto t = csv::parse(io::read_file(L.ablation_csv()));
    md += "\n## Feature groups\n\n| Task | Model |";
    for (auto g : c.ablation_groups) md += " " + std::string(to_string(g)) + " |";
    md += "\n|---|---|";
    for (std::size_t i = 0; i < c.ablation_groups.size(); ++i) md += "---|";
    md += "\n";
    const auto ti = t.column("task"), mi = t.column("model"), gi = t.column("group"), di = t.column("display");
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::string>> rows;
    std::vector<std::pair<std::string, std::string>> order;
    for (const auto& r : t.rows) {
      const auto key = std::make_pair(r[ti], r[mi]);
      if (!rows.contains(key)) order.push_back(key);
      rows[key][r[gi]] = r[di];
      csv_out += "ablation," + csv::escape(r[ti]) + "," + csv::escape(r[mi]) + "," + csv::escape(r[gi]) + ",," +
                 csv::escape(r[di]) + "\n";
    }
    for (const auto& key : order) {
      md += "| " + key.first + " | " + key.second + " |";
      for (auto g : c.ablation_groups) {
        auto it = rows[key].find(std::string(to_string(g)));
        md += " " + (it == rows[key].end() ? std::string("-") : it->second) + " |";
      }
      md += "\n";
    }
  }
  run.write(L.report_md(), md);
  run.write(L.report_csv(), csv_out);
  run.commit();
}

/// Every stage in order; ablation runs when the config lists models.
inline void run_all(const ExperimentConfig& c) {
  stage_cohort(c);
  stage_label(c);
  stage_featurize(c);
  stage_sparsity(c);
  if (c.models.empty()) return;
  stage_train(c);
  stage_evaluate(c);
  if (c.raw.value("ablate", false)) stage_ablate(c);
  stage_report(c);
}

}  // namespace msprog::pipeline
