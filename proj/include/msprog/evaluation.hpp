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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "msprog/error.hpp"
#include "msprog/features.hpp"
#include "msprog/io.hpp"
#include "msprog/labels.hpp"
#include "msprog/log.hpp"
#include "msprog/metrics.hpp"
#include "msprog/random.hpp"
#include "msprog/subject.hpp"

namespace msprog::evaluation {

// ---------------------------------------------------------------------------
// Folds

struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::string>> folds;
  std::map<std::string, std::size_t> fold_of;

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = fold_of.find(id);
    if (it == fold_of.end()) return std::nullopt;
    return it->second;
  }

  /// Cross-validation roles for outer fold f: test = f, validation = f+1 mod k.
  std::size_t validation_fold(std::size_t f) const { return (f + 1) % k; }

  nlohmann::json to_json() const { return {{"k", k}, {"seed", seed}, {"folds", folds}}; }
  static FoldPlan from_json(const nlohmann::json& j) {
    FoldPlan p;
    p.k = j.at("k").get<std::size_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
    for (std::size_t f = 0; f < p.folds.size(); ++f)
      for (const auto& id : p.folds[f]) p.fold_of[id] = f;
    return p;
  }
};

/// Subject-level split: the distinct ids are sorted, shuffled by `seed`, and
/// dealt round-robin, so fold sizes differ by at most one.
inline FoldPlan kfold_split(std::vector<std::string> subject_ids, std::size_t k, std::uint64_t seed) {
  std::sort(subject_ids.begin(), subject_ids.end());
  subject_ids.erase(std::unique(subject_ids.begin(), subject_ids.end()), subject_ids.end());
  if (k < 2) throw config_error("INVALID_K", "k must be at least 2");
  if (subject_ids.size() < k)
    throw data_error("TOO_FEW_SUBJECTS", std::to_string(subject_ids.size()) + " subjects for " + std::to_string(k) +
                                             " folds");
  CounterRng rng(seed, fnv1a64("kfold"));
  rng.shuffle(subject_ids);
  FoldPlan p;
  p.k = k;
  p.seed = seed;
  p.folds.resize(k);
  for (std::size_t i = 0; i < subject_ids.size(); ++i) {
    p.folds[i % k].push_back(subject_ids[i]);
    p.fold_of[subject_ids[i]] = i % k;
  }
  for (auto& f : p.folds) std::sort(f.begin(), f.end());
  return p;
}

// ---------------------------------------------------------------------------
// Prediction records

struct PredictionRecord {
  std::string subject_id;
  Timestamp timestamp = 0;
  std::map<std::string, double> label_targets;
  std::map<std::string, std::vector<double>> label_predictions;
  nlohmann::json subgroup_attributes = nlohmann::json::object();  // name -> string | integer | real

  bool operator==(const PredictionRecord&) const = default;

  void check() const {
    for (const auto& [name, p] : label_predictions) {
      if (!label_targets.contains(name))
        throw data_error("PREDICTION_WITHOUT_TARGET", "prediction " + name + " has no target");
      if (p.empty()) throw data_error("EMPTY_PREDICTION", "prediction " + name + " is empty");
    }
  }

  nlohmann::json to_json() const {
    return {{"subject_id", subject_id},
            {"timestamp", timestamp},
            {"label_targets", label_targets},
            {"label_predictions", label_predictions},
            {"subgroup_attributes", subgroup_attributes}};
  }

  static PredictionRecord from_json(const nlohmann::json& j) {
    PredictionRecord r;
    try {
      r.subject_id = j.at("subject_id").get<std::string>();
      r.timestamp = j.at("timestamp").get<Timestamp>();
      r.label_targets = j.at("label_targets").get<std::map<std::string, double>>();
      r.label_predictions = j.at("label_predictions").get<std::map<std::string, std::vector<double>>>();
      r.subgroup_attributes = j.value("subgroup_attributes", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
      throw data_error("MALFORMED_RECORD", std::string("prediction record: ") + e.what());
    }
    r.check();
    return r;
  }
};

inline nlohmann::json subgroup_json(const features::SubgroupAttributes& s) {
  nlohmann::json j = nlohmann::json::object();
  if (s.sex != Sex::Unknown) j["sex"] = std::string(to_string(s.sex));
  if (s.age) j["age"] = *s.age;
  return j;
}

inline std::string encode_records(const std::vector<PredictionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.to_json().dump();
    out += '\n';
  }
  return out;
}

inline std::vector<PredictionRecord> decode_records(const std::string& text) {
  std::vector<PredictionRecord> out;
  std::size_t line_no = 0;
  for (const auto& line : io::split_lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw data_error("MALFORMED_RECORD", "line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(PredictionRecord::from_json(j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subgroups

/// Cells: All, Female, Male, then age buckets [0,30), [30,50), [50,70), [70,inf).
/// Records with unknown sex/age are excluded from the corresponding cells.
struct SubgroupScheme {
  std::vector<double> age_edges{30, 50, 70};

  std::vector<std::string> cells() const {
    std::vector<std::string> c{"All", "Female", "Male"};
    for (std::size_t i = 0; i <= age_edges.size(); ++i) c.push_back(age_cell(i));
    return c;
  }

  std::string age_cell(std::size_t bucket) const {
    char buf[64];
    if (bucket == 0) std::snprintf(buf, sizeof buf, "Age<%g", age_edges.front());
    else if (bucket == age_edges.size()) std::snprintf(buf, sizeof buf, "Age>=%g", age_edges.back());
    else std::snprintf(buf, sizeof buf, "Age%g-%g", age_edges[bucket - 1], age_edges[bucket]);
    return buf;
  }

  std::optional<std::size_t> age_bucket(double age) const {
    if (!(age >= 0) || !std::isfinite(age)) return std::nullopt;
    std::size_t b = 0;
    while (b < age_edges.size() && age >= age_edges[b]) ++b;
    return b;
  }

  std::vector<std::string> membership(const nlohmann::json& attrs) const {
    std::vector<std::string> m{"All"};
    if (attrs.contains("sex") && attrs["sex"].is_string()) {
      const auto s = attrs["sex"].get<std::string>();
      if (s == "Female" || s == "Male") m.push_back(s);
    }
    if (attrs.contains("age") && attrs["age"].is_number())
      if (auto b = age_bucket(attrs["age"].get<double>())) m.push_back(age_cell(*b));
    return m;
  }
};

// ---------------------------------------------------------------------------
// Metrics report

namespace metric_names {
inline constexpr const char* kAuPrc = "au_prc";
inline constexpr const char* kAvgAuPrc = "avg_au_prc";
inline constexpr const char* kRmse = "rmse";
inline constexpr const char* kAccuracy = "accuracy";
}  // namespace metric_names

inline std::vector<std::string> metrics_for(labels::TaskKind k) {
  using namespace metric_names;
  switch (k) {
    case labels::TaskKind::Regression: return {kRmse};
    case labels::TaskKind::Binary: return {kAuPrc, kAccuracy};
    case labels::TaskKind::Multiclass: return {kAvgAuPrc, kAccuracy};
  }
  return {};
}

struct Summary {
  double mean = metrics::kNaN;
  double std = metrics::kNaN;
  std::size_t folds = 0;  // contributing (finite) folds
};

inline Summary summarize(const std::vector<double>& values) {
  Summary s;
  double sum = 0;
  for (double v : values)
    if (std::isfinite(v)) {
      sum += v;
      ++s.folds;
    }
  if (s.folds == 0) return s;
  s.mean = sum / static_cast<double>(s.folds);
  double sq = 0;
  for (double v : values)
    if (std::isfinite(v)) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(s.folds));
  return s;
}

inline std::string format_fixed(double v, int decimals) {
  if (std::isnan(v)) return "NaN";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.rfind("-0.", 0) == 0 && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

inline std::string format_mean_std(const Summary& s) {
  return format_fixed(s.mean, 3) + " (" + format_fixed(s.std, 3) + ")";
}

struct CellKey {
  std::string task, model, subgroup, metric;
  auto operator<=>(const CellKey&) const = default;
};

/// Per-(task, model, subgroup, metric) fold values (NaN where undefined).
struct MetricsReport {
  std::size_t k = 0;
  std::vector<std::string> task_order, model_order, subgroup_order, metric_order;
  std::map<CellKey, std::vector<double>> cells;

  void merge(const MetricsReport& other) {
    if (k == 0) k = other.k;
    if (other.k != k) throw internal_error("FOLD_MISMATCH", "cannot merge reports with different k");
    auto add_order = [](std::vector<std::string>& dst, const std::vector<std::string>& src) {
      for (const auto& s : src)
        if (std::find(dst.begin(), dst.end(), s) == dst.end()) dst.push_back(s);
    };
    add_order(task_order, other.task_order);
    add_order(model_order, other.model_order);
    add_order(subgroup_order, other.subgroup_order);
    add_order(metric_order, other.metric_order);
    for (const auto& [key, v] : other.cells) cells[key] = v;
  }

  std::vector<CellKey> ordered_keys() const {
    auto pos = [](const std::vector<std::string>& order, const std::string& s) {
      return static_cast<std::size_t>(std::find(order.begin(), order.end(), s) - order.begin());
    };
    std::vector<CellKey> keys;
    for (const auto& [key, v] : cells) keys.push_back(key);
    std::stable_sort(keys.begin(), keys.end(), [&](const CellKey& a, const CellKey& b) {
      return std::make_tuple(pos(task_order, a.task), pos(model_order, a.model), pos(subgroup_order, a.subgroup),
                             pos(metric_order, a.metric)) <
             std::make_tuple(pos(task_order, b.task), pos(model_order, b.model), pos(subgroup_order, b.subgroup),
                             pos(metric_order, b.metric));
    });
    return keys;
  }

  const std::vector<double>* find(const CellKey& key) const {
    auto it = cells.find(key);
    return it == cells.end() ? nullptr : &it->second;
  }

  Summary summary(const CellKey& key) const {
    const auto* v = find(key);
    return v ? summarize(*v) : Summary{};
  }

  /// task,model,fold,subgroup,metric,value: k fold rows (0..k-1) then one
  /// `mean_std` row per cell whose value is "mean (std)" to 3 decimals.
  std::string to_csv() const {
    std::string out = "task,model,fold,subgroup,metric,value\n";
    for (const auto& key : ordered_keys()) {
      const auto& v = cells.at(key);
      const std::string prefix = csv::escape(key.task) + "," + csv::escape(key.model) + ",";
      const std::string suffix = "," + csv::escape(key.subgroup) + "," + csv::escape(key.metric) + ",";
      for (std::size_t f = 0; f < v.size(); ++f) out += prefix + std::to_string(f) + suffix + format_fixed(v[f], 6) + "\n";
      out += prefix + "mean_std" + suffix + csv::escape(format_mean_std(summarize(v))) + "\n";
    }
    return out;
  }

  nlohmann::json summary_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& key : ordered_keys()) {
      const auto s = summarize(cells.at(key));
      rows.push_back({{"task", key.task},
                      {"model", key.model},
                      {"subgroup", key.subgroup},
                      {"metric", key.metric},
                      {"mean", format_fixed(s.mean, 3)},
                      {"std", format_fixed(s.std, 3)},
                      {"folds", s.folds},
                      {"display", format_mean_std(s)}});
    }
    return {{"k", k}, {"cells", rows}};
  }

  nlohmann::json to_json() const {
    nlohmann::json c = nlohmann::json::array();
    for (const auto& key : ordered_keys()) {
      nlohmann::json vals = nlohmann::json::array();
      for (double v : cells.at(key)) vals.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
      c.push_back({{"task", key.task}, {"model", key.model}, {"subgroup", key.subgroup}, {"metric", key.metric},
                   {"folds", vals}});
    }
    return {{"k", k},
            {"tasks", task_order},
            {"models", model_order},
            {"subgroups", subgroup_order},
            {"metrics", metric_order},
            {"cells", c}};
  }

  static MetricsReport from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.k = j.at("k").get<std::size_t>();
    r.task_order = j.at("tasks").get<std::vector<std::string>>();
    r.model_order = j.at("models").get<std::vector<std::string>>();
    r.subgroup_order = j.at("subgroups").get<std::vector<std::string>>();
    r.metric_order = j.at("metrics").get<std::vector<std::string>>();
    for (const auto& c : j.at("cells")) {
      std::vector<double> v;
      for (const auto& x : c.at("folds")) v.push_back(x.is_null() ? metrics::kNaN : x.get<double>());
      r.cells[{c.at("task"), c.at("model"), c.at("subgroup"), c.at("metric")}] = std::move(v);
    }
    return r;
  }
};

/// Metric over one group of (target, prediction) pairs; NaN when undefined.
inline double compute_metric(const std::string& metric, labels::TaskKind kind, const std::vector<double>& targets,
                             const std::vector<std::vector<double>>& preds) {
  using namespace metric_names;
  if (targets.empty()) return metrics::kNaN;
  const std::size_t n = targets.size();
  if (metric == kRmse) {
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = preds[i][0];
    return metrics::rmse(targets, p);
  }
  if (metric == kAuPrc) {
    std::vector<bool> t(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = targets[i] > 0.5;
      s[i] = preds[i][0];
    }
    return metrics::average_precision(t, s);
  }
  if (metric == kAvgAuPrc) {
    const std::size_t k = preds[0].size();
    std::vector<int> t(n);
    std::vector<double> s(n * k);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(targets[i]);
      for (std::size_t c = 0; c < k; ++c) s[i * k + c] = preds[i][c];
    }
    auto m = metrics::macro_average_precision(t, s, k);
    if (m.classes_skipped > 0)
      log::debug("macro AP skipped " + std::to_string(m.classes_skipped) + " classes without positives");
    return m.value;
  }
  if (metric == kAccuracy) {
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(targets[i]);
      p[i] = kind == labels::TaskKind::Binary ? (preds[i][0] >= 0.5 ? 1 : 0) : metrics::argmax(preds[i]);
    }
    return metrics::accuracy(t, p);
  }
  throw config_error("UNKNOWN_METRIC", "unknown metric " + metric);
}

/// Computes every metric per task (record label name), fold and subgroup cell.
/// Records are put in (subject_id, timestamp) order first, so the report is a
/// function of the record multiset. Subgroup cells with no records in any
/// fold are omitted.
inline MetricsReport evaluate(std::vector<PredictionRecord> records, const std::string& model,
                              const SubgroupScheme& scheme, const FoldPlan& plan) {
  std::sort(records.begin(), records.end(), [](const PredictionRecord& a, const PredictionRecord& b) {
    return std::tie(a.subject_id, a.timestamp) < std::tie(b.subject_id, b.timestamp);
  });
  MetricsReport rep;
  rep.k = plan.k;
  rep.model_order = {model};
  rep.subgroup_order = scheme.cells();
  struct Group {
    std::vector<double> targets;
    std::vector<std::vector<double>> preds;
  };
  // task -> subgroup -> fold -> group
  std::map<std::string, std::map<std::string, std::map<std::size_t, Group>>> groups;
  std::set<std::string> tasks;
  for (const auto& r : records) {
    r.check();
    const auto fold = plan.find(r.subject_id);
    if (!fold) throw data_error("UNKNOWN_SUBJECT", "record subject " + r.subject_id + " is not in the fold plan");
    const auto cells = scheme.membership(r.subgroup_attributes);
    for (const auto& [name, pred] : r.label_predictions) {
      tasks.insert(name);
      for (const auto& c : cells) {
        auto& g = groups[name][c][*fold];
        g.targets.push_back(r.label_targets.at(name));
        g.preds.push_back(pred);
      }
    }
  }
  for (const auto& task : tasks) {
    rep.task_order.push_back(task);
    const auto kind = labels::parse_task(task).kind();
    for (const auto& m : metrics_for(kind))
      if (std::find(rep.metric_order.begin(), rep.metric_order.end(), m) == rep.metric_order.end())
        rep.metric_order.push_back(m);
    for (const auto& [cell, by_fold] : groups[task])
      for (const auto& metric : metrics_for(kind)) {
        std::vector<double> values(plan.k, metrics::kNaN);
        for (const auto& [f, g] : by_fold) values[f] = compute_metric(metric, kind, g.targets, g.preds);
        rep.cells[{task, model, cell, metric}] = std::move(values);
      }
  }
  return rep;
}

}  // namespace msprog::evaluation
