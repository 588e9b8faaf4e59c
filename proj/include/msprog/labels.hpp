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
#include <cctype>
#include <charconv>
#include <functional>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "msprog/error.hpp"
#include "msprog/subject.hpp"

namespace msprog::labels {

// ---------------------------------------------------------------------------
// Horizons and task names

/// Prediction window relative to a trigger: observations at t with
/// trigger < t and start <= t - trigger < end. The trigger instant itself is
/// never part of a target window, even when start == 0.
struct Horizon {
  Timestamp start = 0;
  Timestamp end = 0;

  bool contains(Timestamp trigger, Timestamp t) const {
    const Timestamp d = t - trigger;
    return d > 0 && d >= start && d < end;
  }
  Timestamp first_instant(Timestamp trigger) const { return trigger + std::max<Timestamp>(start, 1); }
  Timestamp end_instant(Timestamp trigger) const { return trigger + end; }

  void check() const {
    if (!(start >= 0 && start < end)) throw config_error("INVALID_HORIZON", "horizon requires 0 <= start < end");
  }
  bool operator==(const Horizon&) const = default;
};

inline std::string format_horizon(const Horizon& h) {
  struct Unit { Timestamp s; const char* suffix; };
  static constexpr Unit units[] = {{seconds::kMonth, "mo"}, {seconds::kWeek, "wk"}, {seconds::kDay, "d"}, {1, "s"}};
  for (const auto& u : units)
    if (h.start % u.s == 0 && h.end % u.s == 0)
      return std::to_string(h.start / u.s) + "-" + std::to_string(h.end / u.s) + u.suffix;
  return {};
}

inline std::optional<Horizon> parse_horizon(std::string_view s) {
  const auto dash = s.find('-');
  if (dash == std::string_view::npos) return std::nullopt;
  std::size_t unit_pos = dash + 1;
  while (unit_pos < s.size() && std::isdigit(static_cast<unsigned char>(s[unit_pos]))) ++unit_pos;
  const auto unit = s.substr(unit_pos);
  Timestamp scale = 0;
  if (unit == "mo") scale = seconds::kMonth;
  else if (unit == "wk") scale = seconds::kWeek;
  else if (unit == "d") scale = seconds::kDay;
  else if (unit == "s") scale = 1;
  else return std::nullopt;
  Timestamp a = 0, b = 0;
  auto ra = std::from_chars(s.data(), s.data() + dash, a);
  auto rb = std::from_chars(s.data() + dash + 1, s.data() + unit_pos, b);
  if (ra.ec != std::errc() || ra.ptr != s.data() + dash || rb.ec != std::errc() || rb.ptr != s.data() + unit_pos)
    return std::nullopt;
  Horizon h{a * scale, b * scale};
  if (!(h.start >= 0 && h.start < h.end)) return std::nullopt;
  return h;
}

enum class TaskFamily { EdssMean, EdssGt3, EdssGt5, EdssSeverity, Score, Progression, Diagnosis };
enum class TaskKind { Regression, Binary, Multiclass };
enum class ScoreKind { Cognitive, Dexterity, Mobility, Overall };

inline std::string_view to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::Cognitive: return "cognitive";
    case ScoreKind::Dexterity: return "dexterity";
    case ScoreKind::Mobility: return "mobility";
    case ScoreKind::Overall: return "overall";
  }
  return "overall";
}

inline std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::Regression: return "regression";
    case TaskKind::Binary: return "binary";
    case TaskKind::Multiclass: return "multiclass";
  }
  return "regression";
}

/// A prediction task. Names follow `<task>@<start>-<end><unit>`
/// (e.g. `edss_gt3@0-6mo`, `score_mobility@1-2wk`, `prog_NHPT@6-12mo`) or
/// `diagnosis_n<N>` for the first-N-POMs diagnosis task.
struct TaskDef {
  std::string name;
  TaskFamily family = TaskFamily::EdssMean;
  Horizon horizon;
  ScoreKind score = ScoreKind::Overall;
  std::string feature;  // progression target feature
  int n_poms = 0;       // diagnosis

  TaskKind kind() const {
    switch (family) {
      case TaskFamily::EdssMean:
      case TaskFamily::Score: return TaskKind::Regression;
      case TaskFamily::EdssGt3:
      case TaskFamily::EdssGt5:
      case TaskFamily::Diagnosis: return TaskKind::Binary;
      case TaskFamily::EdssSeverity:
      case TaskFamily::Progression: return TaskKind::Multiclass;
    }
    return TaskKind::Regression;
  }
  int n_classes() const {
    switch (family) {
      case TaskFamily::EdssSeverity: return 4;
      case TaskFamily::Progression: return 3;
      case TaskFamily::EdssGt3:
      case TaskFamily::EdssGt5:
      case TaskFamily::Diagnosis: return 2;
      default: return 0;
    }
  }
  bool edss_derived() const {
    return family == TaskFamily::EdssMean || family == TaskFamily::EdssGt3 || family == TaskFamily::EdssGt5 ||
           family == TaskFamily::EdssSeverity;
  }
};

inline TaskDef parse_task(std::string_view name) {
  TaskDef t;
  t.name = std::string(name);
  if (name.rfind("diagnosis_n", 0) == 0) {
    t.family = TaskFamily::Diagnosis;
    const auto digits = name.substr(11);
    auto r = std::from_chars(digits.data(), digits.data() + digits.size(), t.n_poms);
    if (r.ec != std::errc() || r.ptr != digits.data() + digits.size() || t.n_poms < 1)
      throw config_error("UNKNOWN_TASK", "bad diagnosis task " + t.name);
    return t;
  }
  const auto at = name.find('@');
  if (at == std::string_view::npos) throw config_error("UNKNOWN_TASK", "task without horizon: " + t.name);
  const auto base = name.substr(0, at);
  auto h = parse_horizon(name.substr(at + 1));
  if (!h) throw config_error("UNKNOWN_TASK", "bad horizon in task " + t.name);
  t.horizon = *h;
  if (base == "edss_mean") t.family = TaskFamily::EdssMean;
  else if (base == "edss_gt3") t.family = TaskFamily::EdssGt3;
  else if (base == "edss_gt5") t.family = TaskFamily::EdssGt5;
  else if (base == "edss_severity") t.family = TaskFamily::EdssSeverity;
  else if (base.rfind("score_", 0) == 0) {
    t.family = TaskFamily::Score;
    const auto k = base.substr(6);
    if (k == "cognitive") t.score = ScoreKind::Cognitive;
    else if (k == "dexterity") t.score = ScoreKind::Dexterity;
    else if (k == "mobility") t.score = ScoreKind::Mobility;
    else if (k == "overall") t.score = ScoreKind::Overall;
    else throw config_error("UNKNOWN_TASK", "unknown score kind in " + t.name);
  } else if (base.rfind("prog_", 0) == 0 && base.size() > 5) {
    t.family = TaskFamily::Progression;
    t.feature = std::string(base.substr(5));
  } else {
    throw config_error("UNKNOWN_TASK", "unknown task " + t.name);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Options

enum class MissingPolicy { PaperDefault, Exclude };
enum class EdssAggregation { Mean, Last };
enum class BaselineUpdate { RunningMean, Ewma };
enum class TriggerPolicy { EveryEvent, LastEventPerEpisode };

/// Per-feature orientation; true means a larger raw value is more disabled.
using Orientation = std::map<std::string, bool>;

inline Orientation default_orientation() {
  return {{"EDSS", true},          {"NHPT", true},        {"T25FW", true},         {"PASAT", false},
          {"SDMT", false},         {"MSWS12", true},      {"ips_correct", false},  {"ips_time", true},
          {"pinching", false},     {"draw_shape_error", true}, {"walk_steps", false}, {"u_turn_speed", false},
          {"balance_sway", true},  {"mood", true}};
}

inline bool higher_is_worse(const Orientation& o, const std::string& feature) {
  auto it = o.find(feature);
  return it == o.end() ? true : it->second;
}

struct ProgressionOptions {
  std::size_t warmup = 3;
  double threshold = 0.20;
  BaselineUpdate update = BaselineUpdate::RunningMean;
  double ewma_alpha = 0.3;
  double zero_epsilon = 1e-9;
};

struct LabelOptions {
  MissingPolicy missing_policy = MissingPolicy::Exclude;
  EdssAggregation edss_aggregation = EdssAggregation::Mean;
  TriggerPolicy triggers = TriggerPolicy::EveryEvent;
  ProgressionOptions progression;
  Orientation orientation = default_orientation();
};

inline LabelOptions label_options_from_json(const nlohmann::json& j) {
  LabelOptions o;
  try {
    const auto mp = j.value("missing_policy", std::string("exclude"));
    if (mp == "exclude") o.missing_policy = MissingPolicy::Exclude;
    else if (mp == "paper_default") o.missing_policy = MissingPolicy::PaperDefault;
    else throw config_error("INVALID_LABEL_OPTIONS", "unknown missing_policy " + mp);
    const auto agg = j.value("edss_aggregation", std::string("mean"));
    if (agg == "mean") o.edss_aggregation = EdssAggregation::Mean;
    else if (agg == "last") o.edss_aggregation = EdssAggregation::Last;
    else throw config_error("INVALID_LABEL_OPTIONS", "unknown edss_aggregation " + agg);
    const auto trig = j.value("triggers", std::string("every_event"));
    if (trig == "every_event") o.triggers = TriggerPolicy::EveryEvent;
    else if (trig == "last_event_per_episode") o.triggers = TriggerPolicy::LastEventPerEpisode;
    else throw config_error("INVALID_LABEL_OPTIONS", "unknown triggers " + trig);
    auto& p = o.progression;
    p.warmup = j.value("warmup", p.warmup);
    p.threshold = j.value("threshold", p.threshold);
    const auto upd = j.value("baseline_update", std::string("running_mean"));
    if (upd == "running_mean") p.update = BaselineUpdate::RunningMean;
    else if (upd == "ewma") p.update = BaselineUpdate::Ewma;
    else throw config_error("INVALID_LABEL_OPTIONS", "unknown baseline_update " + upd);
    p.ewma_alpha = j.value("ewma_alpha", p.ewma_alpha);
    p.zero_epsilon = j.value("zero_epsilon", p.zero_epsilon);
    if (j.contains("orientation"))
      for (const auto& [k, v] : j.at("orientation").items()) o.orientation[k] = v.get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw config_error("INVALID_LABEL_OPTIONS", e.what());
  }
  if (o.progression.warmup < 1 || !(o.progression.threshold > 0.0))
    throw config_error("INVALID_LABEL_OPTIONS", "warmup must be >= 1 and threshold > 0");
  return o;
}

// ---------------------------------------------------------------------------
// Event windows

namespace detail {

struct FlatEvent {
  const ClinicalEvent* event;
  std::size_t episode;
};

inline std::vector<FlatEvent> flatten(const Subject& s) {
  std::vector<FlatEvent> out;
  for (std::size_t e = 0; e < s.episodes.size(); ++e)
    for (const auto& ev : s.episodes[e].events) out.push_back({&ev, e});
  return out;
}

// Events with trigger < t and t - trigger in [start, end).
inline std::pair<std::size_t, std::size_t> window(const std::vector<FlatEvent>& flat, Timestamp trigger,
                                                  const Horizon& h) {
  auto cmp = [](const FlatEvent& f, Timestamp t) { return f.event->timestamp < t; };
  const auto lo = std::lower_bound(flat.begin(), flat.end(), h.first_instant(trigger), cmp);
  const auto hi = std::lower_bound(lo, flat.end(), h.end_instant(trigger), cmp);
  return {static_cast<std::size_t>(lo - flat.begin()), static_cast<std::size_t>(hi - flat.begin())};
}

inline std::optional<double> test_value(const ClinicalEvent& ev, const std::string& name) {
  for (const auto& r : ev.resources) {
    if (const auto* t = std::get_if<FunctionalTest>(&r); t && t->name == name) return t->value;
    if (const auto* q = std::get_if<Questionnaire>(&r); q && q->name == name && q->numeric_response)
      return *q->numeric_response;
  }
  return std::nullopt;
}

inline bool is_edss_name(std::string_view name) {
  return name.size() >= 4 && (name.substr(0, 4) == "EDSS" || name.substr(0, 4) == "edss");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// EDSS labels

inline std::optional<double> edss_mean_label(const Subject& subject, Timestamp trigger, const Horizon& horizon,
                                             MissingPolicy policy = MissingPolicy::Exclude,
                                             EdssAggregation aggregation = EdssAggregation::Mean) {
  double sum = 0.0;
  double last = 0.0;
  std::size_t n = 0;
  subject.for_each_event([&](const ClinicalEvent& ev) {
    if (!horizon.contains(trigger, ev.timestamp)) return;
    for (const auto& r : ev.resources)
      if (const auto* t = std::get_if<FunctionalTest>(&r); t && detail::is_edss_name(t->name)) {
        sum += t->value;
        last = t->value;
        ++n;
      }
  });
  if (n == 0) {
    if (policy == MissingPolicy::PaperDefault) return 0.0;
    return std::nullopt;
  }
  return aggregation == EdssAggregation::Mean ? sum / static_cast<double>(n) : last;
}

/// Strict: a window mean of exactly the threshold is not above it.
inline bool edss_threshold_label(double edss_mean, double threshold) { return edss_mean > threshold; }

enum class SeverityCategory { NoDisability = 0, Mild = 1, Moderate = 2, Severe = 3 };

inline std::string_view to_string(SeverityCategory c) {
  switch (c) {
    case SeverityCategory::NoDisability: return "No disability";
    case SeverityCategory::Mild: return "Mild";
    case SeverityCategory::Moderate: return "Moderate";
    case SeverityCategory::Severe: return "Severe";
  }
  return "";
}

/// Half-open bins [0,1.5), [1.5,3), [3,5), [5,10]; on the 0.5 grid they
/// coincide with 0-1 / 1.5-2.5 / 3-4.5 / 5-10.
inline SeverityCategory edss_severity_category(double edss_mean) {
  if (!(edss_mean >= 0.0 && edss_mean <= 10.0))
    throw data_error("EDSS_OUT_OF_RANGE", "EDSS mean outside [0,10]: " + std::to_string(edss_mean));
  if (edss_mean < 1.5) return SeverityCategory::NoDisability;
  if (edss_mean < 3.0) return SeverityCategory::Mild;
  if (edss_mean < 5.0) return SeverityCategory::Moderate;
  return SeverityCategory::Severe;
}

// ---------------------------------------------------------------------------
// Disability scores

struct ScoreWeights {
  // category -> test -> weight
  std::map<std::string, std::map<std::string, double>> weights;
  Orientation orientation;
  // test -> (population min, population max)
  std::map<std::string, std::pair<double, double>> range;

  void check() const {
    for (const auto& [cat, tests] : weights) {
      double total = 0.0;
      for (const auto& [name, w] : tests) {
        if (!(w >= 0.0)) throw config_error("INVALID_SCORE_WEIGHTS", "negative weight for " + name);
        total += w;
        auto r = range.find(name);
        if (r == range.end() || !(r->second.first < r->second.second))
          throw config_error("INVALID_SCORE_WEIGHTS", "normalization requires min < max for " + name);
      }
      if (!(total > 0.0)) throw config_error("INVALID_SCORE_WEIGHTS", "category without weight: " + cat);
    }
  }

  /// Min-max normalized with orientation applied: 1 is maximal disability.
  double normalize(const std::string& test, double value) const {
    const auto& [lo, hi] = range.at(test);
    const double x = std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
    return higher_is_worse(orientation, test) ? x : 1.0 - x;
  }

  /// Uniform weights within each of the cognitive/dexterity/mobility
  /// categories, with min/max taken over every observation in the cohort.
  static ScoreWeights uniform_from_cohort(const Cohort& cohort, const Orientation& orientation) {
    ScoreWeights sw;
    sw.orientation = orientation;
    static const std::set<std::string> categories{"cognitive", "dexterity", "mobility"};
    for (const auto& s : cohort)
      s.for_each_event([&](const ClinicalEvent& ev) {
        for (const auto& r : ev.resources) {
          const auto* t = std::get_if<FunctionalTest>(&r);
          if (t == nullptr || !categories.count(t->category)) continue;
          sw.weights[t->category][t->name] = 1.0;
          auto [it, fresh] = sw.range.try_emplace(t->name, t->value, t->value);
          if (!fresh) {
            it->second.first = std::min(it->second.first, t->value);
            it->second.second = std::max(it->second.second, t->value);
          }
        }
      });
    // Constant tests cannot be normalized; drop them.
    for (auto& [cat, tests] : sw.weights)
      std::erase_if(tests, [&](const auto& kv) { return !(sw.range[kv.first].first < sw.range[kv.first].second); });
    std::erase_if(sw.weights, [](const auto& kv) { return kv.second.empty(); });
    for (auto& [cat, tests] : sw.weights) {
      const double w = 1.0 / static_cast<double>(tests.size());
      for (auto& [name, weight] : tests) weight = w;
    }
    return sw;
  }
};

struct DisabilityScores {
  std::optional<double> cognitive, dexterity, mobility, overall;

  std::optional<double> get(ScoreKind k) const {
    switch (k) {
      case ScoreKind::Cognitive: return cognitive;
      case ScoreKind::Dexterity: return dexterity;
      case ScoreKind::Mobility: return mobility;
      case ScoreKind::Overall: return overall;
    }
    return std::nullopt;
  }
};

/// Category score = weighted mean of normalized observed tests (weights
/// renormalized over what was observed; repeated tests averaged first).
/// Overall = mean of the defined category scores.
template <typename EventRange>
DisabilityScores disability_scores(const EventRange& events_in_day, const ScoreWeights& weights) {
  std::map<std::string, std::pair<double, std::size_t>> observed;
  for (const ClinicalEvent& ev : events_in_day)
    for (const auto& r : ev.resources)
      if (const auto* t = std::get_if<FunctionalTest>(&r)) {
        auto& [sum, n] = observed[t->name];
        sum += t->value;
        ++n;
      }
  auto category = [&](const char* cat) -> std::optional<double> {
    auto it = weights.weights.find(cat);
    if (it == weights.weights.end()) return std::nullopt;
    double acc = 0.0, wsum = 0.0;
    for (const auto& [name, w] : it->second) {
      auto o = observed.find(name);
      if (o == observed.end() || w <= 0.0) continue;
      acc += w * weights.normalize(name, o->second.first / static_cast<double>(o->second.second));
      wsum += w;
    }
    if (wsum <= 0.0) return std::nullopt;
    return acc / wsum;
  };
  DisabilityScores s;
  s.cognitive = category("cognitive");
  s.dexterity = category("dexterity");
  s.mobility = category("mobility");
  double sum = 0.0;
  int n = 0;
  for (const auto& c : {s.cognitive, s.dexterity, s.mobility})
    if (c) {
      sum += *c;
      ++n;
    }
  if (n > 0) s.overall = sum / n;
  return s;
}

/// Mean of per-day scores over days (episodes) with in-window events.
inline std::optional<double> score_horizon_label(const Subject& subject, Timestamp trigger, const Horizon& horizon,
                                                 ScoreKind kind, const ScoreWeights& weights) {
  double sum = 0.0;
  std::size_t days = 0;
  for (const auto& ep : subject.episodes) {
    std::vector<std::reference_wrapper<const ClinicalEvent>> in_window;
    for (const auto& ev : ep.events)
      if (horizon.contains(trigger, ev.timestamp)) in_window.push_back(std::cref(ev));
    if (in_window.empty()) continue;
    const auto scores = disability_scores(in_window, weights);
    if (auto v = scores.get(kind)) {
      sum += *v;
      ++days;
    }
  }
  if (days == 0) return std::nullopt;
  return sum / static_cast<double>(days);
}

// ---------------------------------------------------------------------------
// Progression labels

enum class ProgressionState { Unchanged = 0, Worsened = 1, Improved = 2 };

struct SeriesPoint {
  Timestamp timestamp = 0;
  double value = 0.0;
};

struct ProgressionPoint {
  Timestamp timestamp = 0;
  ProgressionState state = ProgressionState::Unchanged;
  double baseline = 0.0;  // baseline the point was compared against (warmup: running mean so far)
};

/// Rolling-baseline annotation. The first `warmup` points are Unchanged and
/// seed the baseline; each later point is compared against the current
/// baseline (orientation-adjusted relative change vs. threshold) and then
/// folded into it.
inline std::vector<ProgressionPoint> progression_annotate(const std::vector<SeriesPoint>& series,
                                                          bool feature_higher_is_worse,
                                                          const ProgressionOptions& opt = {}) {
  std::vector<ProgressionPoint> out;
  out.reserve(series.size());
  const double sign = feature_higher_is_worse ? 1.0 : -1.0;
  double sum = 0.0;
  double baseline = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double v = series[i].value;
    ProgressionPoint p{series[i].timestamp, ProgressionState::Unchanged, baseline};
    if (i >= opt.warmup) {
      double change;
      double bound;
      if (std::abs(baseline) < 1e-9) {
        change = sign * (v - baseline);
        bound = opt.zero_epsilon;
      } else {
        change = sign * (v - baseline) / std::abs(baseline);
        bound = opt.threshold;
      }
      if (change > bound) p.state = ProgressionState::Worsened;
      else if (change < -bound) p.state = ProgressionState::Improved;
    }
    sum += v;
    if (i < opt.warmup || opt.update == BaselineUpdate::RunningMean)
      baseline = sum / static_cast<double>(i + 1);
    else
      baseline = opt.ewma_alpha * v + (1.0 - opt.ewma_alpha) * baseline;
    if (i < opt.warmup) p.baseline = baseline;
    out.push_back(p);
  }
  return out;
}

/// Worsened > Improved > Unchanged; nullopt when the window is empty.
inline std::optional<ProgressionState> progression_horizon_label(const std::vector<ProgressionPoint>& annotations,
                                                                 Timestamp trigger, const Horizon& horizon) {
  bool any = false, worsened = false, improved = false;
  for (const auto& p : annotations) {
    if (!horizon.contains(trigger, p.timestamp)) continue;
    any = true;
    worsened |= p.state == ProgressionState::Worsened;
    improved |= p.state == ProgressionState::Improved;
  }
  if (!any) return std::nullopt;
  if (worsened) return ProgressionState::Worsened;
  if (improved) return ProgressionState::Improved;
  return ProgressionState::Unchanged;
}

/// Time-ordered values of a feature (functional test value or numeric
/// questionnaire response) across the subject.
inline std::vector<SeriesPoint> feature_series(const Subject& s, const std::string& feature) {
  std::vector<SeriesPoint> out;
  s.for_each_event([&](const ClinicalEvent& ev) {
    if (auto v = detail::test_value(ev, feature)) out.push_back({ev.timestamp, *v});
  });
  return out;
}

// ---------------------------------------------------------------------------
// Diagnosis

struct PomObservation {
  Timestamp timestamp = 0;
  Resource resource;
};

struct DiagnosisInstance {
  std::vector<PomObservation> poms;  // chronologically first N
  bool has_ms = false;
  Timestamp last_timestamp() const { return poms.empty() ? 0 : poms.back().timestamp; }
};

inline std::optional<DiagnosisInstance> diagnosis_instance(const Subject& subject, int n) {
  if (!subject.characteristics.has_ms || n < 1) return std::nullopt;
  DiagnosisInstance inst;
  inst.has_ms = *subject.characteristics.has_ms;
  for (const auto& ep : subject.episodes)
    for (const auto& ev : ep.events)
      for (const auto& r : ev.resources) {
        if (!is_pom(r)) continue;
        inst.poms.push_back({ev.timestamp, r});
        if (static_cast<int>(inst.poms.size()) == n) return inst;
      }
  return std::nullopt;
}

inline const std::vector<int>& default_diagnosis_sizes() {
  static const std::vector<int> sizes{5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  return sizes;
}

// ---------------------------------------------------------------------------
// Cohort annotation

struct LabelValue {
  double value = 0.0;
  // Earliest observation feeding the label; nullopt for imputed or static targets.
  std::optional<Timestamp> first_source;
};

/// Builds labels for one trigger. Returns nullopt when the target is Missing
/// under the configured policy. The paper_default imputation applies to the
/// EDSS-derived families only.
class SubjectLabeler {
 public:
  SubjectLabeler(const Subject& subject, const LabelOptions& options, const ScoreWeights* weights)
      : subject_(subject), options_(options), weights_(weights), flat_(detail::flatten(subject)) {}

  std::optional<LabelValue> label(const TaskDef& task, Timestamp trigger) {
    switch (task.family) {
      case TaskFamily::EdssMean:
      case TaskFamily::EdssGt3:
      case TaskFamily::EdssGt5:
      case TaskFamily::EdssSeverity: return edss(task, trigger);
      case TaskFamily::Score: return score(task, trigger);
      case TaskFamily::Progression: return progression(task, trigger);
      case TaskFamily::Diagnosis: return std::nullopt;  // attached per subject, see annotate_subject
    }
    return std::nullopt;
  }

 private:
  std::optional<LabelValue> edss(const TaskDef& task, Timestamp trigger) {
    const auto [lo, hi] = detail::window(flat_, trigger, task.horizon);
    double sum = 0.0, last = 0.0;
    std::size_t n = 0;
    std::optional<Timestamp> first;
    for (std::size_t i = lo; i < hi; ++i)
      for (const auto& r : flat_[i].event->resources)
        if (const auto* t = std::get_if<FunctionalTest>(&r); t && detail::is_edss_name(t->name)) {
          sum += t->value;
          last = t->value;
          ++n;
          if (!first) first = flat_[i].event->timestamp;
        }
    double mean;
    if (n == 0) {
      if (options_.missing_policy == MissingPolicy::Exclude) return std::nullopt;
      mean = 0.0;
    } else {
      mean = options_.edss_aggregation == EdssAggregation::Mean ? sum / static_cast<double>(n) : last;
    }
    mean = std::clamp(mean, 0.0, 10.0);
    switch (task.family) {
      case TaskFamily::EdssGt3: return LabelValue{edss_threshold_label(mean, 3.0) ? 1.0 : 0.0, first};
      case TaskFamily::EdssGt5: return LabelValue{edss_threshold_label(mean, 5.0) ? 1.0 : 0.0, first};
      case TaskFamily::EdssSeverity:
        return LabelValue{static_cast<double>(static_cast<int>(edss_severity_category(mean))), first};
      default: return LabelValue{mean, first};
    }
  }

  std::optional<LabelValue> score(const TaskDef& task, Timestamp trigger) {
    if (weights_ == nullptr) throw config_error("MISSING_SCORE_WEIGHTS", "score tasks require score weights");
    const auto [lo, hi] = detail::window(flat_, trigger, task.horizon);
    double sum = 0.0;
    std::size_t days = 0;
    std::optional<Timestamp> first;
    for (std::size_t i = lo; i < hi;) {
      std::size_t j = i;
      std::vector<std::reference_wrapper<const ClinicalEvent>> day;
      while (j < hi && flat_[j].episode == flat_[i].episode) day.push_back(std::cref(*flat_[j++].event));
      if (auto v = disability_scores(day, *weights_).get(task.score)) {
        sum += *v;
        ++days;
        if (!first) first = flat_[i].event->timestamp;
      }
      i = j;
    }
    if (days == 0) return std::nullopt;
    return LabelValue{sum / static_cast<double>(days), first};
  }

  std::optional<LabelValue> progression(const TaskDef& task, Timestamp trigger) {
    auto it = annotations_.find(task.feature);
    if (it == annotations_.end()) {
      const auto series = feature_series(subject_, task.feature);
      it = annotations_
               .emplace(task.feature, progression_annotate(series, higher_is_worse(options_.orientation, task.feature),
                                                           options_.progression))
               .first;
    }
    const auto& ann = it->second;
    auto state = progression_horizon_label(ann, trigger, task.horizon);
    if (!state) return std::nullopt;
    std::optional<Timestamp> first;
    for (const auto& p : ann)
      if (task.horizon.contains(trigger, p.timestamp)) {
        first = p.timestamp;
        break;
      }
    return LabelValue{static_cast<double>(static_cast<int>(*state)), first};
  }

  const Subject& subject_;
  const LabelOptions& options_;
  const ScoreWeights* weights_;
  std::vector<detail::FlatEvent> flat_;
  std::map<std::string, std::vector<ProgressionPoint>> annotations_;
};

inline bool needs_score_weights(const std::vector<TaskDef>& tasks) {
  return std::any_of(tasks.begin(), tasks.end(), [](const TaskDef& t) { return t.family == TaskFamily::Score; });
}

/// Copy of `subject` with classification/regression labels attached to every
/// trigger event whose target is not Missing. Diagnosis labels go on the
/// event holding the N-th POM.
inline Subject annotate_subject(const Subject& subject, const std::vector<TaskDef>& tasks,
                                const LabelOptions& options, const ScoreWeights* weights) {
  Subject out = subject;
  SubjectLabeler labeler(subject, options, weights);
  for (std::size_t e = 0; e < out.episodes.size(); ++e) {
    auto& events = out.episodes[e].events;
    for (std::size_t k = 0; k < events.size(); ++k) {
      if (options.triggers == TriggerPolicy::LastEventPerEpisode && k + 1 != events.size()) continue;
      auto& ev = events[k];
      for (const auto& task : tasks) {
        if (task.family == TaskFamily::Diagnosis) continue;
        if (task.family == TaskFamily::Score &&
            std::none_of(ev.resources.begin(), ev.resources.end(), [](const Resource& r) { return is_pom(r); }))
          continue;
        auto v = labeler.label(task, ev.timestamp);
        if (!v) continue;
        if (task.kind() == TaskKind::Regression)
          ev.regression_labels[task.name] = v->value;
        else
          ev.classification_labels[task.name] = static_cast<std::int64_t>(v->value);
      }
    }
  }
  for (const auto& task : tasks) {
    if (task.family != TaskFamily::Diagnosis) continue;
    auto inst = diagnosis_instance(subject, task.n_poms);
    if (!inst) continue;
    // Attach to the first event at the N-th POM's timestamp.
    bool done = false;
    for (auto& ep : out.episodes) {
      for (auto& ev : ep.events)
        if (ev.timestamp == inst->last_timestamp()) {
          ev.classification_labels[task.name] = inst->has_ms ? 1 : 0;
          done = true;
          break;
        }
      if (done) break;
    }
  }
  return out;
}

inline Cohort annotate_cohort(const Cohort& cohort, const std::vector<TaskDef>& tasks, const LabelOptions& options,
                              const ScoreWeights* weights = nullptr) {
  Cohort out;
  out.reserve(cohort.size());
  for (const auto& s : cohort) out.push_back(annotate_subject(s, tasks, options, weights));
  return out;
}

}  // namespace msprog::labels
