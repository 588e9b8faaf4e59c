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
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "msprog/csv.hpp"
#include "msprog/error.hpp"
#include "msprog/labels.hpp"
#include "msprog/random.hpp"
#include "msprog/subject.hpp"

namespace msprog::features {

enum class FeatureKind { Numeric, Text };
enum class FeatureGroup { Demographics, FunctionalTests, Questionnaires, POMs, Full };

inline std::string_view to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::Demographics: return "Demographics";
    case FeatureGroup::FunctionalTests: return "FunctionalTests";
    case FeatureGroup::Questionnaires: return "Questionnaires";
    case FeatureGroup::POMs: return "POMs";
    case FeatureGroup::Full: return "Full";
  }
  return "Full";
}

inline FeatureGroup parse_group(std::string_view s) {
  for (auto g : {FeatureGroup::Demographics, FeatureGroup::FunctionalTests, FeatureGroup::Questionnaires,
                 FeatureGroup::POMs, FeatureGroup::Full})
    if (to_string(g) == s) return g;
  throw config_error("UNKNOWN_FEATURE_GROUP", "unknown feature group " + std::string(s));
}

inline const std::vector<FeatureGroup>& all_groups() {
  static const std::vector<FeatureGroup> g{FeatureGroup::Demographics, FeatureGroup::FunctionalTests,
                                           FeatureGroup::Questionnaires, FeatureGroup::POMs, FeatureGroup::Full};
  return g;
}

/// Membership of a base group in a (possibly derived) group.
inline bool group_contains(FeatureGroup group, FeatureGroup base) {
  switch (group) {
    case FeatureGroup::Full: return true;
    case FeatureGroup::POMs: return base == FeatureGroup::FunctionalTests || base == FeatureGroup::Questionnaires;
    default: return group == base;
  }
}

struct FeatureInfo {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  FeatureGroup group = FeatureGroup::Demographics;
  std::string source;    // resource name the feature is read from
  std::string category;  // resource category (functional tests)
  int text_bucket = -1;  // hashed vocabulary slot for text features

  bool operator==(const FeatureInfo&) const = default;
};

namespace demographic {
inline constexpr const char* kAge = "age";
inline constexpr const char* kSexFemale = "sex_female";
inline constexpr const char* kSexMale = "sex_male";
inline constexpr const char* kHeight = "height";
inline constexpr const char* kWeight = "weight";
}  // namespace demographic

inline constexpr int kDefaultTextVocabulary = 8;

/// Hashed vocabulary slot of a text/categorical response. Empty responses
/// (the imputed value for absent text) map to no slot.
inline int text_slot(std::string_view response, int vocabulary) {
  if (response.empty()) return -1;
  return static_cast<int>(fnv1a64(response) % static_cast<std::uint64_t>(vocabulary));
}

class FeatureSpace {
 public:
  FeatureSpace() = default;
  explicit FeatureSpace(std::vector<FeatureInfo> features, int text_vocabulary = kDefaultTextVocabulary)
      : features_(std::move(features)), text_vocabulary_(text_vocabulary) {
    reindex();
  }

  /// Demographics followed by every POM name observed in the cohort (sorted).
  /// Numeric questionnaire responses become one numeric feature; text and
  /// categorical responses become `text_vocabulary` hashed indicator features.
  static FeatureSpace from_cohort(const Cohort& cohort, int text_vocabulary = kDefaultTextVocabulary) {
    std::map<std::string, std::string> tests;  // name -> category
    std::map<std::string, std::string> numeric_q, text_q;
    for (const auto& s : cohort)
      s.for_each_event([&](const ClinicalEvent& ev) {
        for (const auto& r : ev.resources) {
          if (const auto* t = std::get_if<FunctionalTest>(&r)) tests.emplace(t->name, t->category);
          else if (const auto* q = std::get_if<Questionnaire>(&r)) {
            if (q->numeric_response) numeric_q.emplace(q->name, q->category);
            if (q->text_response || q->categorical_response) text_q.emplace(q->name, q->category);
          }
        }
      });
    std::vector<FeatureInfo> f;
    using demographic::kAge, demographic::kSexFemale, demographic::kSexMale, demographic::kHeight,
        demographic::kWeight;
    for (const char* d : {kAge, kSexFemale, kSexMale, kHeight, kWeight})
      f.push_back({d, FeatureKind::Numeric, FeatureGroup::Demographics, d, "demographics", -1});
    for (const auto& [name, cat] : tests)
      f.push_back({name, FeatureKind::Numeric, FeatureGroup::FunctionalTests, name, cat, -1});
    for (const auto& [name, cat] : numeric_q)
      f.push_back({name, FeatureKind::Numeric, FeatureGroup::Questionnaires, name, cat, -1});
    for (const auto& [name, cat] : text_q)
      for (int b = 0; b < text_vocabulary; ++b)
        f.push_back({name + "#" + std::to_string(b), FeatureKind::Text, FeatureGroup::Questionnaires, name, cat, b});
    return FeatureSpace(std::move(f), text_vocabulary);
  }

  std::size_t size() const { return features_.size(); }
  bool empty() const { return features_.empty(); }
  const std::vector<FeatureInfo>& features() const { return features_; }
  const FeatureInfo& operator[](std::size_t i) const { return features_[i]; }
  int text_vocabulary() const { return text_vocabulary_; }

  std::optional<std::size_t> index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Indices of features fed by resource `source`.
  const std::vector<std::size_t>* by_source(const std::string& source) const {
    auto it = by_source_.find(source);
    return it == by_source_.end() ? nullptr : &it->second;
  }

  FeatureSpace without(const std::function<bool(const FeatureInfo&)>& drop) const {
    std::vector<FeatureInfo> kept;
    for (const auto& f : features_)
      if (!drop(f)) kept.push_back(f);
    return FeatureSpace(std::move(kept), text_vocabulary_);
  }

  /// Stable 64-bit hash of the ordered feature list; models record it and
  /// reject inputs from a different space.
  std::string fingerprint() const {
    std::uint64_t h = fnv1a64("msprog-feature-space-v1");
    for (const auto& f : features_) {
      h = fnv1a64(f.name, h);
      h = fnv1a64("\x1f", h);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  bool operator==(const FeatureSpace& o) const { return features_ == o.features_; }

 private:
  void reindex() {
    index_.clear();
    by_source_.clear();
    for (std::size_t i = 0; i < features_.size(); ++i) {
      if (!index_.emplace(features_[i].name, i).second)
        throw config_error("DUPLICATE_FEATURE", "feature names must be unique: " + features_[i].name);
      if (features_[i].group == FeatureGroup::POMs || features_[i].group == FeatureGroup::Full)
        throw config_error("INVALID_FEATURE_GROUP", "features need a base group: " + features_[i].name);
      by_source_[features_[i].source].push_back(i);
    }
  }

  std::vector<FeatureInfo> features_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::vector<std::size_t>> by_source_;
  int text_vocabulary_ = kDefaultTextVocabulary;
};

/// Removes features that would leak the target: EDSS features for
/// EDSS-derived tasks; with `strict`, also the raw tests of a score's
/// category (all scored categories for the overall score).
inline FeatureSpace exclude_leaky_features(const FeatureSpace& space, const labels::TaskDef& task,
                                           bool strict = false) {
  using labels::TaskFamily;
  if (task.edss_derived())
    return space.without([](const FeatureInfo& f) { return labels::detail::is_edss_name(f.source); });
  if (task.family == TaskFamily::Score && strict) {
    const std::string cat(labels::to_string(task.score));
    return space.without([&](const FeatureInfo& f) {
      if (f.group != FeatureGroup::FunctionalTests) return false;
      if (task.score == labels::ScoreKind::Overall)
        return f.category == "cognitive" || f.category == "dexterity" || f.category == "mobility";
      return f.category == cat;
    });
  }
  return space;
}

// ---------------------------------------------------------------------------
// Instances

struct SubgroupAttributes {
  Sex sex = Sex::Unknown;
  std::optional<double> age;
};

struct TabularInstance {
  std::string subject_id;
  Timestamp trigger = 0;
  std::vector<double> values;    // aligned to the FeatureSpace, zero-imputed
  std::vector<std::uint8_t> mask;  // 1 where observed in the window
  double target = 0.0;
  SubgroupAttributes subgroup;
  Timestamp feature_time_max = std::numeric_limits<Timestamp>::min();
  Timestamp target_window_start = std::numeric_limits<Timestamp>::max();
};

struct SequenceInstance {
  std::string subject_id;
  Timestamp trigger = 0;
  std::size_t buckets = 0;
  std::size_t features = 0;
  std::vector<double> values;      // [buckets x features], per-bucket mean, zero-imputed
  std::vector<double> counts;      // observations per cell
  std::vector<std::uint8_t> mask;  // counts > 0
  double target = 0.0;
  SubgroupAttributes subgroup;
  Timestamp feature_time_max = std::numeric_limits<Timestamp>::min();
  Timestamp target_window_start = std::numeric_limits<Timestamp>::max();

  double value(std::size_t b, std::size_t f) const { return values[b * features + f]; }
};

enum class Mode { Tabular, Sequence };

struct FeaturizeOptions {
  // Tabular: nullopt means the full history up to the trigger.
  std::optional<Timestamp> lookback;
  // Sequence: lookback defaults to bucket_duration * default_buckets.
  Timestamp bucket_duration = seconds::kWeek;
  std::size_t default_buckets = 26;
  bool strict_leakage = false;

  Timestamp sequence_lookback() const {
    return lookback.value_or(bucket_duration * static_cast<Timestamp>(default_buckets));
  }
  std::size_t sequence_buckets() const {
    const Timestamp lb = sequence_lookback();
    return static_cast<std::size_t>((lb + bucket_duration - 1) / bucket_duration);
  }
};

struct InstanceSet {
  labels::TaskDef task;
  Mode mode = Mode::Tabular;
  FeatureSpace space;
  std::vector<TabularInstance> tabular;
  std::vector<SequenceInstance> sequence;

  std::size_t size() const { return mode == Mode::Tabular ? tabular.size() : sequence.size(); }
  const std::string& subject_id(std::size_t i) const {
    return mode == Mode::Tabular ? tabular[i].subject_id : sequence[i].subject_id;
  }
  double target(std::size_t i) const { return mode == Mode::Tabular ? tabular[i].target : sequence[i].target; }
  Timestamp trigger(std::size_t i) const { return mode == Mode::Tabular ? tabular[i].trigger : sequence[i].trigger; }
  const SubgroupAttributes& subgroup(std::size_t i) const {
    return mode == Mode::Tabular ? tabular[i].subgroup : sequence[i].subgroup;
  }
};

namespace detail {

// Adds one resource's observations to `add(feature index, value)`.
template <typename Add>
void observe(const FeatureSpace& space, const Resource& r, Add&& add) {
  const auto* name = resource_name(r);
  if (name == nullptr) return;
  const auto* idx = space.by_source(*name);
  if (idx == nullptr) return;
  if (const auto* t = std::get_if<FunctionalTest>(&r)) {
    for (auto i : *idx)
      if (space[i].kind == FeatureKind::Numeric) add(i, t->value);
    return;
  }
  const auto& q = std::get<Questionnaire>(r);
  const std::string text = q.categorical_response.value_or(q.text_response.value_or(std::string()));
  const bool has_text = q.categorical_response || q.text_response;
  const int slot = text_slot(text, space.text_vocabulary());
  for (auto i : *idx) {
    if (space[i].kind == FeatureKind::Numeric) {
      if (q.numeric_response) add(i, *q.numeric_response);
    } else if (has_text && slot >= 0) {
      add(i, space[i].text_bucket == slot ? 1.0 : 0.0);
    }
  }
}

template <typename Set>
void demographics(const FeatureSpace& space, const SubjectCharacteristics& c, Set&& set) {
  auto put = [&](const char* name, std::optional<double> v) {
    if (!v) return;
    if (auto i = space.index_of(name)) set(*i, *v);
  };
  put(demographic::kAge, c.age);
  if (c.sex != Sex::Unknown) {
    put(demographic::kSexFemale, c.sex == Sex::Female ? 1.0 : 0.0);
    put(demographic::kSexMale, c.sex == Sex::Male ? 1.0 : 0.0);
  }
  put(demographic::kHeight, c.height);
  put(demographic::kWeight, c.weight);
}

struct Source {
  Timestamp timestamp;
  const Resource* resource;
};

inline std::optional<double> label_of(const ClinicalEvent& ev, const labels::TaskDef& task) {
  if (task.kind() == labels::TaskKind::Regression) {
    auto it = ev.regression_labels.find(task.name);
    if (it == ev.regression_labels.end()) return std::nullopt;
    return it->second;
  }
  auto it = ev.classification_labels.find(task.name);
  if (it == ev.classification_labels.end()) return std::nullopt;
  return static_cast<double>(it->second);
}

}  // namespace detail

/// One instance per labeled trigger event. Features come from events with
/// timestamp in [trigger - lookback, trigger]; targets lie strictly after the
/// trigger. Diagnosis instances draw features from the first N POMs only.
inline InstanceSet build_instances(const Cohort& cohort, const labels::TaskDef& task, Mode mode,
                                   const FeatureSpace& space, const FeaturizeOptions& options = {}) {
  if (space.empty()) throw config_error("EMPTY_FEATURE_SPACE", "feature space is empty");
  InstanceSet set;
  set.task = task;
  set.mode = mode;
  set.space = space;
  const std::size_t F = space.size();
  const Timestamp seq_lookback = options.sequence_lookback();
  const std::size_t B = options.sequence_buckets();
  const Timestamp d = options.bucket_duration;
  if (mode == Mode::Sequence && (d <= 0 || seq_lookback <= 0))
    throw config_error("INVALID_FEATURIZE_OPTIONS", "sequence lookback and bucket duration must be positive");
  if (options.lookback && *options.lookback <= 0)
    throw config_error("INVALID_FEATURIZE_OPTIONS", "lookback must be positive");

  for (const auto& subject : cohort) {
    std::vector<detail::Source> sources;
    const ClinicalEvent* prev = nullptr;
    std::vector<std::pair<Timestamp, double>> triggers;  // (trigger, target)
    subject.for_each_event([&](const ClinicalEvent& ev) {
      for (const auto& r : ev.resources) sources.push_back({ev.timestamp, &r});
      if (auto y = detail::label_of(ev, task)) {
        // Same-timestamp duplicates collapse onto the first labeled event.
        if (prev == nullptr || prev->timestamp != ev.timestamp || !detail::label_of(*prev, task))
          triggers.emplace_back(ev.timestamp, *y);
      }
      prev = &ev;
    });
    SubgroupAttributes sg{subject.characteristics.sex, subject.characteristics.age};

    // Diagnosis: restrict sources to the first N POMs.
    if (task.family == labels::TaskFamily::Diagnosis) {
      std::vector<detail::Source> poms;
      for (const auto& s : sources)
        if (is_pom(*s.resource) && static_cast<int>(poms.size()) < task.n_poms) poms.push_back(s);
      sources = std::move(poms);
    }

    for (const auto& [trigger, target] : triggers) {
      const Timestamp target_start = task.family == labels::TaskFamily::Diagnosis
                                         ? std::numeric_limits<Timestamp>::max()
                                         : task.horizon.first_instant(trigger);
      const Timestamp lb = mode == Mode::Tabular ? options.lookback.value_or(-1) : seq_lookback;
      auto in_window = [&](Timestamp t) {
        if (task.family == labels::TaskFamily::Diagnosis) return t <= trigger;
        return t <= trigger && (lb < 0 || t >= trigger - lb);
      };
      if (mode == Mode::Tabular) {
        TabularInstance inst;
        inst.subject_id = subject.subject_id;
        inst.trigger = trigger;
        inst.target = target;
        inst.subgroup = sg;
        inst.target_window_start = target_start;
        std::vector<double> sum(F, 0.0), n(F, 0.0);
        for (const auto& s : sources) {
          if (!in_window(s.timestamp)) continue;
          bool used = false;
          detail::observe(space, *s.resource, [&](std::size_t i, double v) {
            sum[i] += v;
            n[i] += 1.0;
            used = true;
          });
          if (used) inst.feature_time_max = std::max(inst.feature_time_max, s.timestamp);
        }
        detail::demographics(space, subject.characteristics, [&](std::size_t i, double v) {
          sum[i] = v;
          n[i] = 1.0;
        });
        inst.values.assign(F, 0.0);
        inst.mask.assign(F, 0);
        for (std::size_t i = 0; i < F; ++i)
          if (n[i] > 0) {
            inst.values[i] = sum[i] / n[i];
            inst.mask[i] = 1;
          }
        set.tabular.push_back(std::move(inst));
      } else {
        SequenceInstance inst;
        inst.subject_id = subject.subject_id;
        inst.trigger = trigger;
        inst.target = target;
        inst.subgroup = sg;
        inst.target_window_start = target_start;
        inst.buckets = B;
        inst.features = F;
        std::vector<double> sum(B * F, 0.0);
        inst.counts.assign(B * F, 0.0);
        for (const auto& s : sources) {
          if (!in_window(s.timestamp)) continue;
          const Timestamp back = (trigger - s.timestamp) / d;
          const std::size_t b = back >= static_cast<Timestamp>(B) ? 0 : B - 1 - static_cast<std::size_t>(back);
          bool used = false;
          detail::observe(space, *s.resource, [&](std::size_t i, double v) {
            sum[b * F + i] += v;
            inst.counts[b * F + i] += 1.0;
            used = true;
          });
          if (used) inst.feature_time_max = std::max(inst.feature_time_max, s.timestamp);
        }
        detail::demographics(space, subject.characteristics, [&](std::size_t i, double v) {
          for (std::size_t b = 0; b < B; ++b) {
            sum[b * F + i] = v;
            inst.counts[b * F + i] = 1.0;
          }
        });
        inst.values.assign(B * F, 0.0);
        inst.mask.assign(B * F, 0);
        for (std::size_t k = 0; k < B * F; ++k)
          if (inst.counts[k] > 0) {
            inst.values[k] = sum[k] / inst.counts[k];
            inst.mask[k] = 1;
          }
        set.sequence.push_back(std::move(inst));
      }
      const auto& fmax = mode == Mode::Tabular ? set.tabular.back().feature_time_max : set.sequence.back().feature_time_max;
      if (!(fmax <= trigger && trigger < target_start))
        throw Error(ErrorKind::Internal, "LEAKAGE", "feature/target windows overlap for " + subject.subject_id);
    }
  }
  return set;
}

/// Zeroes and unmasks features outside `group`; shape is unchanged.
inline TabularInstance apply_feature_group_mask(TabularInstance inst, FeatureGroup group, const FeatureSpace& space) {
  for (std::size_t i = 0; i < space.size(); ++i)
    if (!group_contains(group, space[i].group)) {
      inst.values[i] = 0.0;
      inst.mask[i] = 0;
    }
  return inst;
}

inline SequenceInstance apply_feature_group_mask(SequenceInstance inst, FeatureGroup group, const FeatureSpace& space) {
  for (std::size_t i = 0; i < space.size(); ++i)
    if (!group_contains(group, space[i].group))
      for (std::size_t b = 0; b < inst.buckets; ++b) {
        inst.values[b * inst.features + i] = 0.0;
        inst.counts[b * inst.features + i] = 0.0;
        inst.mask[b * inst.features + i] = 0;
      }
  return inst;
}

inline InstanceSet apply_feature_group_mask(InstanceSet set, FeatureGroup group) {
  for (auto& t : set.tabular) t = apply_feature_group_mask(std::move(t), group, set.space);
  for (auto& s : set.sequence) s = apply_feature_group_mask(std::move(s), group, set.space);
  return set;
}

/// Count-weighted mean over buckets; equals the tabular vector built with the
/// same lookback.
inline std::vector<double> collapse(const SequenceInstance& s) {
  std::vector<double> out(s.features, 0.0);
  for (std::size_t f = 0; f < s.features; ++f) {
    double acc = 0.0, n = 0.0;
    for (std::size_t b = 0; b < s.buckets; ++b) {
      acc += s.values[b * s.features + f] * s.counts[b * s.features + f];
      n += s.counts[b * s.features + f];
    }
    if (n > 0) out[f] = acc / n;
  }
  return out;
}

inline std::string to_csv(const InstanceSet& set) {
  std::string out = "subject_id,trigger,target";
  for (const auto& f : set.space.features()) out += "," + csv::escape(f.name);
  out += "\n";
  char buf[64];
  for (const auto& inst : set.tabular) {
    out += csv::escape(inst.subject_id) + "," + std::to_string(inst.trigger);
    std::snprintf(buf, sizeof buf, ",%.17g", inst.target);
    out += buf;
    for (double v : inst.values) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace msprog::features
