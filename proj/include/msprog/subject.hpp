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

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "msprog/error.hpp"

namespace msprog {

using Timestamp = std::int64_t;  // seconds since the cohort epoch

namespace seconds {
inline constexpr Timestamp kHour = 3600;
inline constexpr Timestamp kDay = 86400;
inline constexpr Timestamp kWeek = 7 * kDay;
inline constexpr Timestamp kMonth = 2629800;  // 365.25 / 12 days
inline constexpr Timestamp kYear = 12 * kMonth;
}  // namespace seconds

enum class Sex { Female, Male, Unknown };

inline std::string_view to_string(Sex s) {
  switch (s) {
    case Sex::Female: return "Female";
    case Sex::Male: return "Male";
    case Sex::Unknown: return "Unknown";
  }
  return "Unknown";
}

inline std::optional<Sex> parse_sex(std::string_view s) {
  if (s == "Female" || s == "female" || s == "F" || s == "f") return Sex::Female;
  if (s == "Male" || s == "male" || s == "M" || s == "m") return Sex::Male;
  if (s == "Unknown" || s == "unknown" || s == "U" || s.empty()) return Sex::Unknown;
  return std::nullopt;
}

struct SubjectCharacteristics {
  Sex sex = Sex::Unknown;
  std::optional<double> age;        // years at enrollment
  std::optional<std::string> race;
  std::optional<std::string> country;
  std::optional<double> height;     // cm
  std::optional<double> weight;     // kg
  std::optional<bool> has_ms;       // smartphone cohorts with controls only

  bool operator==(const SubjectCharacteristics&) const = default;
};

struct FunctionalTest {
  std::string name;
  std::string category;
  double value = 0.0;
  std::string unit;

  bool operator==(const FunctionalTest&) const = default;
};

struct Questionnaire {
  std::string name;
  std::string category;
  std::optional<std::string> text_response;
  std::optional<double> numeric_response;
  std::optional<std::string> categorical_response;

  bool operator==(const Questionnaire&) const = default;
};

// Opaque storage for medical history, trial metadata, medications, gender.
struct GenericResource {
  std::string key;
  std::string payload;

  bool operator==(const GenericResource&) const = default;
};

using Resource = std::variant<FunctionalTest, Questionnaire, GenericResource>;

/// True for functional tests and questionnaires (performance outcome measures).
inline bool is_pom(const Resource& r) { return !std::holds_alternative<GenericResource>(r); }

inline const std::string* resource_name(const Resource& r) {
  if (const auto* t = std::get_if<FunctionalTest>(&r)) return &t->name;
  if (const auto* q = std::get_if<Questionnaire>(&r)) return &q->name;
  return nullptr;
}

struct ClinicalEvent {
  Timestamp timestamp = 0;
  std::vector<Resource> resources;
  // Attached by the labeling stage; empty otherwise.
  std::map<std::string, std::int64_t> classification_labels;
  std::map<std::string, double> regression_labels;

  bool operator==(const ClinicalEvent&) const = default;
};

struct Episode {
  std::vector<ClinicalEvent> events;

  Timestamp start() const { return events.empty() ? 0 : events.front().timestamp; }
  Timestamp end() const { return events.empty() ? 0 : events.back().timestamp; }

  bool operator==(const Episode&) const = default;
};

struct Subject {
  std::string subject_id;
  SubjectCharacteristics characteristics;
  std::vector<Episode> episodes;

  bool operator==(const Subject&) const = default;

  template <typename Fn>
  void for_each_event(Fn&& fn) const {
    for (const auto& ep : episodes)
      for (const auto& ev : ep.events) fn(ev);
  }

  template <typename Fn>
  void for_each_event(Fn&& fn) {
    for (auto& ep : episodes)
      for (auto& ev : ep.events) fn(ev);
  }

  std::size_t event_count() const {
    std::size_t n = 0;
    for (const auto& ep : episodes) n += ep.events.size();
    return n;
  }
};

using Cohort = std::vector<Subject>;

// ---------------------------------------------------------------------------
// Validation

namespace violation {
inline constexpr std::string_view kEmptySubjectId = "EMPTY_SUBJECT_ID";
inline constexpr std::string_view kDuplicateSubjectId = "DUPLICATE_SUBJECT_ID";
inline constexpr std::string_view kAgeOutOfRange = "AGE_OUT_OF_RANGE";
inline constexpr std::string_view kHeightOutOfRange = "HEIGHT_OUT_OF_RANGE";
inline constexpr std::string_view kWeightOutOfRange = "WEIGHT_OUT_OF_RANGE";
inline constexpr std::string_view kEmptyEpisode = "EMPTY_EPISODE";
inline constexpr std::string_view kUnsortedEpisodes = "UNSORTED_EPISODES";
inline constexpr std::string_view kDuplicateEpisodeTime = "DUPLICATE_EPISODE_TIME";
inline constexpr std::string_view kEpisodeOverlap = "EPISODE_OVERLAP";
inline constexpr std::string_view kUnsortedEvents = "UNSORTED_EVENTS";
inline constexpr std::string_view kEpisodeSpanExceeded = "EPISODE_SPAN_EXCEEDED";
inline constexpr std::string_view kNegativeTimestamp = "NEGATIVE_TIMESTAMP";
inline constexpr std::string_view kEmptyEvent = "EMPTY_EVENT";
inline constexpr std::string_view kNonfiniteValue = "NONFINITE_VALUE";
inline constexpr std::string_view kEmptyTestName = "EMPTY_TEST_NAME";
inline constexpr std::string_view kEmptyQuestionnaireResponse = "EMPTY_QUESTIONNAIRE_RESPONSE";
}  // namespace violation

struct Violation {
  std::string code;
  std::string path;

  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(std::string_view code) const {
    for (const auto& v : violations)
      if (v.code == code) return true;
    return false;
  }
  void add(std::string_view code, std::string path) {
    violations.push_back({std::string(code), std::move(path)});
  }
};

struct ValidationOptions {
  // When set, every episode must satisfy last_event - first_event < span.
  std::optional<Timestamp> episode_span;
};

inline ValidationReport validate_subject(const Subject& s, const ValidationOptions& opts = {}) {
  namespace v = violation;
  ValidationReport report;
  if (s.subject_id.empty()) report.add(v::kEmptySubjectId, "subject_id");

  const auto& c = s.characteristics;
  auto out_of = [](const std::optional<double>& x, double lo, double hi, bool lo_open) {
    if (!x) return false;
    if (!std::isfinite(*x)) return true;
    return lo_open ? !(*x > lo && *x <= hi) : !(*x >= lo && *x <= hi);
  };
  if (out_of(c.age, 0.0, 120.0, false)) report.add(v::kAgeOutOfRange, "characteristics.age");
  if (out_of(c.height, 0.0, 272.0, true)) report.add(v::kHeightOutOfRange, "characteristics.height");
  if (out_of(c.weight, 0.0, 650.0, true)) report.add(v::kWeightOutOfRange, "characteristics.weight");

  for (std::size_t e = 0; e < s.episodes.size(); ++e) {
    const auto& ep = s.episodes[e];
    const std::string ep_path = "episodes[" + std::to_string(e) + "]";
    if (ep.events.empty()) {
      report.add(v::kEmptyEpisode, ep_path);
      continue;
    }
    if (e > 0 && !s.episodes[e - 1].events.empty()) {
      const auto& prev = s.episodes[e - 1];
      if (prev.start() == ep.start())
        report.add(v::kDuplicateEpisodeTime, ep_path);
      else if (prev.start() > ep.start())
        report.add(v::kUnsortedEpisodes, ep_path);
      else if (prev.end() > ep.start())
        report.add(v::kEpisodeOverlap, ep_path);
    }
    if (opts.episode_span && ep.end() - ep.start() >= *opts.episode_span)
      report.add(v::kEpisodeSpanExceeded, ep_path);

    for (std::size_t k = 0; k < ep.events.size(); ++k) {
      const auto& ev = ep.events[k];
      const std::string ev_path = ep_path + ".events[" + std::to_string(k) + "]";
      if (ev.timestamp < 0) report.add(v::kNegativeTimestamp, ev_path + ".timestamp");
      if (k > 0 && ep.events[k - 1].timestamp > ev.timestamp)
        report.add(v::kUnsortedEvents, ev_path);
      if (ev.resources.empty()) report.add(v::kEmptyEvent, ev_path);
      for (std::size_t r = 0; r < ev.resources.size(); ++r) {
        const std::string r_path = ev_path + ".resources[" + std::to_string(r) + "]";
        if (const auto* t = std::get_if<FunctionalTest>(&ev.resources[r])) {
          if (t->name.empty()) report.add(v::kEmptyTestName, r_path + ".name");
          if (!std::isfinite(t->value)) report.add(v::kNonfiniteValue, r_path + ".value");
        } else if (const auto* q = std::get_if<Questionnaire>(&ev.resources[r])) {
          if (!q->text_response && !q->numeric_response && !q->categorical_response)
            report.add(v::kEmptyQuestionnaireResponse, r_path);
          if (q->numeric_response && !std::isfinite(*q->numeric_response))
            report.add(v::kNonfiniteValue, r_path + ".numeric_response");
        }
      }
      for (const auto& [name, value] : ev.regression_labels)
        if (!std::isfinite(value))
          report.add(v::kNonfiniteValue, ev_path + ".regression_labels." + name);
    }
  }
  return report;
}

/// Validates each subject and subject_id uniqueness across the cohort.
inline ValidationReport validate_cohort(const Cohort& cohort, const ValidationOptions& opts = {}) {
  ValidationReport report;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const std::string prefix = "subjects[" + std::to_string(i) + "].";
    if (!seen.insert(cohort[i].subject_id).second)
      report.add(violation::kDuplicateSubjectId, prefix + "subject_id");
    for (auto& v : validate_subject(cohort[i], opts).violations)
      report.add(v.code, prefix + v.path);
  }
  return report;
}

class InvalidSubjectError : public Error {
 public:
  explicit InvalidSubjectError(ValidationReport report)
      : Error(ErrorKind::Data, "INVALID_SUBJECT", describe(report)), report_(std::move(report)) {}

  const ValidationReport& report() const noexcept { return report_; }

 private:
  static std::string describe(const ValidationReport& r) {
    std::string msg = "subject failed validation:";
    for (const auto& v : r.violations) msg += " " + v.code + "@" + v.path;
    return msg;
  }
  ValidationReport report_;
};

// ---------------------------------------------------------------------------
// JSONL codec, schema version 1

inline constexpr int kSubjectSchemaVersion = 1;

namespace detail {

inline nlohmann::json encode_resource(const Resource& r) {
  nlohmann::json j;
  if (const auto* t = std::get_if<FunctionalTest>(&r)) {
    j["kind"] = "functional_test";
    j["name"] = t->name;
    j["category"] = t->category;
    j["value"] = t->value;
    j["unit"] = t->unit;
  } else if (const auto* q = std::get_if<Questionnaire>(&r)) {
    j["kind"] = "questionnaire";
    j["name"] = q->name;
    j["category"] = q->category;
    if (q->text_response) j["text_response"] = *q->text_response;
    if (q->numeric_response) j["numeric_response"] = *q->numeric_response;
    if (q->categorical_response) j["categorical_response"] = *q->categorical_response;
  } else {
    const auto& g = std::get<GenericResource>(r);
    j["kind"] = "generic";
    j["key"] = g.key;
    j["payload"] = g.payload;
  }
  return j;
}

[[noreturn]] inline void malformed(const std::string& what, std::size_t offset = 0) {
  throw data_error("MALFORMED_RECORD", what + " (byte offset " + std::to_string(offset) + ")");
}

template <typename T>
T require(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) malformed(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    malformed(std::string("bad type for field '") + key + "'");
  }
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    malformed(std::string("bad type for field '") + key + "'");
  }
}

inline Resource decode_resource(const nlohmann::json& j) {
  if (!j.is_object()) malformed("resource is not an object");
  const auto kind = require<std::string>(j, "kind");
  if (kind == "functional_test") {
    return FunctionalTest{require<std::string>(j, "name"), require<std::string>(j, "category"),
                          require<double>(j, "value"), require<std::string>(j, "unit")};
  }
  if (kind == "questionnaire") {
    return Questionnaire{require<std::string>(j, "name"), require<std::string>(j, "category"),
                         optional_field<std::string>(j, "text_response"),
                         optional_field<double>(j, "numeric_response"),
                         optional_field<std::string>(j, "categorical_response")};
  }
  if (kind == "generic") {
    return GenericResource{require<std::string>(j, "key"), require<std::string>(j, "payload")};
  }
  malformed("unknown resource kind '" + kind + "'");
}

}  // namespace detail

inline nlohmann::json subject_to_json(const Subject& s) {
  nlohmann::json j;
  j["v"] = kSubjectSchemaVersion;
  j["subject_id"] = s.subject_id;
  const auto& c = s.characteristics;
  nlohmann::json ch;
  ch["sex"] = std::string(to_string(c.sex));
  if (c.age) ch["age"] = *c.age;
  if (c.race) ch["race"] = *c.race;
  if (c.country) ch["country"] = *c.country;
  if (c.height) ch["height"] = *c.height;
  if (c.weight) ch["weight"] = *c.weight;
  if (c.has_ms) ch["has_ms"] = *c.has_ms;
  j["characteristics"] = std::move(ch);
  nlohmann::json episodes = nlohmann::json::array();
  for (const auto& ep : s.episodes) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : ep.events) {
      nlohmann::json je;
      je["timestamp"] = ev.timestamp;
      nlohmann::json res = nlohmann::json::array();
      for (const auto& r : ev.resources) res.push_back(detail::encode_resource(r));
      je["resources"] = std::move(res);
      if (!ev.classification_labels.empty()) je["classification_labels"] = ev.classification_labels;
      if (!ev.regression_labels.empty()) je["regression_labels"] = ev.regression_labels;
      events.push_back(std::move(je));
    }
    episodes.push_back({{"events", std::move(events)}});
  }
  j["episodes"] = std::move(episodes);
  return j;
}

/// One JSONL line (no trailing newline). Keys are emitted in sorted order, so
/// output bytes are a pure function of the subject.
inline std::string encode_subject(const Subject& s) {
  auto report = validate_subject(s);
  if (!report.ok()) throw InvalidSubjectError(std::move(report));
  return subject_to_json(s).dump();
}

inline Subject subject_from_json(const nlohmann::json& j) {
  using detail::malformed;
  if (!j.is_object()) malformed("record is not an object");
  auto v = j.find("v");
  if (v == j.end() || !v->is_number_integer() || v->get<int>() != kSubjectSchemaVersion) {
    throw data_error("SCHEMA_VERSION_MISMATCH",
                     "expected schema version " + std::to_string(kSubjectSchemaVersion) + ", got " +
                         (v == j.end() ? std::string("none") : v->dump()));
  }
  Subject s;
  s.subject_id = detail::require<std::string>(j, "subject_id");
  auto ch_it = j.find("characteristics");
  if (ch_it == j.end() || !ch_it->is_object()) malformed("missing characteristics");
  const auto& ch = *ch_it;
  const auto sex = parse_sex(detail::require<std::string>(ch, "sex"));
  if (!sex) malformed("unknown sex value");
  s.characteristics.sex = *sex;
  s.characteristics.age = detail::optional_field<double>(ch, "age");
  s.characteristics.race = detail::optional_field<std::string>(ch, "race");
  s.characteristics.country = detail::optional_field<std::string>(ch, "country");
  s.characteristics.height = detail::optional_field<double>(ch, "height");
  s.characteristics.weight = detail::optional_field<double>(ch, "weight");
  s.characteristics.has_ms = detail::optional_field<bool>(ch, "has_ms");

  auto eps = j.find("episodes");
  if (eps == j.end() || !eps->is_array()) malformed("missing episodes array");
  for (const auto& jep : *eps) {
    if (!jep.is_object()) malformed("episode is not an object");
    auto evs = jep.find("events");
    if (evs == jep.end() || !evs->is_array()) malformed("episode without events array");
    Episode ep;
    for (const auto& jev : *evs) {
      if (!jev.is_object()) malformed("event is not an object");
      ClinicalEvent ev;
      ev.timestamp = detail::require<Timestamp>(jev, "timestamp");
      auto res = jev.find("resources");
      if (res == jev.end() || !res->is_array()) malformed("event without resources array");
      for (const auto& jr : *res) ev.resources.push_back(detail::decode_resource(jr));
      if (auto cl = detail::optional_field<std::map<std::string, std::int64_t>>(jev, "classification_labels"))
        ev.classification_labels = std::move(*cl);
      if (auto rl = detail::optional_field<std::map<std::string, double>>(jev, "regression_labels"))
        ev.regression_labels = std::move(*rl);
      ep.events.push_back(std::move(ev));
    }
    s.episodes.push_back(std::move(ep));
  }
  return s;
}

inline Subject decode_subject(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    detail::malformed(e.what(), e.byte);
  }
  return subject_from_json(j);
}

}  // namespace msprog
