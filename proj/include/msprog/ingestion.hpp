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

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "msprog/csv.hpp"
#include "msprog/error.hpp"
#include "msprog/subject.hpp"

namespace msprog::ingestion {

enum class ResourceKind { FunctionalTest, Questionnaire, Generic };
enum class ResponseKind { Numeric, Text, Categorical };
enum class TimestampFormat { Date, DateTime, EpochSeconds, Days };

struct ColumnMapping {
  std::string source;
  ResourceKind kind = ResourceKind::FunctionalTest;
  std::string name;
  std::string category;
  std::string unit;
  ResponseKind response = ResponseKind::Numeric;  // questionnaires only
};

struct EpisodeRule {
  enum class Type { PerVisit, FixedBucket } type = Type::PerVisit;
  Timestamp duration = 0;  // FixedBucket only

  static EpisodeRule per_visit() { return {}; }
  static EpisodeRule fixed_bucket(Timestamp d) { return {Type::FixedBucket, d}; }
};

struct StaticColumns {
  std::optional<std::string> sex, age, race, country, height, weight, has_ms;
};

struct AdapterMapping {
  std::string subject_id_column;
  std::string timestamp_column;
  TimestampFormat timestamp_format = TimestampFormat::Date;
  std::int64_t epoch_days = 0;  // days since 1970-01-01 that map to t = 0
  StaticColumns static_columns;
  std::vector<ColumnMapping> columns;
  EpisodeRule episode_rule;
  bool rebase_to_first_event = false;
  double max_row_failure_fraction = 0.5;

  void check() const {
    if (subject_id_column.empty() || timestamp_column.empty())
      throw config_error("INVALID_MAPPING", "subject_id_column and timestamp column are required");
    std::set<std::string> seen{subject_id_column, timestamp_column};
    for (const auto& c : columns) {
      if (!seen.insert(c.source).second)
        throw config_error("INVALID_MAPPING", "source column mapped more than once: " + c.source);
      if (c.name.empty()) throw config_error("INVALID_MAPPING", "mapped column without name: " + c.source);
    }
    if (episode_rule.type == EpisodeRule::Type::FixedBucket && episode_rule.duration <= 0)
      throw config_error("INVALID_MAPPING", "FixedBucket duration must be positive");
    if (!(max_row_failure_fraction >= 0.0 && max_row_failure_fraction <= 1.0))
      throw config_error("INVALID_MAPPING", "max_row_failure_fraction must be in [0,1]");
  }
};

// Howard Hinnant's days_from_civil.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) noexcept {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

namespace detail {

inline bool parse_int(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && std::isfinite(out);
}

// "YYYY-MM-DD" -> days since 1970-01-01.
inline std::optional<std::int64_t> parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  std::int64_t y, m, d;
  if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), m) || !parse_int(s.substr(8, 2), d))
    return std::nullopt;
  if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  return days_from_civil(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

}  // namespace detail

/// Seconds since 1970-01-01 (Date/DateTime) or as-given (EpochSeconds/Days).
inline std::optional<Timestamp> parse_timestamp(std::string_view s, TimestampFormat fmt) {
  using detail::parse_int;
  switch (fmt) {
    case TimestampFormat::Date: {
      auto d = detail::parse_date(s);
      if (!d) return std::nullopt;
      return *d * seconds::kDay;
    }
    case TimestampFormat::DateTime: {
      if (s.size() != 19 || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':')
        return std::nullopt;
      auto d = detail::parse_date(s.substr(0, 10));
      std::int64_t hh, mm, ss;
      if (!d || !parse_int(s.substr(11, 2), hh) || !parse_int(s.substr(14, 2), mm) ||
          !parse_int(s.substr(17, 2), ss))
        return std::nullopt;
      if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
      return *d * seconds::kDay + hh * 3600 + mm * 60 + ss;
    }
    case TimestampFormat::EpochSeconds: {
      std::int64_t v;
      if (!parse_int(s, v)) return std::nullopt;
      return v;
    }
    case TimestampFormat::Days: {
      double v;
      if (!detail::parse_double(s, v)) return std::nullopt;
      return static_cast<Timestamp>(std::llround(v * seconds::kDay));
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Mapping config (JSON)

inline AdapterMapping mapping_from_json(const nlohmann::json& j) {
  AdapterMapping m;
  try {
    m.subject_id_column = j.at("subject_id_column").get<std::string>();
    const auto& ts = j.at("timestamp");
    m.timestamp_column = ts.at("column").get<std::string>();
    const auto fmt = ts.value("format", std::string("date"));
    if (fmt == "date") m.timestamp_format = TimestampFormat::Date;
    else if (fmt == "datetime") m.timestamp_format = TimestampFormat::DateTime;
    else if (fmt == "epoch_seconds") m.timestamp_format = TimestampFormat::EpochSeconds;
    else if (fmt == "days") m.timestamp_format = TimestampFormat::Days;
    else throw config_error("INVALID_MAPPING", "unknown timestamp format " + fmt);
    if (ts.contains("epoch")) {
      auto d = detail::parse_date(ts.at("epoch").get<std::string>());
      if (!d) throw config_error("INVALID_MAPPING", "epoch must be YYYY-MM-DD");
      m.epoch_days = *d;
    }
    if (j.contains("static")) {
      const auto& st = j.at("static");
      auto opt = [&](const char* key) -> std::optional<std::string> {
        if (!st.contains(key)) return std::nullopt;
        return st.at(key).get<std::string>();
      };
      m.static_columns = {opt("sex"), opt("age"), opt("race"), opt("country"),
                          opt("height"), opt("weight"), opt("has_ms")};
    }
    for (const auto& c : j.at("columns")) {
      ColumnMapping cm;
      cm.source = c.at("source").get<std::string>();
      const auto kind = c.at("kind").get<std::string>();
      if (kind == "functional_test") cm.kind = ResourceKind::FunctionalTest;
      else if (kind == "questionnaire") cm.kind = ResourceKind::Questionnaire;
      else if (kind == "generic") cm.kind = ResourceKind::Generic;
      else throw config_error("INVALID_MAPPING", "unknown resource kind " + kind);
      cm.name = c.value("name", cm.source);
      cm.category = c.value("category", std::string());
      cm.unit = c.value("unit", std::string());
      const auto resp = c.value("response", std::string("numeric"));
      if (resp == "numeric") cm.response = ResponseKind::Numeric;
      else if (resp == "text") cm.response = ResponseKind::Text;
      else if (resp == "categorical") cm.response = ResponseKind::Categorical;
      else throw config_error("INVALID_MAPPING", "unknown response kind " + resp);
      m.columns.push_back(std::move(cm));
    }
    if (j.contains("episode_rule")) {
      const auto& er = j.at("episode_rule");
      const auto type = er.at("type").get<std::string>();
      if (type == "per_visit") m.episode_rule = EpisodeRule::per_visit();
      else if (type == "fixed_bucket")
        m.episode_rule = EpisodeRule::fixed_bucket(er.at("duration_seconds").get<Timestamp>());
      else throw config_error("INVALID_MAPPING", "unknown episode rule " + type);
    }
    m.rebase_to_first_event = j.value("rebase_to_first_event", false);
    m.max_row_failure_fraction = j.value("max_row_failure_fraction", 0.5);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("INVALID_MAPPING", e.what());
  }
  m.check();
  return m;
}

// ---------------------------------------------------------------------------
// Ingestion

struct RowFailure {
  std::string file;
  std::size_t row = 0;  // 1-based data row (header excluded)
  std::string code;
};

struct IngestionSummary {
  std::size_t rows_read = 0;
  std::size_t rows_mapped = 0;
  std::size_t rows_failed = 0;
  std::size_t rows_ignored = 0;  // parsed but carried no mapped value
  std::size_t resources = 0;
  std::size_t subjects = 0;
  std::vector<RowFailure> failures;

  nlohmann::json to_json() const {
    nlohmann::json j{{"rows_read", rows_read}, {"rows_mapped", rows_mapped}, {"rows_failed", rows_failed},
                     {"rows_ignored", rows_ignored}, {"resources", resources}, {"subjects", subjects}};
    std::map<std::string, std::size_t> by_code;
    for (const auto& f : failures) ++by_code[f.code];
    j["failures_by_code"] = by_code;
    return j;
  }
};

struct InputFile {
  std::string name;
  std::string contents;
};

struct IngestionResult {
  Cohort cohort;
  IngestionSummary summary;
};

namespace detail {

struct PendingSubject {
  SubjectCharacteristics characteristics;
  std::map<Timestamp, std::vector<Resource>> events;
};

inline void set_static(PendingSubject& p, const AdapterMapping& m, const csv::Table& t,
                       const std::vector<std::string>& row) {
  auto cell = [&](const std::optional<std::string>& col) -> std::optional<std::string> {
    if (!col) return std::nullopt;
    const int idx = t.column(*col);
    if (idx < 0 || static_cast<std::size_t>(idx) >= row.size() || row[idx].empty()) return std::nullopt;
    return row[idx];
  };
  auto& c = p.characteristics;
  double v;
  if (auto s = cell(m.static_columns.sex); s && c.sex == Sex::Unknown) c.sex = parse_sex(*s).value_or(Sex::Unknown);
  if (auto s = cell(m.static_columns.age); s && !c.age && parse_double(*s, v)) c.age = v;
  if (auto s = cell(m.static_columns.race); s && !c.race) c.race = *s;
  if (auto s = cell(m.static_columns.country); s && !c.country) c.country = *s;
  if (auto s = cell(m.static_columns.height); s && !c.height && parse_double(*s, v)) c.height = v;
  if (auto s = cell(m.static_columns.weight); s && !c.weight && parse_double(*s, v)) c.weight = v;
  if (auto s = cell(m.static_columns.has_ms); s && !c.has_ms)
    c.has_ms = (*s == "1" || *s == "true" || *s == "True" || *s == "yes");
}

}  // namespace detail

/// Adapts delimited tables to Subjects. Rows that share (subject, timestamp)
/// are merged into a single ClinicalEvent; events are grouped into Episodes
/// by the mapping's rule.
inline IngestionResult ingest_cohort(const std::vector<InputFile>& files, const AdapterMapping& mapping) {
  mapping.check();
  IngestionResult result;
  auto& summary = result.summary;
  std::map<std::string, detail::PendingSubject> pending;
  std::set<std::string> seen_columns;

  for (const auto& file : files) {
    const auto table = csv::parse(file.contents);
    const int id_col = table.column(mapping.subject_id_column);
    const int ts_col = table.column(mapping.timestamp_column);
    if (id_col < 0)
      throw data_error("MISSING_COLUMN", file.name + ": missing column " + mapping.subject_id_column);
    if (ts_col < 0)
      throw data_error("MISSING_COLUMN", file.name + ": missing column " + mapping.timestamp_column);
    std::vector<int> col_idx;
    for (const auto& c : mapping.columns) {
      col_idx.push_back(table.column(c.source));
      if (col_idx.back() >= 0) seen_columns.insert(c.source);
    }

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& row = table.rows[r];
      ++summary.rows_read;
      auto fail = [&](const char* code) {
        ++summary.rows_failed;
        summary.failures.push_back({file.name, r + 1, code});
      };
      auto get = [&](int idx) -> std::string_view {
        return idx >= 0 && static_cast<std::size_t>(idx) < row.size() ? std::string_view(row[idx])
                                                                        : std::string_view();
      };
      const auto id = get(id_col);
      if (id.empty()) {
        fail("MISSING_SUBJECT_ID");
        continue;
      }
      // Rows without a visit date are dropped and counted.
      auto ts = parse_timestamp(get(ts_col), mapping.timestamp_format);
      if (!ts) {
        fail("UNPARSEABLE_TIMESTAMP");
        continue;
      }
      Timestamp t = *ts - mapping.epoch_days * seconds::kDay;
      if (mapping.timestamp_format == TimestampFormat::EpochSeconds ||
          mapping.timestamp_format == TimestampFormat::Days)
        t = *ts;
      if (t < 0 && !mapping.rebase_to_first_event) {
        fail("UNPARSEABLE_TIMESTAMP");
        continue;
      }

      std::vector<Resource> resources;
      bool bad_value = false;
      for (std::size_t c = 0; c < mapping.columns.size(); ++c) {
        const auto cell = get(col_idx[c]);
        if (cell.empty()) continue;
        const auto& cm = mapping.columns[c];
        if (cm.kind == ResourceKind::FunctionalTest) {
          double v;
          if (!detail::parse_double(cell, v)) {
            bad_value = true;
            break;
          }
          resources.push_back(FunctionalTest{cm.name, cm.category, v, cm.unit});
        } else if (cm.kind == ResourceKind::Questionnaire) {
          Questionnaire q{cm.name, cm.category, std::nullopt, std::nullopt, std::nullopt};
          if (cm.response == ResponseKind::Numeric) {
            double v;
            if (!detail::parse_double(cell, v)) {
              bad_value = true;
              break;
            }
            q.numeric_response = v;
          } else if (cm.response == ResponseKind::Text) {
            q.text_response = std::string(cell);
          } else {
            q.categorical_response = std::string(cell);
          }
          resources.push_back(std::move(q));
        } else {
          resources.push_back(GenericResource{cm.name, std::string(cell)});
        }
      }
      if (bad_value) {
        fail("UNPARSEABLE_VALUE");
        continue;
      }
      auto& p = pending[std::string(id)];
      detail::set_static(p, mapping, table, row);
      if (resources.empty()) {
        ++summary.rows_ignored;
        continue;
      }
      ++summary.rows_mapped;
      summary.resources += resources.size();
      auto& slot = p.events[t];
      for (auto& res : resources) slot.push_back(std::move(res));
    }
  }

  for (const auto& c : mapping.columns)
    if (!files.empty() && !seen_columns.count(c.source))
      throw data_error("MISSING_COLUMN", "mapped column not found in any file: " + c.source);

  if (summary.rows_read > 0 &&
      static_cast<double>(summary.rows_failed) > mapping.max_row_failure_fraction * summary.rows_read) {
    throw data_error("TOO_MANY_ROW_FAILURES", std::to_string(summary.rows_failed) + " of " +
                                                  std::to_string(summary.rows_read) + " rows failed");
  }

  for (auto& [id, p] : pending) {
    if (p.events.empty()) continue;
    Subject s;
    s.subject_id = id;
    s.characteristics = p.characteristics;
    const Timestamp origin = mapping.rebase_to_first_event ? p.events.begin()->first : 0;
    std::optional<Timestamp> current_bucket;
    for (auto& [t_abs, resources] : p.events) {
      ClinicalEvent ev;
      ev.timestamp = t_abs - origin;
      ev.resources = std::move(resources);
      if (mapping.episode_rule.type == EpisodeRule::Type::PerVisit) {
        s.episodes.push_back(Episode{{std::move(ev)}});
        continue;
      }
      const Timestamp bucket = ev.timestamp / mapping.episode_rule.duration;
      if (!current_bucket || *current_bucket != bucket) {
        s.episodes.emplace_back();
        current_bucket = bucket;
      }
      s.episodes.back().events.push_back(std::move(ev));
    }
    result.cohort.push_back(std::move(s));
  }
  summary.subjects = result.cohort.size();
  return result;
}

inline ValidationOptions validation_options_for(const AdapterMapping& m) {
  ValidationOptions o;
  if (m.episode_rule.type == EpisodeRule::Type::FixedBucket) o.episode_span = m.episode_rule.duration;
  return o;
}

// ---------------------------------------------------------------------------
// Feature sparsity

struct SparsityTable {
  // (feature name, bucket index) -> number of subjects with >= 1 observation.
  std::map<std::pair<std::string, std::int64_t>, std::int64_t> counts;

  std::int64_t count(const std::string& feature, std::int64_t bucket) const {
    auto it = counts.find({feature, bucket});
    return it == counts.end() ? 0 : it->second;
  }

  std::string to_csv() const {
    std::string out = "feature,bucket_index,count\n";
    for (const auto& [key, n] : counts)
      out += csv::escape(key.first) + "," + std::to_string(key.second) + "," + std::to_string(n) + "\n";
    return out;
  }
};

inline SparsityTable compute_feature_sparsity(const Cohort& cohort, Timestamp bucket_duration) {
  if (bucket_duration <= 0) throw config_error("INVALID_ARGUMENT", "bucket_duration must be positive");
  SparsityTable table;
  for (const auto& s : cohort) {
    std::set<std::pair<std::string, std::int64_t>> observed;
    s.for_each_event([&](const ClinicalEvent& ev) {
      const std::int64_t b = ev.timestamp / bucket_duration;
      for (const auto& r : ev.resources)
        if (is_pom(r)) observed.emplace(*resource_name(r), b);
    });
    for (const auto& key : observed) ++table.counts[key];
  }
  return table;
}

}  // namespace msprog::ingestion
