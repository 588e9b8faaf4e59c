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

#include <gtest/gtest.h>

#include "msprog/csv.hpp"
#include "msprog/ingestion.hpp"
#include "msprog/io.hpp"
#include "support.hpp"

using namespace msprog;
using namespace msprog::ingestion;

namespace {

AdapterMapping basic_mapping() {
  return mapping_from_json(nlohmann::json::parse(R"({
    "subject_id_column": "id",
    "timestamp": {"column": "date", "format": "date", "epoch": "2020-01-01"},
    "static": {"sex": "sex", "age": "age"},
    "columns": [
      {"source": "walk", "kind": "functional_test", "name": "T25FW", "category": "mobility", "unit": "s"},
      {"source": "mood", "kind": "questionnaire", "name": "mood", "response": "numeric"},
      {"source": "note", "kind": "questionnaire", "name": "note", "response": "text"},
      {"source": "lab", "kind": "generic", "name": "lab"}
    ]
  })"));
}

std::string code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "none";
}

}  // namespace

TEST(Csv, QuotedFieldsAndCrlf) {
  const auto t = csv::parse("a,b\r\n\"x,1\",\"say \"\"hi\"\"\"\r\n3,\n");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][0], "x,1");
  EXPECT_EQ(t.rows[0][1], "say \"hi\"");
  EXPECT_EQ(t.rows[1][1], "");
  EXPECT_EQ(t.column("b"), 1);
  EXPECT_EQ(t.column("c"), -1);
  EXPECT_EQ(csv::escape("a,b"), "\"a,b\"");
}

TEST(Timestamps, Formats) {
  EXPECT_EQ(parse_timestamp("1970-01-02", TimestampFormat::Date), 86400);
  EXPECT_EQ(parse_timestamp("2000-03-01", TimestampFormat::Date), days_from_civil(2000, 3, 1) * 86400);
  EXPECT_EQ(days_from_civil(2000, 3, 1) - days_from_civil(2000, 2, 28), 2);  // leap year
  EXPECT_EQ(parse_timestamp("1970-01-01T01:02:03", TimestampFormat::DateTime), 3723);
  EXPECT_EQ(parse_timestamp("123", TimestampFormat::EpochSeconds), 123);
  EXPECT_EQ(parse_timestamp("1.5", TimestampFormat::Days), 129600);
  EXPECT_FALSE(parse_timestamp("2020-13-01", TimestampFormat::Date));
  EXPECT_FALSE(parse_timestamp("", TimestampFormat::Date));
  EXPECT_FALSE(parse_timestamp("x", TimestampFormat::EpochSeconds));
}

TEST(Ingestion, MergesRowsAndMapsResources) {
  const std::string data =
      "id,sex,age,date,walk,mood,note,lab\n"
      "A,F,34,2020-01-01,5.5,,,\n"
      "A,,,2020-01-01,,3,,\n"
      "A,,,2020-01-10,6.0,,tired,L1\n"
      "B,M,50,2020-02-01,7.0,,,\n";
  const auto res = ingest_cohort({{"f.csv", data}}, basic_mapping());
  ASSERT_EQ(res.cohort.size(), 2u);
  const auto& a = res.cohort[0];
  EXPECT_EQ(a.subject_id, "A");
  EXPECT_EQ(a.characteristics.sex, Sex::Female);
  EXPECT_EQ(a.characteristics.age, 34.0);
  ASSERT_EQ(a.episodes.size(), 2u);  // per visit
  EXPECT_EQ(a.episodes[0].events[0].timestamp, 0);
  EXPECT_EQ(a.episodes[0].events[0].resources.size(), 2u);
  EXPECT_EQ(a.episodes[1].events[0].timestamp, 9 * 86400);
  EXPECT_EQ(a.episodes[1].events[0].resources.size(), 3u);
  const auto& q = std::get<Questionnaire>(a.episodes[1].events[0].resources[1]);
  EXPECT_EQ(q.text_response, "tired");
  EXPECT_TRUE(std::holds_alternative<GenericResource>(a.episodes[1].events[0].resources[2]));
  EXPECT_EQ(res.summary.rows_read, 4u);
  EXPECT_EQ(res.summary.rows_mapped, 4u);
  EXPECT_EQ(res.summary.resources, 6u);
  EXPECT_TRUE(validate_cohort(res.cohort).ok());
}

TEST(Ingestion, FailedRowsAreCounted) {
  const std::string data =
      "id,sex,age,date,walk,mood,note,lab\n"
      "A,F,34,2020-01-01,5.5,,,\n"
      "A,F,34,,5.5,,,\n"
      ",F,34,2020-01-02,5.5,,,\n"
      "A,F,34,2020-01-03,abc,,,\n"
      "A,F,34,2020-01-04,,,,\n";
  auto m = basic_mapping();
  m.max_row_failure_fraction = 0.9;
  const auto res = ingest_cohort({{"f.csv", data}}, m);
  EXPECT_EQ(res.summary.rows_failed, 3u);
  EXPECT_EQ(res.summary.rows_ignored, 1u);
  ASSERT_EQ(res.summary.failures.size(), 3u);
  EXPECT_EQ(res.summary.failures[0].code, "UNPARSEABLE_TIMESTAMP");
  EXPECT_EQ(res.summary.failures[0].row, 2u);
  EXPECT_EQ(res.summary.failures[1].code, "MISSING_SUBJECT_ID");
  EXPECT_EQ(res.summary.failures[2].code, "UNPARSEABLE_VALUE");
  const auto j = res.summary.to_json();
  EXPECT_EQ(j["failures_by_code"]["UNPARSEABLE_TIMESTAMP"], 1);
}

TEST(Ingestion, TooManyFailures) {
  const std::string data = "id,sex,age,date,walk,mood,note,lab\nA,F,1,bad,1,,,\nA,F,1,bad,1,,,\nA,F,1,2020-01-01,1,,,\n";
  EXPECT_EQ(code_of([&] { ingest_cohort({{"f.csv", data}}, basic_mapping()); }), "TOO_MANY_ROW_FAILURES");
}

TEST(Ingestion, MissingColumns) {
  EXPECT_EQ(code_of([&] { ingest_cohort({{"f.csv", "x,date\n1,2020-01-01\n"}}, basic_mapping()); }), "MISSING_COLUMN");
  EXPECT_EQ(code_of([&] { ingest_cohort({{"f.csv", "id,date,walk\nA,2020-01-01,1\n"}}, basic_mapping()); }),
            "MISSING_COLUMN");
}

TEST(Ingestion, ColumnsMaySpanFiles) {
  const auto res = ingest_cohort({{"a.csv", "id,date,walk,mood\nA,2020-01-01,1,\n"},
                                  {"b.csv", "id,date,note,lab\nA,2020-01-01,ok,z\n"}},
                                 basic_mapping());
  ASSERT_EQ(res.cohort.size(), 1u);
  EXPECT_EQ(res.cohort[0].episodes[0].events[0].resources.size(), 3u);
}

TEST(Ingestion, FixedBucketEpisodes) {
  auto m = mapping_from_json(nlohmann::json::parse(R"({
    "subject_id_column": "id",
    "timestamp": {"column": "t", "format": "epoch_seconds"},
    "columns": [{"source": "v", "kind": "functional_test", "name": "tap"}],
    "episode_rule": {"type": "fixed_bucket", "duration_seconds": 86400}
  })"));
  const auto res = ingest_cohort({{"f.csv", "id,t,v\nA,10,1\nA,3600,2\nA,86400,3\nA,90000,4\nA,300000,5\n"}}, m);
  ASSERT_EQ(res.cohort.size(), 1u);
  const auto& s = res.cohort[0];
  ASSERT_EQ(s.episodes.size(), 3u);
  EXPECT_EQ(s.episodes[0].events.size(), 2u);
  EXPECT_EQ(s.episodes[1].events.size(), 2u);
  EXPECT_EQ(s.episodes[2].events.size(), 1u);
  EXPECT_TRUE(validate_cohort(res.cohort, validation_options_for(m)).ok());
}

TEST(Ingestion, RebaseToFirstEvent) {
  auto m = basic_mapping();
  m.rebase_to_first_event = true;
  const auto res = ingest_cohort({{"f.csv", "id,date,walk,mood,note,lab\nA,2021-05-01,1,,,\nA,2021-05-03,2,,,\n"}}, m);
  EXPECT_EQ(res.cohort[0].episodes[0].events[0].timestamp, 0);
  EXPECT_EQ(res.cohort[0].episodes[1].events[0].timestamp, 2 * 86400);
}

TEST(Mapping, InvalidConfigs) {
  EXPECT_EQ(code_of([] { mapping_from_json(nlohmann::json::parse("{}")); }), "INVALID_MAPPING");
  EXPECT_EQ(code_of([] {
              mapping_from_json(nlohmann::json::parse(R"({"subject_id_column":"id","timestamp":{"column":"t"},
                "columns":[{"source":"a","kind":"functional_test"},{"source":"a","kind":"functional_test"}]})"));
            }),
            "INVALID_MAPPING");
  EXPECT_EQ(code_of([] {
              mapping_from_json(nlohmann::json::parse(R"({"subject_id_column":"id","timestamp":{"column":"t"},
                "columns":[{"source":"a","kind":"weird"}]})"));
            }),
            "INVALID_MAPPING");
  EXPECT_EQ(code_of([] {
              mapping_from_json(nlohmann::json::parse(R"({"subject_id_column":"id","timestamp":{"column":"t"},
                "columns":[], "episode_rule": {"type":"fixed_bucket","duration_seconds":0}})"));
            }),
            "INVALID_MAPPING");
}

TEST(Sparsity, CountsSubjectsPerBucket) {
  using namespace msprog::testing;
  Cohort c{subject("A", {event(0, {test("x", 1)}), event(10, {test("x", 2)}), event(700000, {test("y", 1)})}),
           subject("B", {event(5, {test("x", 1), GenericResource{"g", ""}})})};
  const auto t = compute_feature_sparsity(c, seconds::kWeek);
  EXPECT_EQ(t.count("x", 0), 2);
  EXPECT_EQ(t.count("y", 1), 1);
  EXPECT_EQ(t.count("g", 0), 0);
  EXPECT_EQ(t.count("x", 1), 0);
  EXPECT_EQ(t.to_csv().substr(0, 26), "feature,bucket_index,count");
  EXPECT_EQ(code_of([&] { compute_feature_sparsity(c, 0); }), "INVALID_ARGUMENT");
}

TEST(Sparsity, ShippedSampleIngests) {
  const std::string dir = MSPROG_SOURCE_DIR;
  const auto m = mapping_from_json(io::read_json(dir + "/configs/mapping_clinic.json"));
  const auto res = ingest_cohort({{"clinic_visits.csv", io::read_file(dir + "/data/clinic_visits.csv")}}, m);
  EXPECT_EQ(res.cohort.size(), 24u);
  EXPECT_EQ(res.summary.rows_failed, 1u);
  EXPECT_TRUE(validate_cohort(res.cohort, validation_options_for(m)).ok());
}
