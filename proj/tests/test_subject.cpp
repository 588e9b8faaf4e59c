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

#include <cmath>

#include "msprog/io.hpp"
#include "msprog/subject.hpp"
#include "support.hpp"

using namespace msprog;
using namespace msprog::testing;

namespace {

Subject valid_subject() {
  Subject s = subject("P1", {event(0, {test("T25FW", 5.0)}), event(100, {numeric_q("MSWS12", 30.0)}),
                             event(200, {text_q("notes", "fatigue"), GenericResource{"lab", "x"}})});
  s.characteristics.height = 170.0;
  s.characteristics.weight = 70.0;
  s.characteristics.race = "unknown";
  s.characteristics.has_ms = true;
  s.episodes[0].events[0].classification_labels["edss_gt3@0-6mo"] = 1;
  s.episodes[0].events[0].regression_labels["edss_mean@0-6mo"] = 3.5;
  return s;
}

}  // namespace

TEST(SubjectValidation, ValidSubjectPasses) { EXPECT_TRUE(validate_subject(valid_subject()).ok()); }

TEST(SubjectValidation, EmptyIdAndRanges) {
  auto s = valid_subject();
  s.subject_id.clear();
  s.characteristics.age = 130.0;
  s.characteristics.height = 0.0;
  s.characteristics.weight = 700.0;
  const auto r = validate_subject(s);
  EXPECT_TRUE(r.has(violation::kEmptySubjectId));
  EXPECT_TRUE(r.has(violation::kAgeOutOfRange));
  EXPECT_TRUE(r.has(violation::kHeightOutOfRange));
  EXPECT_TRUE(r.has(violation::kWeightOutOfRange));
}

TEST(SubjectValidation, AgeBoundsAreInclusive) {
  auto s = valid_subject();
  s.characteristics.age = 0.0;
  EXPECT_TRUE(validate_subject(s).ok());
  s.characteristics.age = 120.0;
  EXPECT_TRUE(validate_subject(s).ok());
}

TEST(SubjectValidation, EpisodeOrdering) {
  auto s = valid_subject();
  std::swap(s.episodes[0], s.episodes[1]);
  EXPECT_TRUE(validate_subject(s).has(violation::kUnsortedEpisodes));

  s = valid_subject();
  s.episodes[1].events[0].timestamp = 0;
  EXPECT_TRUE(validate_subject(s).has(violation::kDuplicateEpisodeTime));

  s = valid_subject();
  s.episodes[0].events.push_back(event(150, {test("T25FW", 5.0)}));
  EXPECT_TRUE(validate_subject(s).has(violation::kEpisodeOverlap));
}

TEST(SubjectValidation, EventsAndResources) {
  auto s = valid_subject();
  s.episodes[0].events.push_back(event(-5, {}));
  const auto r = validate_subject(s);
  EXPECT_TRUE(r.has(violation::kUnsortedEvents));
  EXPECT_TRUE(r.has(violation::kNegativeTimestamp));
  EXPECT_TRUE(r.has(violation::kEmptyEvent));

  s = valid_subject();
  s.episodes[0].events[0].resources.push_back(test("", std::nan("")));
  s.episodes[0].events[0].resources.push_back(Questionnaire{"q", "c", std::nullopt, std::nullopt, std::nullopt});
  const auto r2 = validate_subject(s);
  EXPECT_TRUE(r2.has(violation::kEmptyTestName));
  EXPECT_TRUE(r2.has(violation::kNonfiniteValue));
  EXPECT_TRUE(r2.has(violation::kEmptyQuestionnaireResponse));

  s = valid_subject();
  s.episodes.push_back(Episode{});
  EXPECT_TRUE(validate_subject(s).has(violation::kEmptyEpisode));
}

TEST(SubjectValidation, EpisodeSpan) {
  Subject s = subject("P", {});
  s.episodes.push_back(Episode{{event(0, {test("a", 1)}), event(86400, {test("a", 1)})}});
  ValidationOptions o;
  o.episode_span = 86400;
  EXPECT_TRUE(validate_subject(s, o).has(violation::kEpisodeSpanExceeded));
  o.episode_span = 86401;
  EXPECT_TRUE(validate_subject(s, o).ok());
}

TEST(SubjectValidation, DuplicateIdsInCohort) {
  Cohort c{valid_subject(), valid_subject()};
  EXPECT_TRUE(validate_cohort(c).has(violation::kDuplicateSubjectId));
}

TEST(SubjectCodec, RoundTrip) {
  const auto s = valid_subject();
  const auto line = encode_subject(s);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const auto back = decode_subject(line);
  EXPECT_EQ(back, s);
  EXPECT_EQ(encode_subject(back), line);
}

TEST(SubjectCodec, CohortRoundTrip) {
  Cohort c{valid_subject()};
  auto s2 = valid_subject();
  s2.subject_id = "P2";
  s2.characteristics = {};
  c.push_back(s2);
  const auto text = io::encode_cohort(c);
  EXPECT_EQ(io::decode_cohort(text), c);
}

TEST(SubjectCodec, EncodeRejectsInvalid) {
  auto s = valid_subject();
  s.subject_id.clear();
  try {
    encode_subject(s);
    FAIL();
  } catch (const InvalidSubjectError& e) {
    EXPECT_EQ(e.code(), "INVALID_SUBJECT");
    EXPECT_EQ(e.kind(), ErrorKind::Data);
    EXPECT_TRUE(e.report().has(violation::kEmptySubjectId));
  }
}

TEST(SubjectCodec, MalformedAndVersion) {
  auto code_of = [](const std::string& line) {
    try {
      decode_subject(line);
    } catch (const Error& e) {
      return e.code();
    }
    return std::string("none");
  };
  EXPECT_EQ(code_of("{not json"), "MALFORMED_RECORD");
  EXPECT_EQ(code_of("[1,2]"), "MALFORMED_RECORD");
  auto j = nlohmann::json::parse(encode_subject(valid_subject()));
  j["v"] = 2;
  EXPECT_EQ(code_of(j.dump()), "SCHEMA_VERSION_MISMATCH");
  j.erase("v");
  EXPECT_EQ(code_of(j.dump()), "SCHEMA_VERSION_MISMATCH");
  j["v"] = 1;
  j.erase("subject_id");
  EXPECT_EQ(code_of(j.dump()), "MALFORMED_RECORD");
}

TEST(SubjectCodec, DecodeCohortReportsLine) {
  const auto good = encode_subject(valid_subject());
  try {
    io::decode_cohort(good + "\n{bad\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "MALFORMED_RECORD");
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(ErrorKinds, ExitCodes) {
  EXPECT_EQ(exit_code_for(ErrorKind::Config), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::Data), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::Internal), 4);
}
