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
#include "msprog/labels.hpp"
#include "msprog/synth.hpp"

using namespace msprog;
using namespace msprog::synth;

namespace {

GeneratorConfig clinic(std::size_t n, std::uint64_t seed = 1) {
  GeneratorConfig c;
  c.n_subjects = n;
  c.seed = seed;
  return c;
}

GeneratorConfig phone(std::size_t n, std::uint64_t seed = 1) {
  auto c = clinic(n, seed);
  c.style = Style::Smartphone;
  return c;
}

}  // namespace

TEST(Synth, DeterministicBytes) {
  EXPECT_EQ(io::encode_cohort(generate_cohort(clinic(30, 4))), io::encode_cohort(generate_cohort(clinic(30, 4))));
  EXPECT_EQ(io::encode_cohort(generate_cohort(phone(10, 4))), io::encode_cohort(generate_cohort(phone(10, 4))));
  EXPECT_NE(io::encode_cohort(generate_cohort(clinic(30, 4))), io::encode_cohort(generate_cohort(clinic(30, 5))));
}

TEST(Synth, SubjectsIndependentOfCohortSize) {
  // Subject i's stream depends only on (seed, i); ids are zero-padded to the cohort width.
  const auto a = generate_cohort(clinic(5, 2));
  const auto b = generate_cohort(clinic(8, 2));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a[i].episodes, b[i].episodes);
}

TEST(Synth, OutputsValidate) {
  EXPECT_TRUE(validate_cohort(generate_cohort(clinic(50))).ok());
  ValidationOptions day;
  day.episode_span = seconds::kDay;
  EXPECT_TRUE(validate_cohort(generate_cohort(phone(20)), day).ok());
}

TEST(Synth, EdssOnHalfGrid) {
  for (const auto& s : generate_cohort(clinic(100)))
    s.for_each_event([](const ClinicalEvent& ev) {
      for (const auto& r : ev.resources)
        if (const auto* t = std::get_if<FunctionalTest>(&r); t && t->name == "EDSS") {
          ASSERT_GE(t->value, 0.0);
          ASSERT_LE(t->value, 10.0);
          ASSERT_EQ(t->value * 2, std::round(t->value * 2));
        }
    });
  EXPECT_EQ(quantize_edss(3.26), 3.5);
  EXPECT_EQ(quantize_edss(-1), 0.0);
  EXPECT_EQ(quantize_edss(12), 10.0);
}

TEST(Synth, ClinicVisitsAreQuarterly) {
  const auto cohort = generate_cohort(clinic(40));
  for (const auto& s : cohort) {
    ASSERT_GE(s.episodes.size(), 1u);
    for (std::size_t e = 1; e < s.episodes.size(); ++e) {
      const double gap = static_cast<double>(s.episodes[e].start() - s.episodes[e - 1].start()) / seconds::kDay;
      EXPECT_GT(gap, 91 - 2 * 14 - 1);
      EXPECT_LT(gap, 91 + 2 * 14 + 1);
    }
    // Each visit has EDSS and the four functional tests.
    for (const auto& ep : s.episodes) {
      int tests = 0;
      for (const auto& r : ep.events[0].resources) tests += std::holds_alternative<FunctionalTest>(r);
      EXPECT_EQ(tests, 5);
    }
  }
}

TEST(Synth, QuestionnairesAreSparse) {
  const auto st = summarize_cohort(generate_cohort(clinic(300)));
  double tests = 0, q = 0;
  for (const char* n : {"NHPT", "T25FW", "PASAT", "SDMT"}) tests += st.feature_observations.at(n);
  for (const char* n : {"MSWS12", "FATIGUE"}) q += st.feature_observations.at(n);
  EXPECT_NEAR(q / tests, 0.1, 0.02);
}

TEST(Synth, SmartphoneShape) {
  const auto cohort = generate_cohort(phone(30));
  const std::set<std::string> expected{"ips_correct", "ips_time", "pinching", "draw_shape_error",
                                       "walk_steps", "u_turn_speed", "balance_sway", "mood"};
  for (const auto& s : cohort) {
    ASSERT_TRUE(s.characteristics.has_ms.has_value());
    s.for_each_event([&](const ClinicalEvent& ev) {
      for (const auto& r : ev.resources) {
        const auto* name = resource_name(r);
        ASSERT_NE(name, nullptr);
        EXPECT_TRUE(expected.count(*name)) << *name;
        EXPECT_NE(*name, "EDSS");
      }
    });
    for (const auto& ep : s.episodes) EXPECT_EQ(ep.start() / seconds::kDay, ep.end() / seconds::kDay);
  }
}

TEST(Synth, NoAttritionMeansFullHorizon) {
  auto c = phone(60);
  c.smartphone.attrition_hazard = 0.0;
  const Timestamp last_week = (c.smartphone.horizon_weeks - 1) * seconds::kWeek;
  for (const auto& s : generate_cohort(c)) {
    ASSERT_FALSE(s.episodes.empty());
    EXPECT_GE(s.episodes.back().start(), last_week) << s.subject_id;
  }
}

TEST(Synth, AttritionIsMonotone) {
  auto c = phone(600);
  c.smartphone.attrition_hazard = 0.15;
  std::vector<double> per_week(c.smartphone.horizon_weeks, 0.0);
  for (const auto& s : generate_cohort(c))
    for (const auto& ep : s.episodes) per_week[ep.start() / seconds::kWeek] += 1;
  for (std::size_t w = 1; w < per_week.size(); ++w) EXPECT_LE(per_week[w], per_week[w - 1] * 1.02) << w;
  EXPECT_LT(per_week.back(), per_week.front() * 0.6);
}

TEST(Synth, ControlFraction) {
  auto c = phone(2000, 3);
  c.smartphone.horizon_weeks = 1;
  c.smartphone.control_fraction = 0.25;
  EXPECT_NEAR(summarize_cohort(generate_cohort(c)).ms_fraction(), 0.75, 0.03);
}

TEST(Synth, TestsTrackLatentDisability) {
  // Higher EDSS visits come with slower walks: positive rank association.
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, n = 0;
  for (const auto& s : generate_cohort(clinic(200)))
    s.for_each_event([&](const ClinicalEvent& ev) {
      auto e = labels::detail::test_value(ev, "EDSS");
      auto w = labels::detail::test_value(ev, "T25FW");
      if (!e || !w) return;
      const double y = std::log(*w);
      sx += *e, sy += y, sxx += *e * *e, syy += y * y, sxy += *e * y, n += 1;
    });
  const double r = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  EXPECT_GT(r, 0.6);
}

TEST(Synth, ConfigValidation) {
  auto code = [](const char* text) {
    try {
      config_from_json(nlohmann::json::parse(text));
    } catch (const Error& e) {
      return e.code();
    }
    return std::string("none");
  };
  EXPECT_EQ(code(R"({"n_subjects": 0})"), "INVALID_GENERATOR_CONFIG");
  EXPECT_EQ(code(R"({"style": "lab"})"), "INVALID_GENERATOR_CONFIG");
  EXPECT_EQ(code(R"({"smartphone": {"attrition_hazard": 1.5}})"), "INVALID_GENERATOR_CONFIG");
  EXPECT_EQ(code(R"({"demographics": {"female_fraction": -0.1}})"), "INVALID_GENERATOR_CONFIG");
  EXPECT_EQ(code(R"({"n_subjects": "many"})"), "INVALID_GENERATOR_CONFIG");
  EXPECT_EQ(code(R"({"style": "smartphone", "n_subjects": 3})"), "none");
}

TEST(CohortStats, EmptyAndSexHistogram) {
  const auto empty = summarize_cohort({});
  EXPECT_EQ(empty.subjects, 0u);
  EXPECT_EQ(empty.events, 0u);
  EXPECT_TRUE(empty.sex_histogram.empty());
  auto c = clinic(100);
  c.demographics.female_fraction = 1.0;
  const auto st = summarize_cohort(generate_cohort(c));
  ASSERT_EQ(st.sex_histogram.size(), 1u);
  EXPECT_EQ(st.sex_histogram.at("Female"), 100u);
}
