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

#include "msprog/features.hpp"
#include "msprog/labels.hpp"
#include "msprog/synth.hpp"
#include "support.hpp"

using namespace msprog;
using namespace msprog::features;
using namespace msprog::testing;

namespace {

constexpr Timestamp M = seconds::kMonth;

Cohort small_cohort() {
  std::vector<ClinicalEvent> a, b;
  for (int i = 0; i < 8; ++i) {
    a.push_back(event(i * M, {test("EDSS", 2.0 + 0.5 * i, "edss"), test("T25FW", 5.0 + i),
                              numeric_q("MSWS12", 10.0 * i), text_q("NOTES", i % 2 ? "tired" : "fine")}));
    b.push_back(event(i * M + 100, {test("EDSS", 1.0, "edss"), test("NHPT", 20.0 + i, "dexterity")}));
  }
  return {subject("A", a, Sex::Female, 35.0), subject("B", b, Sex::Male, 61.0)};
}

Cohort labeled(const Cohort& c, const std::string& task) {
  return labels::annotate_cohort(c, {labels::parse_task(task)}, {});
}

}  // namespace

TEST(FeatureSpace, LayoutAndFingerprint) {
  const auto space = FeatureSpace::from_cohort(small_cohort(), 4);
  ASSERT_EQ(space.size(), 5u + 3u + 1u + 4u);
  EXPECT_EQ(space[0].name, "age");
  EXPECT_EQ(space[5].name, "EDSS");
  EXPECT_EQ(space.index_of("MSWS12").value(), 8u);
  EXPECT_EQ(space[*space.index_of("NOTES#2")].kind, FeatureKind::Text);
  EXPECT_EQ(space[*space.index_of("NOTES#2")].group, FeatureGroup::Questionnaires);
  EXPECT_EQ(space[*space.index_of("NHPT")].group, FeatureGroup::FunctionalTests);
  EXPECT_EQ(space.fingerprint(), FeatureSpace::from_cohort(small_cohort(), 4).fingerprint());
  EXPECT_NE(space.fingerprint(), FeatureSpace::from_cohort(small_cohort(), 8).fingerprint());
}

TEST(FeatureSpace, EdssExcludedForEdssTasks) {
  const auto space = FeatureSpace::from_cohort(small_cohort());
  for (const char* t : {"edss_mean@0-6mo", "edss_gt3@0-6mo", "edss_gt5@0-6mo", "edss_severity@0-6mo"})
    EXPECT_FALSE(exclude_leaky_features(space, labels::parse_task(t)).index_of("EDSS")) << t;
  EXPECT_TRUE(exclude_leaky_features(space, labels::parse_task("prog_T25FW@0-6mo")).index_of("EDSS"));
  const auto strict = exclude_leaky_features(space, labels::parse_task("score_mobility@0-1wk"), true);
  EXPECT_FALSE(strict.index_of("T25FW"));
  EXPECT_TRUE(strict.index_of("NHPT"));
  EXPECT_TRUE(exclude_leaky_features(space, labels::parse_task("score_mobility@0-1wk"), false).index_of("T25FW"));
}

TEST(FeatureSpace, TextHashingIsOneHot) {
  const Cohort c = small_cohort();
  const auto task = labels::parse_task("edss_gt3@0-6mo");
  const auto space = exclude_leaky_features(FeatureSpace::from_cohort(c, 4), task);
  const auto set = build_instances(labeled(c, "edss_gt3@0-6mo"), task, Mode::Sequence, space,
                                   {std::nullopt, M, 1, false});
  const int slot = text_slot("fine", 4);
  ASSERT_GE(slot, 0);
  const auto& first = set.sequence.front();
  for (int b = 0; b < 4; ++b)
    EXPECT_DOUBLE_EQ(first.value(0, *space.index_of("NOTES#" + std::to_string(b))), b == slot ? 1.0 : 0.0);
  EXPECT_EQ(text_slot("", 4), -1);
}

TEST(Instances, TabularWindowMeans) {
  const Cohort c = small_cohort();
  const auto task = labels::parse_task("edss_mean@0-6mo");
  const auto space = exclude_leaky_features(FeatureSpace::from_cohort(c), task);
  FeaturizeOptions o;
  o.lookback = 2 * M;
  const auto set = build_instances(labeled(c, task.name), task, Mode::Tabular, space, o);
  // Subject A triggers at visits 0..6 (visit 7 has no future EDSS).
  ASSERT_EQ(set.size(), 14u);
  const auto& inst = set.tabular[3];  // A at 3M: window covers visits 1..3
  EXPECT_EQ(inst.subject_id, "A");
  EXPECT_EQ(inst.trigger, 3 * M);
  EXPECT_DOUBLE_EQ(inst.values[*space.index_of("T25FW")], 7.0);
  EXPECT_DOUBLE_EQ(inst.values[*space.index_of("age")], 35.0);
  EXPECT_DOUBLE_EQ(inst.values[*space.index_of("sex_female")], 1.0);
  EXPECT_EQ(inst.mask[*space.index_of("NHPT")], 0);
  EXPECT_DOUBLE_EQ(inst.target, 4.75);  // visits 4..7
}

TEST(Instances, NoLeakageOnSyntheticCohort) {
  synth::GeneratorConfig g;
  g.n_subjects = 40;
  g.seed = 11;
  const Cohort c = synth::generate_cohort(g);
  for (const char* name : {"edss_gt3@0-6mo", "edss_mean@6-12mo", "prog_NHPT@0-6mo"}) {
    const auto task = labels::parse_task(name);
    const auto space = exclude_leaky_features(FeatureSpace::from_cohort(c), task);
    const Cohort lab = labels::annotate_cohort(c, {task}, {});
    for (Mode m : {Mode::Tabular, Mode::Sequence}) {
      FeaturizeOptions o;
      o.lookback = 6 * M;
      o.bucket_duration = M;
      const auto set = build_instances(lab, task, m, space, o);
      ASSERT_GT(set.size(), 0u);
      for (std::size_t i = 0; i < set.size(); ++i) {
        const auto fmax = m == Mode::Tabular ? set.tabular[i].feature_time_max : set.sequence[i].feature_time_max;
        const auto tstart =
            m == Mode::Tabular ? set.tabular[i].target_window_start : set.sequence[i].target_window_start;
        ASSERT_LE(fmax, set.trigger(i));
        ASSERT_LT(set.trigger(i), tstart);
      }
    }
  }
}

TEST(Instances, CollapseEqualsTabular) {
  synth::GeneratorConfig g;
  g.n_subjects = 15;
  g.seed = 4;
  const Cohort c = synth::generate_cohort(g);
  const auto task = labels::parse_task("edss_gt3@0-6mo");
  const auto space = exclude_leaky_features(FeatureSpace::from_cohort(c), task);
  const Cohort lab = labels::annotate_cohort(c, {task}, {});
  FeaturizeOptions o;
  o.lookback = 6 * M;
  o.bucket_duration = M;
  const auto tab = build_instances(lab, task, Mode::Tabular, space, o);
  const auto seq = build_instances(lab, task, Mode::Sequence, space, o);
  ASSERT_EQ(tab.size(), seq.size());
  for (std::size_t i = 0; i < tab.size(); ++i) {
    const auto col = collapse(seq.sequence[i]);
    for (std::size_t f = 0; f < space.size(); ++f) ASSERT_NEAR(col[f], tab.tabular[i].values[f], 1e-9);
  }
}

TEST(Instances, SequenceBucketsOrdered) {
  const Cohort c = small_cohort();
  const auto task = labels::parse_task("edss_mean@0-6mo");
  const auto space = exclude_leaky_features(FeatureSpace::from_cohort(c), task);
  FeaturizeOptions o;
  o.lookback = 3 * M;
  o.bucket_duration = M;
  const auto set = build_instances(labeled(c, task.name), task, Mode::Sequence, space, o);
  const auto& s = set.sequence[4];  // A at 4M
  ASSERT_EQ(s.buckets, 3u);
  const auto f = *space.index_of("T25FW");
  EXPECT_DOUBLE_EQ(s.value(2, f), 9.0);  // trigger bucket
  EXPECT_DOUBLE_EQ(s.value(1, f), 8.0);
  EXPECT_DOUBLE_EQ(s.value(0, f), 6.5);  // 1M and 2M, the edge visit folds into the oldest bucket
  EXPECT_EQ(s.feature_time_max, 4 * M);
}

TEST(Instances, GroupMasks) {
  const Cohort c = small_cohort();
  const auto task = labels::parse_task("edss_mean@0-6mo");
  const auto space = exclude_leaky_features(FeatureSpace::from_cohort(c), task);
  const auto set = build_instances(labeled(c, task.name), task, Mode::Tabular, space);
  const auto demo = apply_feature_group_mask(set, FeatureGroup::Demographics);
  const auto poms = apply_feature_group_mask(set, FeatureGroup::POMs);
  const auto full = apply_feature_group_mask(set, FeatureGroup::Full);
  for (std::size_t i = 0; i < space.size(); ++i) {
    const bool is_demo = space[i].group == FeatureGroup::Demographics;
    EXPECT_EQ(demo.tabular[0].values.size(), space.size());
    if (!is_demo) EXPECT_EQ(demo.tabular[0].values[i], 0.0);
    if (is_demo) EXPECT_EQ(poms.tabular[0].values[i], 0.0);
    EXPECT_EQ(full.tabular[0].values[i], set.tabular[0].values[i]);
  }
  EXPECT_EQ(parse_group("POMs"), FeatureGroup::POMs);
  EXPECT_THROW(parse_group("Everything"), Error);
}

TEST(Instances, DiagnosisUsesFirstNPoms) {
  Subject s = subject("D", {event(0, {test("T25FW", 1)}), event(10, {test("T25FW", 3)}), event(20, {test("T25FW", 100)})});
  s.characteristics.has_ms = true;
  const auto task = labels::parse_task("diagnosis_n2");
  const Cohort lab = labels::annotate_cohort({s}, {task}, {});
  const auto space = FeatureSpace::from_cohort(lab);
  const auto set = build_instances(lab, task, Mode::Tabular, space);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.tabular[0].trigger, 10);
  EXPECT_DOUBLE_EQ(set.tabular[0].values[*space.index_of("T25FW")], 2.0);
  EXPECT_DOUBLE_EQ(set.tabular[0].target, 1.0);
}

TEST(Instances, InvalidOptions) {
  const Cohort c = small_cohort();
  const auto task = labels::parse_task("edss_mean@0-6mo");
  FeaturizeOptions o;
  o.lookback = 0;
  EXPECT_THROW(build_instances(c, task, Mode::Tabular, FeatureSpace::from_cohort(c), o), Error);
  EXPECT_THROW(build_instances(c, task, Mode::Tabular, FeatureSpace{}), Error);
}
