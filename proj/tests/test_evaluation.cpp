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
#include <set>

#include "msprog/evaluation.hpp"
#include "msprog/metrics.hpp"
#include "msprog/random.hpp"

using namespace msprog;
using namespace msprog::evaluation;

namespace {

// Rank of i: one plus the number of items ranked ahead (higher score, or equal score earlier in input).
double brute_force_ap(const std::vector<bool>& t, const std::vector<double>& s) {
  const std::size_t n = t.size();
  auto rank = [&](std::size_t i) {
    std::size_t r = 1;
    for (std::size_t j = 0; j < n; ++j)
      if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++r;
    return r;
  };
  double sum = 0;
  int pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!t[i]) continue;
    ++pos;
    const auto ri = rank(i);
    int hits = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (t[j] && rank(j) <= ri) ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(ri);
  }
  return pos == 0 ? std::nan("") : sum / pos;
}

std::vector<std::string> ids(int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back("S" + std::to_string(1000 + i));
  return v;
}

PredictionRecord rec(std::string id, Timestamp t, const std::string& task, double y, std::vector<double> p,
                     nlohmann::json attrs = nlohmann::json::object()) {
  PredictionRecord r;
  r.subject_id = std::move(id);
  r.timestamp = t;
  r.label_targets[task] = y;
  r.label_predictions[task] = std::move(p);
  r.subgroup_attributes = std::move(attrs);
  return r;
}

}  // namespace

TEST(AveragePrecision, ReferenceExample) {
  const std::vector<bool> t{true, false, true};
  const std::vector<double> s{0.9, 0.8, 0.7};
  EXPECT_NEAR(metrics::average_precision(t, s), 5.0 / 6.0, 1e-15);
  EXPECT_TRUE(std::isnan(metrics::average_precision(std::vector<bool>{false, false}, std::vector<double>{0.1, 0.2})));
  EXPECT_EQ(metrics::average_precision(std::vector<bool>{true}, std::vector<double>{0.3}), 1.0);
}

TEST(AveragePrecision, MatchesBruteForceWithTies) {
  CounterRng rng(123);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<bool> t(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = rng.bernoulli(0.4);
      s[i] = static_cast<double>(rng.below(4)) / 4.0;  // coarse grid forces ties
    }
    const double want = brute_force_ap(t, s);
    const double got = metrics::average_precision(t, s);
    if (std::isnan(want)) ASSERT_TRUE(std::isnan(got));
    else ASSERT_NEAR(got, want, 1e-12) << trial;
  }
}

TEST(AveragePrecision, PermutationInvariantWithoutTies) {
  CounterRng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    std::vector<std::size_t> idx(n);
    std::vector<bool> t(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      idx[i] = i;
      t[i] = i == 0 || rng.bernoulli(0.3);
      s[i] = rng.uniform();
    }
    rng.shuffle(idx);
    std::vector<bool> t2(n);
    std::vector<double> s2(n);
    for (std::size_t i = 0; i < n; ++i) {
      t2[i] = t[idx[i]];
      s2[i] = s[idx[i]];
    }
    ASSERT_NEAR(metrics::average_precision(t, s), metrics::average_precision(t2, s2), 1e-12);
  }
}

TEST(AveragePrecision, RandomScoresNearPrevalence) {
  CounterRng rng(77);
  std::vector<bool> t(20000);
  std::vector<double> s(20000);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = rng.bernoulli(0.3);
    s[i] = rng.uniform();
  }
  EXPECT_NEAR(metrics::average_precision(t, s), 0.3, 0.02);
}

TEST(MacroAp, SkipsAbsentClasses) {
  const std::vector<int> t{0, 0, 1, 1};
  const std::vector<double> s{0.9, 0.05, 0.05, 0.8, 0.2, 0.0, 0.1, 0.9, 0.0, 0.3, 0.6, 0.1};
  const auto m = metrics::macro_average_precision(t, s, 3);
  EXPECT_EQ(m.classes_used, 2u);
  EXPECT_EQ(m.classes_skipped, 1u);
  const double ap0 = brute_force_ap({true, true, false, false}, {0.9, 0.8, 0.1, 0.3});
  const double ap1 = brute_force_ap({false, false, true, true}, {0.05, 0.2, 0.9, 0.6});
  EXPECT_NEAR(m.value, (ap0 + ap1) / 2, 1e-12);
}

TEST(Metrics, RmseAndAccuracy) {
  EXPECT_NEAR(metrics::rmse(std::vector<double>{0, 0, 0}, std::vector<double>{1, -1, std::sqrt(2.0)}),
              std::sqrt(4.0 / 3.0), 1e-15);
  EXPECT_DOUBLE_EQ(metrics::accuracy(std::vector<int>{0, 1, 2, 1}, std::vector<int>{0, 1, 1, 1}), 0.75);
  EXPECT_EQ(metrics::argmax(std::vector<double>{0.2, 0.4, 0.4}), 1);
  EXPECT_THROW(metrics::rmse(std::vector<double>{}, std::vector<double>{}), Error);
}

TEST(Folds, SizesAndDisjointness) {
  for (std::size_t k : {2u, 3u, 5u, 10u}) {
    const auto plan = kfold_split(ids(53), k, 9);
    std::set<std::string> seen;
    std::size_t lo = 1000, hi = 0;
    for (const auto& f : plan.folds) {
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      for (const auto& id : f) EXPECT_TRUE(seen.insert(id).second);
    }
    EXPECT_EQ(seen.size(), 53u);
    EXPECT_LE(hi - lo, 1u);
    EXPECT_EQ(plan.validation_fold(k - 1), 0u);
  }
}

TEST(Folds, DeterministicAndOrderFree) {
  auto v = ids(30);
  const auto a = kfold_split(v, 5, 1);
  std::reverse(v.begin(), v.end());
  v.push_back("S1000");
  EXPECT_EQ(kfold_split(v, 5, 1).folds, a.folds);
  EXPECT_NE(kfold_split(v, 5, 2).folds, a.folds);
  EXPECT_EQ(FoldPlan::from_json(a.to_json()).folds, a.folds);
}

TEST(Folds, Errors) {
  try {
    kfold_split(ids(10), 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "INVALID_K");
  }
  try {
    kfold_split(ids(3), 5, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "TOO_FEW_SUBJECTS");
  }
}

TEST(Subgroups, Membership) {
  SubgroupScheme s;
  EXPECT_EQ(s.cells(), (std::vector<std::string>{"All", "Female", "Male", "Age<30", "Age30-50", "Age50-70", "Age>=70"}));
  EXPECT_EQ(s.membership({{"sex", "Female"}, {"age", 30.0}}), (std::vector<std::string>{"All", "Female", "Age30-50"}));
  EXPECT_EQ(s.membership({{"age", 70}}), (std::vector<std::string>{"All", "Age>=70"}));
  EXPECT_EQ(s.membership({{"sex", "Unknown"}, {"age", 29.9}}), (std::vector<std::string>{"All", "Age<30"}));
  EXPECT_EQ(s.membership(nlohmann::json::object()), (std::vector<std::string>{"All"}));
}

TEST(Summary, PopulationStdAndNaN) {
  const auto s = summarize({1.0, 2.0, 3.0, std::nan("")});
  EXPECT_EQ(s.folds, 3u);
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(2.0 / 3.0));
  EXPECT_EQ(format_mean_std(s), "2.000 (0.816)");
  EXPECT_EQ(format_mean_std(summarize({std::nan("")})), "NaN (NaN)");
}

TEST(Evaluate, CellsAndCsvShape) {
  const auto plan = kfold_split({"A", "B", "C", "D"}, 2, 3);
  const std::string task = "edss_gt3@0-6mo";
  std::vector<PredictionRecord> r;
  for (const auto& id : {"A", "B", "C", "D"}) {
    r.push_back(rec(id, 0, task, 1, {0.9}, {{"sex", "Female"}, {"age", 25.0}}));
    r.push_back(rec(id, 10, task, 0, {0.2}, {{"sex", "Female"}, {"age", 25.0}}));
  }
  const auto rep = evaluate(r, "LogisticRegression", SubgroupScheme{}, plan);
  // Male and the other age cells have no members and are omitted.
  EXPECT_EQ(rep.cells.size(), 3u * 2u);
  const auto* v = rep.find({task, "LogisticRegression", "All", "au_prc"});
  ASSERT_TRUE(v);
  EXPECT_EQ(*v, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(rep.summary({task, "LogisticRegression", "Female", "accuracy"}).mean, 1.0);
  const auto csv = rep.to_csv();
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  EXPECT_EQ(lines, 1u + rep.cells.size() * (2u + 1u));
  EXPECT_NE(csv.find("edss_gt3@0-6mo,LogisticRegression,mean_std,All,au_prc,1.000 (0.000)"), std::string::npos);
  EXPECT_EQ(MetricsReport::from_json(rep.to_json()).to_csv(), csv);
  // Order of records does not matter.
  std::reverse(r.begin(), r.end());
  EXPECT_EQ(evaluate(r, "LogisticRegression", SubgroupScheme{}, plan).to_csv(), csv);
}

TEST(Evaluate, UndefinedFoldIsNaN) {
  const auto plan = kfold_split({"A", "B"}, 2, 0);
  const std::string task = "edss_gt3@0-6mo";
  std::vector<PredictionRecord> r{rec("A", 0, task, 0, {0.1}), rec("B", 0, task, 1, {0.7})};
  const auto rep = evaluate(r, "m", SubgroupScheme{}, plan);
  const auto& v = *rep.find({task, "m", "All", "au_prc"});
  const std::size_t fa = *plan.find("A");
  EXPECT_TRUE(std::isnan(v[fa]));
  EXPECT_EQ(v[1 - fa], 1.0);
  EXPECT_EQ(rep.summary({task, "m", "All", "au_prc"}).folds, 1u);
}

TEST(Evaluate, MulticlassAndRegression) {
  const auto plan = kfold_split({"A", "B"}, 2, 0);
  std::vector<PredictionRecord> r{rec("A", 0, "edss_severity@0-6mo", 2, {0.1, 0.1, 0.7, 0.1}),
                                  rec("A", 1, "edss_mean@0-6mo", 3.0, {4.0}), rec("B", 0, "edss_mean@0-6mo", 1.0, {1.0})};
  const auto rep = evaluate(r, "m", SubgroupScheme{}, plan);
  EXPECT_EQ((*rep.find({"edss_severity@0-6mo", "m", "All", "avg_au_prc"}))[*plan.find("A")], 1.0);
  EXPECT_EQ((*rep.find({"edss_mean@0-6mo", "m", "All", "rmse"}))[*plan.find("A")], 1.0);
  EXPECT_EQ(metrics_for(labels::TaskKind::Regression), std::vector<std::string>{"rmse"});
}

TEST(Records, RoundTripAndErrors) {
  std::vector<PredictionRecord> r{rec("A", 5, "edss_gt3@0-6mo", 1, {0.25}, {{"sex", "Male"}, {"age", 44.5}})};
  EXPECT_EQ(decode_records(encode_records(r)), r);
  EXPECT_THROW(decode_records("{not json}\n"), Error);
  EXPECT_THROW(decode_records(R"({"subject_id":"A","timestamp":0,"label_targets":{},"label_predictions":{"x":[1]}})"),
               Error);
  const auto plan = kfold_split({"A", "B"}, 2, 0);
  EXPECT_THROW(evaluate({rec("Z", 0, "edss_gt3@0-6mo", 1, {0.5})}, "m", SubgroupScheme{}, plan), Error);
}
