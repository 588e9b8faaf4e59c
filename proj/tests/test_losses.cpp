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
#include <vector>

#include "msprog/models/loss.hpp"
#include "msprog/random.hpp"

using namespace msprog;
using namespace msprog::models;
using labels::TaskKind;

TEST(Focal, EqualsCrossEntropyAtGammaZero) {
  for (double p = 0.01; p < 1.0; p += 0.01) EXPECT_NEAR(focal_loss(p, 0.0), cross_entropy(p), 1e-12) << p;
}

TEST(Focal, ReferenceValue) { EXPECT_NEAR(focal_loss(0.5, 2.0), 0.25 * std::log(2.0), 1e-15); }

TEST(Focal, AlphaScales) { EXPECT_NEAR(focal_loss(0.3, 1.5, 0.25), 0.25 * focal_loss(0.3, 1.5), 1e-15); }

TEST(Focal, DecreasingInConfidence) {
  for (double g : {0.0, 0.5, 1.0, 2.0, 5.0})
    for (double p = 0.01; p < 0.99; p += 0.01) EXPECT_GT(focal_loss(p, g), focal_loss(p + 0.01, g)) << g << " " << p;
}

TEST(Focal, NonIncreasingInGamma) {
  for (double p = 0.01; p < 1.0; p += 0.07)
    for (double g = 0.0; g < 5.0; g += 0.25) {
      EXPECT_LE(focal_loss(p, g + 0.25), focal_loss(p, g));
      // analytic derivative -(1-p)^g ln(1-p) ln p
      EXPECT_LE(-std::pow(1 - p, g) * std::log1p(-p) * std::log(p), 0.0);
    }
}

TEST(Focal, FloorsProbability) {
  EXPECT_TRUE(std::isfinite(focal_loss(0.0, 2.0)));
  EXPECT_TRUE(std::isfinite(cross_entropy(0.0)));
  EXPECT_EQ(focal_loss(1.0, 2.0), 0.0);
}

TEST(Links, SoftmaxAndSigmoid) {
  const auto p = softmax(std::vector<double>{1000.0, 1000.0, -5.0});
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
  EXPECT_NEAR(p[0], 0.5, 1e-12);
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_EQ(parse_loss("ce"), LossKind::CrossEntropy);
  EXPECT_THROW(parse_loss("hinge"), Error);
}

namespace {

void check_head_gradient(TaskKind kind, std::size_t k, double target, const LossSpec& loss, CounterRng& rng) {
  std::vector<double> z(k), g(k), scratch(k);
  for (auto& v : z) v = rng.normal(0.0, 2.0);
  head_loss(z, target, kind, loss, g);
  for (std::size_t j = 0; j < k; ++j) {
    const double h = 1e-6;
    auto zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    const double num = (head_loss(zp, target, kind, loss, scratch) - head_loss(zm, target, kind, loss, scratch)) / (2 * h);
    EXPECT_NEAR(g[j], num, 1e-6 * std::max(1.0, std::abs(num)));
  }
}

}  // namespace

TEST(HeadLoss, GradientsMatchFiniteDifferences) {
  CounterRng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    check_head_gradient(TaskKind::Regression, 1, rng.normal(0, 3), {LossKind::MSE}, rng);
    for (double gamma : {0.0, 0.5, 2.0}) {
      LossSpec fl{LossKind::Focal, gamma, {0.25, 0.75, 1.0}};
      check_head_gradient(TaskKind::Binary, 1, rng.below(2), fl, rng);
      check_head_gradient(TaskKind::Multiclass, 3, rng.below(3), fl, rng);
    }
    check_head_gradient(TaskKind::Binary, 1, rng.below(2), {LossKind::CrossEntropy}, rng);
    check_head_gradient(TaskKind::Multiclass, 4, rng.below(4), {LossKind::CrossEntropy}, rng);
  }
}

TEST(HeadLoss, FocalMatchesCrossEntropyAtGammaZero) {
  std::vector<double> z{0.3, -1.2, 2.0}, g1(3), g2(3);
  const double a = head_loss(z, 1, TaskKind::Multiclass, {LossKind::Focal, 0.0, {}}, g1);
  const double b = head_loss(z, 1, TaskKind::Multiclass, {LossKind::CrossEntropy}, g2);
  EXPECT_NEAR(a, b, 1e-12);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(g1[j], g2[j], 1e-12);
}

TEST(HeadLoss, RejectsMseForClassification) {
  std::vector<double> z{0.0}, g(1);
  EXPECT_THROW(head_loss(z, 1, TaskKind::Binary, {LossKind::MSE}, g), Error);
  EXPECT_THROW(head_loss(z, 1, TaskKind::Binary, {LossKind::Focal, 2.0, {1.0}}, g), Error);
}
