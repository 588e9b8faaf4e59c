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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msprog/error.hpp"
#include "msprog/labels.hpp"

namespace msprog::models {

inline constexpr double kProbabilityFloor = 1e-12;

enum class LossKind { MSE, CrossEntropy, Focal };

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::MSE: return "mse";
    case LossKind::CrossEntropy: return "cross_entropy";
    case LossKind::Focal: return "focal";
  }
  return "mse";
}

inline LossKind parse_loss(std::string_view s) {
  if (s == "mse") return LossKind::MSE;
  if (s == "cross_entropy" || s == "ce") return LossKind::CrossEntropy;
  if (s == "focal") return LossKind::Focal;
  throw config_error("UNKNOWN_LOSS", "unknown loss " + std::string(s));
}

/// Loss configuration. `alpha` holds per-class weights for focal loss; an
/// empty vector means 1 for every class.
struct LossSpec {
  LossKind kind = LossKind::CrossEntropy;
  double gamma = 2.0;
  std::vector<double> alpha;

  double alpha_for(int cls) const {
    if (alpha.empty()) return 1.0;
    if (cls < 0 || static_cast<std::size_t>(cls) >= alpha.size())
      throw config_error("INVALID_FOCAL_ALPHA", "focal alpha missing class " + std::to_string(cls));
    return alpha[static_cast<std::size_t>(cls)];
  }
};

/// Pointwise focal loss on the probability of the true class.
inline double focal_loss(double p_true, double gamma, double alpha = 1.0) {
  const double p = std::clamp(p_true, kProbabilityFloor, 1.0);
  return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
}

inline double cross_entropy(double p_true) { return -std::log(std::max(p_true, kProbabilityFloor)); }

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> p(z.begin(), z.end());
  const double m = *std::max_element(p.begin(), p.end());
  double s = 0;
  for (auto& v : p) {
    v = std::exp(v - m);
    s += v;
  }
  for (auto& v : p) v /= s;
  return p;
}

/// Maps raw head outputs to prediction scores: identity for regression,
/// sigmoid for binary, softmax for multiclass.
inline std::vector<double> head_scores(std::span<const double> z, labels::TaskKind kind) {
  switch (kind) {
    case labels::TaskKind::Regression: return {z[0]};
    case labels::TaskKind::Binary: return {sigmoid(z[0])};
    case labels::TaskKind::Multiclass: return softmax(z);
  }
  return {};
}

namespace detail {

// d FL / d p_y scaled by p_y, i.e. alpha [gamma (1-p)^(gamma-1) p log p - (1-p)^gamma].
inline double focal_logit_factor(double p_true, double gamma, double alpha) {
  const double p = std::clamp(p_true, kProbabilityFloor, 1.0);
  const double q = 1.0 - p;
  const double term = q > 0 ? gamma * std::pow(q, gamma - 1.0) * p * std::log(p) : 0.0;
  return alpha * (term - std::pow(q, gamma));
}

}  // namespace detail

/// Per-example loss and its gradient with respect to the head outputs `z`.
/// Regression uses squared error; classification supports cross-entropy and
/// focal loss through sigmoid (binary) or softmax (multiclass) links.
inline double head_loss(std::span<const double> z, double target, labels::TaskKind kind, const LossSpec& loss,
                        std::span<double> grad) {
  using labels::TaskKind;
  if (kind == TaskKind::Regression) {
    const double e = z[0] - target;
    grad[0] = 2.0 * e;
    return e * e;
  }
  if (loss.kind == LossKind::MSE) throw config_error("INCOMPATIBLE_LOSS", "mse loss requires a regression task");
  const int y = static_cast<int>(target);
  if (kind == TaskKind::Binary) {
    const double p = sigmoid(z[0]);
    const double p_true = y == 1 ? p : 1.0 - p;
    const double sign = y == 1 ? 1.0 : -1.0;
    if (loss.kind == LossKind::CrossEntropy) {
      grad[0] = p - static_cast<double>(y);
      // log-sigmoid computed from logits for stability
      const double zz = sign * z[0];
      return zz >= 0 ? std::log1p(std::exp(-zz)) : -zz + std::log1p(std::exp(zz));
    }
    const double a = loss.alpha_for(y);
    // d p_true / d z = sign * p_true * (1 - p_true)
    grad[0] = detail::focal_logit_factor(p_true, loss.gamma, a) * sign * (1.0 - p_true);
    return focal_loss(p_true, loss.gamma, a);
  }
  const auto p = softmax(z);
  const double p_true = p[static_cast<std::size_t>(y)];
  if (loss.kind == LossKind::CrossEntropy) {
    for (std::size_t j = 0; j < p.size(); ++j) grad[j] = p[j] - (static_cast<int>(j) == y ? 1.0 : 0.0);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (double v : z) s += std::exp(v - m);
    return -(z[static_cast<std::size_t>(y)] - m - std::log(s));
  }
  const double a = loss.alpha_for(y);
  const double f = detail::focal_logit_factor(p_true, loss.gamma, a);
  for (std::size_t j = 0; j < p.size(); ++j) grad[j] = f * ((static_cast<int>(j) == y ? 1.0 : 0.0) - p[j]);
  return focal_loss(p_true, loss.gamma, a);
}

}  // namespace msprog::models
