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
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "msprog/error.hpp"

namespace msprog::metrics {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class ApMethod { Step, Trapezoid };

namespace detail {

// Indices by descending score; equal scores keep input order.
inline std::vector<std::size_t> ranking(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace detail

/// Average precision: mean of precision@rank over the ranks of the positives,
/// ranking by descending score with ties in input order. The trapezoid
/// variant integrates the PR curve linearly between consecutive ranks,
/// starting from (recall 0, precision 1). NaN when there are no positives.
inline double average_precision(std::span<const bool> targets, std::span<const double> scores,
                                ApMethod method = ApMethod::Step) {
  if (targets.size() != scores.size()) throw internal_error("LENGTH_MISMATCH", "targets and scores differ in length");
  std::size_t positives = 0;
  for (bool t : targets) positives += t;
  if (positives == 0) return kNaN;
  const auto order = detail::ranking(scores);
  const double P = static_cast<double>(positives);
  double hits = 0, ap = 0;
  double prev_recall = 0, prev_precision = 1;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const bool pos = targets[order[r]];
    if (pos) hits += 1;
    const double precision = hits / static_cast<double>(r + 1);
    const double recall = hits / P;
    if (method == ApMethod::Step) {
      if (pos) ap += precision;
    } else {
      ap += (recall - prev_recall) * (precision + prev_precision) / 2.0;
    }
    prev_recall = recall;
    prev_precision = precision;
  }
  return method == ApMethod::Step ? ap / P : ap;
}

inline double average_precision(const std::vector<bool>& targets, std::span<const double> scores,
                                ApMethod method = ApMethod::Step) {
  std::unique_ptr<bool[]> b(new bool[targets.size()]);
  for (std::size_t i = 0; i < targets.size(); ++i) b[i] = targets[i];
  return average_precision(std::span<const bool>(b.get(), targets.size()), scores, method);
}

struct MacroAp {
  double value = kNaN;
  std::size_t classes_used = 0;
  std::size_t classes_skipped = 0;
};

/// Unweighted one-vs-rest AP over classes with at least one positive.
/// `scores` is row-major [n x k].
inline MacroAp macro_average_precision(std::span<const int> targets, std::span<const double> scores, std::size_t k,
                                       ApMethod method = ApMethod::Step) {
  const std::size_t n = targets.size();
  if (scores.size() != n * k) throw internal_error("LENGTH_MISMATCH", "score matrix shape mismatch");
  MacroAp out;
  double sum = 0;
  std::unique_ptr<bool[]> t(new bool[n]);
  std::vector<double> col(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = targets[i] == static_cast<int>(c);
      pos += t[i];
      col[i] = scores[i * k + c];
    }
    if (pos == 0) {
      ++out.classes_skipped;
      continue;
    }
    sum += average_precision(std::span<const bool>(t.get(), n), col, method);
    ++out.classes_used;
  }
  if (out.classes_used > 0) out.value = sum / static_cast<double>(out.classes_used);
  return out;
}

inline double rmse(std::span<const double> targets, std::span<const double> predictions) {
  if (targets.size() != predictions.size() || targets.empty())
    throw internal_error("LENGTH_MISMATCH", "rmse needs equal non-empty inputs");
  double s = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double e = targets[i] - predictions[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(targets.size()));
}

inline double accuracy(std::span<const int> targets, std::span<const int> predicted) {
  if (targets.size() != predicted.size()) throw internal_error("LENGTH_MISMATCH", "accuracy needs equal lengths");
  if (targets.empty()) return kNaN;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) hit += targets[i] == predicted[i];
  return static_cast<double>(hit) / static_cast<double>(targets.size());
}

/// Index of the largest score; first wins on ties.
inline int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace msprog::metrics
