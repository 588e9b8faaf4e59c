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
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "msprog/error.hpp"
#include "msprog/features.hpp"
#include "msprog/labels.hpp"

namespace msprog::models {

using labels::TaskKind;

/// Dense model input: n examples of [steps x width] (steps == 1 for tabular)
/// with one scalar target each (class index for classification).
struct Dataset {
  TaskKind kind = TaskKind::Regression;
  int n_classes = 0;
  std::size_t n = 0;
  std::size_t steps = 1;
  std::size_t width = 0;
  std::vector<double> x;
  std::vector<double> y;
  std::string fingerprint;

  std::size_t example_size() const { return steps * width; }
  std::span<const double> example(std::size_t i) const {
    return {x.data() + i * example_size(), example_size()};
  }
  bool sequence() const { return steps > 1 || fingerprint.rfind("seq:", 0) == 0; }

  /// Number of model outputs: 1 for regression/binary, n_classes otherwise.
  std::size_t outputs() const { return kind == TaskKind::Multiclass ? static_cast<std::size_t>(n_classes) : 1; }

  Dataset subset(const std::vector<std::size_t>& idx) const {
    Dataset d;
    d.kind = kind;
    d.n_classes = n_classes;
    d.steps = steps;
    d.width = width;
    d.fingerprint = fingerprint;
    d.n = idx.size();
    d.x.reserve(idx.size() * example_size());
    d.y.reserve(idx.size());
    for (auto i : idx) {
      auto e = example(i);
      d.x.insert(d.x.end(), e.begin(), e.end());
      d.y.push_back(y[i]);
    }
    return d;
  }
};

/// Tabular instances give the zero-imputed window means. Sequence instances
/// give [buckets x 2F]: per-bucket means followed by the presence mask.
inline Dataset to_dataset(const features::InstanceSet& set, const std::vector<std::size_t>& idx) {
  Dataset d;
  d.kind = set.task.kind();
  d.n_classes = set.task.n_classes();
  d.n = idx.size();
  const std::size_t F = set.space.size();
  if (set.mode == features::Mode::Tabular) {
    d.steps = 1;
    d.width = F;
    d.fingerprint = "tab:" + set.space.fingerprint();
    d.x.reserve(d.n * F);
    for (auto i : idx) {
      const auto& inst = set.tabular[i];
      d.x.insert(d.x.end(), inst.values.begin(), inst.values.end());
      d.y.push_back(inst.target);
    }
  } else {
    const std::size_t B = set.sequence.empty() ? 0 : set.sequence.front().buckets;
    d.steps = B;
    d.width = 2 * F;
    d.fingerprint = "seq:" + set.space.fingerprint();
    d.x.reserve(d.n * B * 2 * F);
    for (auto i : idx) {
      const auto& inst = set.sequence[i];
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t f = 0; f < F; ++f) d.x.push_back(inst.values[b * F + f]);
        for (std::size_t f = 0; f < F; ++f) d.x.push_back(static_cast<double>(inst.mask[b * F + f]));
      }
      d.y.push_back(inst.target);
    }
  }
  return d;
}

inline Dataset to_dataset(const features::InstanceSet& set) {
  std::vector<std::size_t> idx(set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return to_dataset(set, idx);
}

/// Per-column z-scoring over all examples and steps. Constant columns get
/// unit scale.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Dataset& d) {
    Standardizer s;
    s.mean.assign(d.width, 0.0);
    s.scale.assign(d.width, 1.0);
    const double rows = static_cast<double>(d.n * d.steps);
    if (rows == 0) return s;
    std::vector<double> sq(d.width, 0.0);
    for (std::size_t r = 0; r < d.n * d.steps; ++r)
      for (std::size_t c = 0; c < d.width; ++c) s.mean[c] += d.x[r * d.width + c];
    for (auto& m : s.mean) m /= rows;
    for (std::size_t r = 0; r < d.n * d.steps; ++r)
      for (std::size_t c = 0; c < d.width; ++c) {
        const double z = d.x[r * d.width + c] - s.mean[c];
        sq[c] += z * z;
      }
    for (std::size_t c = 0; c < d.width; ++c) {
      const double sd = std::sqrt(sq[c] / rows);
      s.scale[c] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  void apply(Dataset& d) const {
    for (std::size_t r = 0; r < d.n * d.steps; ++r)
      for (std::size_t c = 0; c < d.width; ++c) {
        auto& v = d.x[r * d.width + c];
        v = (v - mean[c]) / scale[c];
      }
  }

  Dataset transformed(const Dataset& d) const {
    Dataset out = d;
    apply(out);
    return out;
  }

  bool empty() const { return mean.empty(); }
};

inline void check_targets(const Dataset& d) {
  if (d.n == 0) throw data_error("EMPTY_TRAINING_SET", "no training instances");
  if (d.kind == TaskKind::Regression) {
    double lo = d.y[0], hi = d.y[0];
    for (double v : d.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(hi - lo > 0.0)) throw data_error("DEGENERATE_TARGETS", "zero-variance regression target");
    return;
  }
  const int k = d.kind == TaskKind::Binary ? 2 : d.n_classes;
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(k, 1)), 0);
  for (double v : d.y) {
    const int c = static_cast<int>(v);
    if (c < 0 || c >= k || static_cast<double>(c) != v)
      throw data_error("INVALID_TARGET", "class index out of range: " + std::to_string(v));
    ++counts[static_cast<std::size_t>(c)];
  }
  int present = 0;
  for (auto c : counts) present += c > 0;
  if (present < 2) throw data_error("DEGENERATE_TARGETS", "training targets contain a single class");
}

}  // namespace msprog::models
