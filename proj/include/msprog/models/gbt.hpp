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
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "msprog/error.hpp"
#include "msprog/log.hpp"
#include "msprog/models/dataset.hpp"
#include "msprog/models/loss.hpp"

namespace msprog::models {

struct GbtOptions {
  int n_estimators = 100;
  double learning_rate = 0.1;
  int max_depth = 3;
  std::size_t min_samples_leaf = 1;
  std::size_t max_bins = 64;
};

/// Per-feature split thresholds. A value goes left of threshold t when x <= t.
struct Binner {
  std::vector<std::vector<double>> thresholds;

  static Binner fit(const Dataset& d, std::size_t max_bins) {
    Binner b;
    const std::size_t p = d.example_size();
    b.thresholds.resize(p);
    std::vector<double> col(d.n);
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t i = 0; i < d.n; ++i) col[i] = d.x[i * p + j];
      std::sort(col.begin(), col.end());
      std::vector<double> u = col;
      u.erase(std::unique(u.begin(), u.end()), u.end());
      auto& t = b.thresholds[j];
      if (u.size() <= max_bins) {
        for (std::size_t k = 0; k + 1 < u.size(); ++k) t.push_back(u[k] + (u[k + 1] - u[k]) / 2.0);
      } else {
        for (std::size_t k = 1; k < max_bins; ++k) {
          const double v = col[(k * d.n) / max_bins];
          if (v < u.back() && (t.empty() || v > t.back())) t.push_back(v);
        }
      }
    }
    return b;
  }

  std::uint8_t bin(std::size_t feature, double x) const {
    const auto& t = thresholds[feature];
    return static_cast<std::uint8_t>(std::lower_bound(t.begin(), t.end(), x) - t.begin());
  }
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1, right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }

  nlohmann::json to_json() const {
    nlohmann::json f = nlohmann::json::array(), t = nlohmann::json::array(), l = nlohmann::json::array(),
                   r = nlohmann::json::array(), v = nlohmann::json::array();
    for (const auto& n : nodes) {
      f.push_back(n.feature);
      t.push_back(n.threshold);
      l.push_back(n.left);
      r.push_back(n.right);
      v.push_back(n.value);
    }
    return {{"feature", f}, {"threshold", t}, {"left", l}, {"right", r}, {"value", v}};
  }
  static RegressionTree from_json(const nlohmann::json& j) {
    RegressionTree tr;
    const auto& f = j.at("feature");
    tr.nodes.resize(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      auto& n = tr.nodes[i];
      n.feature = f[i].get<int>();
      n.threshold = j.at("threshold")[i].get<double>();
      n.left = j.at("left")[i].get<int>();
      n.right = j.at("right")[i].get<int>();
      n.value = j.at("value")[i].get<double>();
    }
    return tr;
  }
};

namespace detail {

struct TreeBuilder {
  const std::vector<std::uint8_t>& bins;  // n x p
  const Binner& binner;
  std::size_t p;
  const std::vector<double>& residual;
  const std::vector<double>* hessian;  // null: leaf = mean residual
  const GbtOptions& opts;
  RegressionTree tree;
  std::vector<int> leaf_of;  // row -> node index

  double leaf_value(const std::vector<std::size_t>& rows) const {
    double g = 0, h = 0;
    for (auto r : rows) {
      g += residual[r];
      h += hessian ? (*hessian)[r] : 1.0;
    }
    return h > 1e-12 ? g / h : 0.0;
  }

  int build(std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    int best_f = -1, best_b = -1;
    double best_gain = 1e-12;
    if (depth < opts.max_depth && rows.size() >= 2 * opts.min_samples_leaf) {
      double G = 0;
      for (auto r : rows) G += residual[r];
      const double N = static_cast<double>(rows.size());
      std::vector<double> hs;
      std::vector<std::size_t> hc;
      for (std::size_t f = 0; f < p; ++f) {
        const std::size_t nb = binner.thresholds[f].size() + 1;
        if (nb < 2) continue;
        hs.assign(nb, 0.0);
        hc.assign(nb, 0);
        for (auto r : rows) {
          const auto b = bins[r * p + f];
          hs[b] += residual[r];
          ++hc[b];
        }
        double gl = 0;
        std::size_t nl = 0;
        for (std::size_t b = 0; b + 1 < nb; ++b) {
          gl += hs[b];
          nl += hc[b];
          const std::size_t nr = rows.size() - nl;
          if (nl < opts.min_samples_leaf || nr < opts.min_samples_leaf) continue;
          const double gr = G - gl;
          const double gain = gl * gl / static_cast<double>(nl) + gr * gr / static_cast<double>(nr) - G * G / N;
          if (gain > best_gain) {
            best_gain = gain;
            best_f = static_cast<int>(f);
            best_b = static_cast<int>(b);
          }
        }
      }
    }
    if (best_f < 0) {
      tree.nodes[static_cast<std::size_t>(id)].value = leaf_value(rows);
      for (auto r : rows) leaf_of[r] = id;
      return id;
    }
    std::vector<std::size_t> left, right;
    for (auto r : rows) (bins[r * p + static_cast<std::size_t>(best_f)] <= best_b ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const double thr = binner.thresholds[static_cast<std::size_t>(best_f)][static_cast<std::size_t>(best_b)];
    const int l = build(std::move(left), depth + 1);
    const int r = build(std::move(right), depth + 1);
    auto& n = tree.nodes[static_cast<std::size_t>(id)];
    n.feature = best_f;
    n.threshold = thr;
    n.left = l;
    n.right = r;
    return id;
  }
};

}  // namespace detail

/// Stage-wise boosting of depth-limited regression trees. Squared error uses
/// mean-residual leaves; log-loss uses one Newton step per leaf.
struct Booster {
  double init = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
  std::vector<double> stage_loss;  // training loss after each stage (index 0: initial)

  double raw(std::span<const double> x) const {
    double s = init;
    for (const auto& t : trees) s += learning_rate * t.predict(x);
    return s;
  }

  static Booster fit(const Dataset& d, const std::vector<double>& target, bool logistic,
                     const std::vector<std::uint8_t>& bins, const Binner& binner, const GbtOptions& opts) {
    if (opts.n_estimators < 1 || opts.max_depth < 1 || !(opts.learning_rate > 0))
      throw config_error("INVALID_HYPERPARAMETER", "gbt needs n_estimators>=1, max_depth>=1, learning_rate>0");
    Booster b;
    b.learning_rate = opts.learning_rate;
    const std::size_t n = d.n, p = d.example_size();
    double mean = 0;
    for (double v : target) mean += v;
    mean /= static_cast<double>(n);
    if (logistic) {
      const double q = std::clamp(mean, 1e-6, 1.0 - 1e-6);
      b.init = std::log(q / (1.0 - q));
    } else {
      b.init = mean;
    }
    std::vector<double> F(n, b.init), resid(n), hess(n);
    auto loss = [&]() {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (logistic) {
          const double z = target[i] > 0.5 ? F[i] : -F[i];
          s += z >= 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
        } else {
          const double e = target[i] - F[i];
          s += e * e;
        }
      }
      return s / static_cast<double>(n);
    };
    b.stage_loss.push_back(loss());
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    for (int m = 0; m < opts.n_estimators; ++m) {
      for (std::size_t i = 0; i < n; ++i) {
        if (logistic) {
          const double pr = sigmoid(F[i]);
          resid[i] = target[i] - pr;
          hess[i] = pr * (1.0 - pr);
        } else {
          resid[i] = target[i] - F[i];
        }
      }
      detail::TreeBuilder tb{bins, binner, p, resid, logistic ? &hess : nullptr, opts, {}, std::vector<int>(n, 0)};
      tb.build(all, 0);
      for (std::size_t i = 0; i < n; ++i)
        F[i] += b.learning_rate * tb.tree.nodes[static_cast<std::size_t>(tb.leaf_of[i])].value;
      b.trees.push_back(std::move(tb.tree));
      b.stage_loss.push_back(loss());
      const double prev = b.stage_loss[b.stage_loss.size() - 2], cur = b.stage_loss.back();
      if (cur > prev + 1e-9 * std::max(1.0, prev)) {
        if (!logistic)
          throw internal_error("GBT_LOSS_INCREASED", "squared-error boosting stage increased training loss");
        log::warn("gbt log-loss increased at stage " + std::to_string(m + 1));
      }
    }
    return b;
  }

  nlohmann::json to_json() const {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& tr : trees) t.push_back(tr.to_json());
    return {{"init", init}, {"learning_rate", learning_rate}, {"trees", t}};
  }
  static Booster from_json(const nlohmann::json& j) {
    Booster b;
    b.init = j.at("init").get<double>();
    b.learning_rate = j.at("learning_rate").get<double>();
    for (const auto& t : j.at("trees")) b.trees.push_back(RegressionTree::from_json(t));
    return b;
  }
};

/// GBTRegressor (one squared-error booster) or GBTClassifier (one log-loss
/// booster for binary tasks; one-vs-rest with normalized probabilities for
/// multiclass).
struct GbtModel {
  TaskKind kind = TaskKind::Regression;
  std::vector<Booster> boosters;

  static GbtModel fit(const Dataset& d, const GbtOptions& opts) {
    GbtModel m;
    m.kind = d.kind;
    const auto binner = Binner::fit(d, std::min<std::size_t>(opts.max_bins, 256));
    const std::size_t p = d.example_size();
    std::vector<std::uint8_t> bins(d.n * p);
    for (std::size_t i = 0; i < d.n; ++i)
      for (std::size_t j = 0; j < p; ++j) bins[i * p + j] = binner.bin(j, d.x[i * p + j]);
    if (d.kind == TaskKind::Regression) {
      m.boosters.push_back(Booster::fit(d, d.y, false, bins, binner, opts));
      return m;
    }
    const int K = d.kind == TaskKind::Binary ? 1 : d.n_classes;
    for (int k = 0; k < K; ++k) {
      const int positive = d.kind == TaskKind::Binary ? 1 : k;
      std::vector<double> t(d.n);
      for (std::size_t i = 0; i < d.n; ++i) t[i] = static_cast<int>(d.y[i]) == positive ? 1.0 : 0.0;
      m.boosters.push_back(Booster::fit(d, t, true, bins, binner, opts));
    }
    return m;
  }

  std::vector<double> predict(std::span<const double> x) const {
    if (kind == TaskKind::Regression) return {boosters[0].raw(x)};
    if (kind == TaskKind::Binary) return {sigmoid(boosters[0].raw(x))};
    std::vector<double> p(boosters.size());
    double s = 0;
    for (std::size_t k = 0; k < boosters.size(); ++k) s += p[k] = sigmoid(boosters[k].raw(x));
    for (auto& v : p) v = s > 0 ? v / s : 1.0 / static_cast<double>(p.size());
    return p;
  }

  nlohmann::json to_json() const {
    nlohmann::json b = nlohmann::json::array();
    for (const auto& x : boosters) b.push_back(x.to_json());
    return {{"boosters", b}};
  }
  static GbtModel from_json(const nlohmann::json& j, TaskKind kind) {
    GbtModel m;
    m.kind = kind;
    for (const auto& b : j.at("boosters")) m.boosters.push_back(Booster::from_json(b));
    return m;
  }
};

}  // namespace msprog::models
