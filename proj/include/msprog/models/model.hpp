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
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "msprog/error.hpp"
#include "msprog/log.hpp"
#include "msprog/metrics.hpp"
#include "msprog/models/dataset.hpp"
#include "msprog/models/gbt.hpp"
#include "msprog/models/linear.hpp"
#include "msprog/models/loss.hpp"
#include "msprog/models/mlp.hpp"
#include "msprog/models/tcn.hpp"
#include "msprog/random.hpp"

namespace msprog::models {

enum class ModelFamily { LinearRegression, LogisticRegression, MLP, GBTClassifier, GBTRegressor, TCN };

inline std::string_view to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::LinearRegression: return "LinearRegression";
    case ModelFamily::LogisticRegression: return "LogisticRegression";
    case ModelFamily::MLP: return "MLP";
    case ModelFamily::GBTClassifier: return "GBTClassifier";
    case ModelFamily::GBTRegressor: return "GBTRegressor";
    case ModelFamily::TCN: return "TCN";
  }
  return "MLP";
}

inline ModelFamily parse_family(std::string_view s) {
  for (auto f : {ModelFamily::LinearRegression, ModelFamily::LogisticRegression, ModelFamily::MLP,
                 ModelFamily::GBTClassifier, ModelFamily::GBTRegressor, ModelFamily::TCN})
    if (to_string(f) == s) return f;
  throw config_error("UNKNOWN_MODEL_FAMILY", "unknown model family " + std::string(s));
}

inline bool supports(ModelFamily f, TaskKind k) {
  switch (f) {
    case ModelFamily::LinearRegression:
    case ModelFamily::GBTRegressor: return k == TaskKind::Regression;
    case ModelFamily::LogisticRegression:
    case ModelFamily::GBTClassifier: return k != TaskKind::Regression;
    case ModelFamily::MLP:
    case ModelFamily::TCN: return true;
  }
  return false;
}

inline bool sequence_family(ModelFamily f) { return f == ModelFamily::TCN; }

/// Family plus hyperparameters (a JSON object; unset keys take defaults) and
/// loss. The task kind is taken from the training data.
struct ModelSpec {
  ModelFamily family = ModelFamily::LogisticRegression;
  nlohmann::json hyperparameters = nlohmann::json::object();
  LossSpec loss;

  /// Default loss for a task kind: MSE for regression, cross-entropy otherwise.
  static LossSpec default_loss(TaskKind k) {
    LossSpec l;
    l.kind = k == TaskKind::Regression ? LossKind::MSE : LossKind::CrossEntropy;
    return l;
  }

  void check(TaskKind kind) const {
    if (!supports(family, kind))
      throw config_error("INCOMPATIBLE_MODEL",
                         std::string(to_string(family)) + " does not support this task kind");
    if ((kind == TaskKind::Regression) != (loss.kind == LossKind::MSE))
      throw config_error("INCOMPATIBLE_LOSS", "mse loss is for regression only, and regression needs mse");
    if (loss.kind == LossKind::Focal && family != ModelFamily::MLP && family != ModelFamily::TCN)
      throw config_error("INCOMPATIBLE_LOSS", "focal loss is available for neural models only");
    if (loss.gamma < 0) throw config_error("INVALID_HYPERPARAMETER", "focal gamma must be >= 0");
    for (double a : loss.alpha)
      if (!(a >= 0)) throw config_error("INVALID_HYPERPARAMETER", "focal alpha must be >= 0");
    static const std::map<ModelFamily, std::vector<std::string>> known{
        {ModelFamily::LinearRegression, {"ridge"}},
        {ModelFamily::LogisticRegression, {"C", "max_iter"}},
        {ModelFamily::MLP, {"hidden_sizes", "learning_rate", "batch_size", "max_epochs", "patience"}},
        {ModelFamily::GBTClassifier, {"n_estimators", "learning_rate", "max_depth", "max_bins", "min_samples_leaf"}},
        {ModelFamily::GBTRegressor, {"n_estimators", "learning_rate", "max_depth", "max_bins", "min_samples_leaf"}},
        {ModelFamily::TCN,
         {"filters", "kernel", "levels", "learning_rate", "dropout", "batch_size", "max_epochs", "patience"}}};
    if (!hyperparameters.is_object()) throw config_error("INVALID_HYPERPARAMETER", "hyperparameters must be an object");
    const auto& allowed = known.at(family);
    for (const auto& [key, value] : hyperparameters.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        throw config_error("UNKNOWN_HYPERPARAMETER", std::string(to_string(family)) + " has no hyperparameter " + key);
      if (key == "hidden_sizes") {
        if (!value.is_array() || value.empty()) throw config_error("INVALID_HYPERPARAMETER", "hidden_sizes");
        for (const auto& v : value)
          if (!v.is_number_integer() || v.get<long>() < 1) throw config_error("INVALID_HYPERPARAMETER", "hidden_sizes");
        continue;
      }
      if (!value.is_number()) throw config_error("INVALID_HYPERPARAMETER", key + " must be numeric");
      const double v = value.get<double>();
      const bool ok = key == "dropout" ? (v >= 0 && v < 1) : key == "ridge" ? v >= 0 : v > 0;
      if (!ok) throw config_error("INVALID_HYPERPARAMETER", key + " out of range");
    }
  }

  template <typename T>
  T hp(const char* key, T fallback) const {
    return hyperparameters.contains(key) ? hyperparameters.at(key).get<T>() : fallback;
  }

  nlohmann::json to_json() const {
    nlohmann::json l{{"kind", to_string(loss.kind)}, {"gamma", loss.gamma}, {"alpha", loss.alpha}};
    return {{"family", to_string(family)}, {"hyperparameters", hyperparameters}, {"loss", l}};
  }

  static ModelSpec from_json(const nlohmann::json& j, std::optional<TaskKind> kind = std::nullopt) {
    ModelSpec s;
    s.family = parse_family(j.at("family").get<std::string>());
    s.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
    if (kind) s.loss = default_loss(*kind);
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      if (l.is_string()) {
        s.loss.kind = parse_loss(l.get<std::string>());
      } else {
        s.loss.kind = parse_loss(l.at("kind").get<std::string>());
        s.loss.gamma = l.value("gamma", 2.0);
        s.loss.alpha = l.value("alpha", std::vector<double>{});
      }
    }
    return s;
  }
};

/// Ordered hyperparameter axes; cells enumerate the cartesian product with the
/// last axis varying fastest.
struct HyperGrid {
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.second.size();
    return axes.empty() ? 1 : n;
  }

  std::vector<nlohmann::json> cells() const {
    std::vector<nlohmann::json> out{nlohmann::json::object()};
    for (const auto& [key, values] : axes) {
      std::vector<nlohmann::json> next;
      for (const auto& base : out)
        for (const auto& v : values) {
          auto c = base;
          c[key] = v;
          next.push_back(std::move(c));
        }
      out = std::move(next);
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [k, v] : axes) j.push_back({{"name", k}, {"values", v}});
    return j;
  }

  /// Accepts either [{"name":..,"values":[..]}, ...] (ordered) or an object
  /// mapping name -> values (key order).
  static HyperGrid from_json(const nlohmann::json& j) {
    HyperGrid g;
    if (j.is_array()) {
      for (const auto& a : j)
        g.axes.emplace_back(a.at("name").get<std::string>(), a.at("values").get<std::vector<nlohmann::json>>());
    } else if (j.is_object()) {
      for (const auto& [k, v] : j.items()) g.axes.emplace_back(k, v.get<std::vector<nlohmann::json>>());
    } else {
      throw config_error("INVALID_GRID", "grid must be an array or object");
    }
    for (const auto& a : g.axes)
      if (a.second.empty()) throw config_error("INVALID_GRID", "grid axis " + a.first + " has no values");
    return g;
  }
};

/// The published search space. Linear regression has no grid.
inline HyperGrid default_grid(ModelFamily f) {
  using J = nlohmann::json;
  HyperGrid g;
  switch (f) {
    case ModelFamily::LinearRegression: break;
    case ModelFamily::LogisticRegression: g.axes = {{"C", {J(1e-2), J(1e-1), J(1.0), J(1e1), J(1e2)}}}; break;
    case ModelFamily::MLP:
      g.axes = {{"hidden_sizes", {J::array({16, 16}), J::array({16, 16, 16}), J::array({32, 32})}},
                {"learning_rate", {J(0.001), J(0.01)}}};
      break;
    case ModelFamily::GBTClassifier:
    case ModelFamily::GBTRegressor:
      g.axes = {{"n_estimators", {J(100), J(150)}},
                {"learning_rate", {J(0.001), J(0.01)}},
                {"max_depth", {J(3), J(5)}}};
      break;
    case ModelFamily::TCN:
      g.axes = {{"filters", {J(16), J(32), J(64)}},
                {"kernel", {J(3), J(5)}},
                {"learning_rate", {J(0.001), J(0.05), J(0.01)}},
                {"dropout", {J(0.0), J(0.5)}}};
      break;
  }
  return g;
}

struct TrainingMetadata {
  int fold = -1;
  std::uint64_t seed = 0;
  int epochs = 0;
  std::string warning;  // e.g. NONCONVERGENCE
};

using ModelImpl = std::variant<LinearRegression, LogisticRegression, MlpModel, GbtModel, TcnModel>;

struct TrainedModel {
  ModelSpec spec;
  TaskKind kind = TaskKind::Regression;
  int n_classes = 0;
  std::string fingerprint;
  std::size_t steps = 1;
  std::size_t width = 0;
  TrainingMetadata metadata;
  ModelImpl impl;
};

inline MlpOptions mlp_options(const ModelSpec& s) {
  MlpOptions o;
  o.hidden = s.hp<std::vector<std::size_t>>("hidden_sizes", {16, 16});
  o.loss = s.loss;
  o.training.adam.learning_rate = s.hp<double>("learning_rate", 1e-3);
  o.training.batch_size = s.hp<std::size_t>("batch_size", 64);
  o.training.max_epochs = s.hp<int>("max_epochs", 100);
  o.training.patience = s.hp<int>("patience", 10);
  return o;
}

inline TcnOptions tcn_options(const ModelSpec& s) {
  TcnOptions o;
  o.filters = s.hp<std::size_t>("filters", 16);
  o.kernel = s.hp<std::size_t>("kernel", 3);
  o.levels = s.hp<std::size_t>("levels", 3);
  o.dropout = s.hp<double>("dropout", 0.0);
  o.loss = s.loss;
  o.training.adam.learning_rate = s.hp<double>("learning_rate", 1e-3);
  o.training.batch_size = s.hp<std::size_t>("batch_size", 64);
  o.training.max_epochs = s.hp<int>("max_epochs", 100);
  o.training.patience = s.hp<int>("patience", 10);
  return o;
}

inline GbtOptions gbt_options(const ModelSpec& s) {
  GbtOptions o;
  o.n_estimators = s.hp<int>("n_estimators", 100);
  o.learning_rate = s.hp<double>("learning_rate", 0.1);
  o.max_depth = s.hp<int>("max_depth", 3);
  o.max_bins = s.hp<std::size_t>("max_bins", 64);
  o.min_samples_leaf = s.hp<std::size_t>("min_samples_leaf", 1);
  return o;
}

/// Trains `spec` on `train`. `validation` (optional) drives early stopping
/// for neural models. Deterministic in (spec, data order, seed).
inline TrainedModel fit(const ModelSpec& spec, const Dataset& train, const Dataset* validation, std::uint64_t seed,
                        int fold = -1) {
  spec.check(train.kind);
  if (sequence_family(spec.family) != train.sequence())
    throw config_error("INCOMPATIBLE_MODEL", std::string(to_string(spec.family)) +
                                                  (train.sequence() ? " needs tabular input" : " needs sequence input"));
  if (validation && validation->fingerprint != train.fingerprint)
    throw data_error("FEATURE_SPACE_MISMATCH", "validation and training feature spaces differ");
  check_targets(train);
  TrainedModel m;
  m.spec = spec;
  m.kind = train.kind;
  m.n_classes = train.n_classes;
  m.fingerprint = train.fingerprint;
  m.steps = train.steps;
  m.width = train.width;
  m.metadata.fold = fold;
  m.metadata.seed = seed;
  switch (spec.family) {
    case ModelFamily::LinearRegression:
      m.impl = LinearRegression::fit(train, spec.hp<double>("ridge", kLinearRidge));
      break;
    case ModelFamily::LogisticRegression: {
      auto lr = LogisticRegression::fit(train, spec.hp<double>("C", 1.0), spec.hp<int>("max_iter", 100));
      if (!lr.converged) m.metadata.warning = "NONCONVERGENCE";
      m.impl = std::move(lr);
      break;
    }
    case ModelFamily::MLP: {
      auto mm = MlpModel::fit(train, validation, mlp_options(spec), seed);
      m.metadata.epochs = mm.training.epochs;
      if (mm.training.diverged) m.metadata.warning = "NONCONVERGENCE";
      m.impl = std::move(mm);
      break;
    }
    case ModelFamily::GBTClassifier:
    case ModelFamily::GBTRegressor: m.impl = GbtModel::fit(train, gbt_options(spec)); break;
    case ModelFamily::TCN: {
      auto tm = TcnModel::fit(train, validation, tcn_options(spec), seed);
      m.metadata.epochs = tm.training.epochs;
      if (tm.training.diverged) m.metadata.warning = "NONCONVERGENCE";
      m.impl = std::move(tm);
      break;
    }
  }
  if (!m.metadata.warning.empty())
    log::warn(std::string(to_string(spec.family)) + ": " + m.metadata.warning + " (returning best-so-far)");
  return m;
}

/// Per-instance score vectors: [value] for regression, [P(y=1)] for binary,
/// k class probabilities for multiclass.
inline std::vector<std::vector<double>> predict(const TrainedModel& m, const Dataset& d) {
  if (d.fingerprint != m.fingerprint || d.width != m.width || (d.n > 0 && d.steps != m.steps))
    throw data_error("FEATURE_SPACE_MISMATCH", "input feature space " + d.fingerprint + " does not match model " +
                                                   m.fingerprint);
  std::vector<std::vector<double>> out(d.n);
  std::visit(
      [&](const auto& impl) {
        using T = std::decay_t<decltype(impl)>;
        for (std::size_t i = 0; i < d.n; ++i) {
          if constexpr (std::is_same_v<T, LinearRegression>)
            out[i] = {impl.predict(d.example(i))};
          else
            out[i] = impl.predict(d.example(i));
        }
      },
      m.impl);
  return out;
}

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_to_json(const TrainedModel& m) {
  nlohmann::json params = std::visit([](const auto& impl) { return impl.to_json(); }, m.impl);
  return {{"format", "msprog-model"},
          {"version", kCheckpointVersion},
          {"spec", m.spec.to_json()},
          {"task_kind", m.kind == TaskKind::Regression ? "regression"
                        : m.kind == TaskKind::Binary   ? "binary"
                                                       : "multiclass"},
          {"n_classes", m.n_classes},
          {"fingerprint", m.fingerprint},
          {"steps", m.steps},
          {"width", m.width},
          {"metadata",
           {{"fold", m.metadata.fold},
            {"seed", m.metadata.seed},
            {"epochs", m.metadata.epochs},
            {"warning", m.metadata.warning}}},
          {"params", params}};
}

inline TrainedModel checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "msprog-model")
    throw data_error("CORRUPT_CHECKPOINT", "not a model checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw data_error("SCHEMA_VERSION_MISMATCH", "unsupported checkpoint version");
  TrainedModel m;
  m.spec = ModelSpec::from_json(j.at("spec"));
  const auto kind = j.at("task_kind").get<std::string>();
  m.kind = kind == "regression" ? TaskKind::Regression : kind == "binary" ? TaskKind::Binary : TaskKind::Multiclass;
  m.n_classes = j.at("n_classes").get<int>();
  m.fingerprint = j.at("fingerprint").get<std::string>();
  m.steps = j.at("steps").get<std::size_t>();
  m.width = j.at("width").get<std::size_t>();
  const auto& md = j.at("metadata");
  m.metadata.fold = md.at("fold").get<int>();
  m.metadata.seed = md.at("seed").get<std::uint64_t>();
  m.metadata.epochs = md.at("epochs").get<int>();
  m.metadata.warning = md.at("warning").get<std::string>();
  const auto& p = j.at("params");
  switch (m.spec.family) {
    case ModelFamily::LinearRegression: m.impl = LinearRegression::from_json(p); break;
    case ModelFamily::LogisticRegression: m.impl = LogisticRegression::from_json(p, m.kind); break;
    case ModelFamily::MLP: m.impl = MlpModel::from_json(p, m.kind); break;
    case ModelFamily::GBTClassifier:
    case ModelFamily::GBTRegressor: m.impl = GbtModel::from_json(p, m.kind); break;
    case ModelFamily::TCN: m.impl = TcnModel::from_json(p, m.kind); break;
  }
  return m;
}

/// Validation score, higher is better: AP (binary), macro AP (multiclass),
/// negative RMSE (regression). NaN when undefined.
inline double validation_score(const Dataset& d, const std::vector<std::vector<double>>& preds) {
  if (d.n == 0) return metrics::kNaN;
  if (d.kind == TaskKind::Regression) {
    std::vector<double> p(d.n);
    for (std::size_t i = 0; i < d.n; ++i) p[i] = preds[i][0];
    return -metrics::rmse(d.y, p);
  }
  if (d.kind == TaskKind::Binary) {
    std::vector<bool> t(d.n);
    std::vector<double> s(d.n);
    for (std::size_t i = 0; i < d.n; ++i) {
      t[i] = d.y[i] > 0.5;
      s[i] = preds[i][0];
    }
    return metrics::average_precision(t, s);
  }
  const auto k = static_cast<std::size_t>(d.n_classes);
  std::vector<int> t(d.n);
  std::vector<double> s(d.n * k);
  for (std::size_t i = 0; i < d.n; ++i) {
    t[i] = static_cast<int>(d.y[i]);
    for (std::size_t c = 0; c < k; ++c) s[i * k + c] = preds[i][c];
  }
  return metrics::macro_average_precision(t, s, k).value;
}

using MetricFn = std::function<double(const Dataset&, const std::vector<std::vector<double>>&)>;

struct GridCell {
  ModelSpec spec;
  double score = metrics::kNaN;
  bool failed = false;
  std::string error;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::size_t best = 0;
  std::size_t fits = 0;
  std::optional<TrainedModel> best_model;
  const ModelSpec& best_spec() const { return cells.at(best).spec; }
};

/// Exhaustive search: every cell is fit on `train` and scored on
/// `validation`. The best score wins; ties go to the earlier cell. Failed
/// cells (and NaN scores) are reported and skipped.
inline GridResult grid_search(const ModelSpec& base, const HyperGrid& grid, const Dataset& train,
                              const Dataset& validation, std::uint64_t seed, const MetricFn& metric = validation_score) {
  GridResult r;
  const auto cells = grid.cells();
  if (cells.empty()) throw config_error("INVALID_GRID", "empty grid");
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    GridCell cell;
    cell.spec = base;
    for (const auto& [k, v] : cells[c].items()) cell.spec.hyperparameters[k] = v;
    try {
      ++r.fits;
      auto m = fit(cell.spec, train, &validation, seed);
      cell.score = metric(validation, predict(m, validation));
      if (std::isfinite(cell.score) && cell.score > best) r.best_model = std::move(m);
    } catch (const Error& e) {
      cell.failed = true;
      cell.error = e.code() + ": " + e.what();
      log::warn("grid cell " + std::to_string(c) + " failed: " + cell.error);
    }
    if (!cell.failed && std::isfinite(cell.score) && cell.score > best) {
      best = cell.score;
      r.best = c;
      found = true;
    }
    r.cells.push_back(std::move(cell));
  }
  if (!found) {
    bool all_failed = true;
    for (const auto& c : r.cells) all_failed = all_failed && c.failed;
    if (all_failed) throw data_error("GRID_ALL_FAILED", "every grid cell failed: " + r.cells.front().error);
    r.best = 0;
    while (r.cells[r.best].failed) ++r.best;
    r.best_model = fit(r.cells[r.best].spec, train, &validation, seed);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Gradient checks

using Objective = std::function<double(std::span<const double>, std::vector<double>*)>;

/// Max over `coords` of |analytic - numeric| / max(|analytic|, |numeric|, floor),
/// with central differences at `step`.
inline double max_relative_gradient_error(const Objective& f, std::vector<double> theta,
                                          const std::vector<std::size_t>& coords, double step = 1e-5,
                                          double floor = 1e-8) {
  std::vector<double> grad;
  f(theta, &grad);
  double worst = 0;
  for (auto i : coords) {
    const double orig = theta[i];
    theta[i] = orig + step;
    const double fp = f(theta, nullptr);
    theta[i] = orig - step;
    const double fm = f(theta, nullptr);
    theta[i] = orig;
    const double num = (fp - fm) / (2 * step);
    const double denom = std::max({std::abs(grad[i]), std::abs(num), floor});
    worst = std::max(worst, std::abs(grad[i] - num) / denom);
  }
  return worst;
}

inline std::vector<std::size_t> sample_coordinates(std::size_t n, std::size_t max_coords, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n <= max_coords) return idx;
  CounterRng rng(seed, 0x67636b);
  rng.shuffle(idx);
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct GradientCheckOptions {
  double step = 1e-5;
  std::size_t max_coordinates = 256;
  std::uint64_t seed = 0;
};

/// Checks backprop for a differentiable family at parameters `theta` on
/// `batch` (raw inputs are used as-is). For LogisticRegression (binary), theta
/// is (w, b) and the objective is C * sum CE + 0.5 ||w||^2.
inline double numerical_gradient_check(const ModelSpec& spec, const Dataset& batch, const std::vector<double>& theta,
                                       const GradientCheckOptions& opts = {}) {
  Objective f;
  std::vector<std::size_t> all(batch.n);
  for (std::size_t i = 0; i < batch.n; ++i) all[i] = i;
  switch (spec.family) {
    case ModelFamily::LogisticRegression: {
      const double C = spec.hp<double>("C", 1.0);
      auto y01 = std::make_shared<std::vector<double>>(batch.y);
      f = [&batch, y01, C](std::span<const double> t, std::vector<double>* g) {
        return logistic_objective(t, batch, *y01, C, g);
      };
      break;
    }
    case ModelFamily::MLP: {
      MlpArch arch;
      arch.inputs = batch.example_size();
      arch.hidden = mlp_options(spec).hidden;
      arch.outputs = batch.outputs();
      if (theta.size() != arch.n_params()) throw config_error("INVALID_PARAMETERS", "mlp parameter count mismatch");
      const auto loss = spec.loss;
      f = [&batch, arch, loss, all](std::span<const double> t, std::vector<double>* g) {
        if (g) g->assign(t.size(), 0.0);
        return mlp_objective(arch, t, batch, all, loss, g);
      };
      break;
    }
    case ModelFamily::TCN: {
      const auto o = tcn_options(spec);
      TcnArch arch;
      arch.inputs = batch.width;
      arch.filters = o.filters;
      arch.kernel = o.kernel;
      arch.levels = o.levels;
      arch.outputs = batch.outputs();
      if (theta.size() != arch.n_params()) throw config_error("INVALID_PARAMETERS", "tcn parameter count mismatch");
      const auto loss = spec.loss;
      const double dropout = o.dropout;
      const std::uint64_t ds = derive_seed(opts.seed, 0x64726f70);
      f = [&batch, arch, loss, all, dropout, ds](std::span<const double> t, std::vector<double>* g) {
        if (g) g->assign(t.size(), 0.0);
        return tcn_objective(arch, t, batch, all, loss, dropout,
                             dropout > 0 ? std::optional<std::uint64_t>(ds) : std::nullopt, g);
      };
      break;
    }
    default: throw config_error("NOT_DIFFERENTIABLE", std::string(to_string(spec.family)) + " has no gradient");
  }
  return max_relative_gradient_error(f, theta, sample_coordinates(theta.size(), opts.max_coordinates, opts.seed),
                                     opts.step);
}

}  // namespace msprog::models
