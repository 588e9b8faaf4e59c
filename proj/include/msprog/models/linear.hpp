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

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "msprog/error.hpp"
#include "msprog/models/dataset.hpp"
#include "msprog/models/loss.hpp"

namespace msprog::models {

inline constexpr double kLinearRidge = 1e-8;

/// Ordinary least squares via the normal equations on centred inputs, with a
/// tiny ridge for rank-deficient designs. The intercept is unpenalized.
struct LinearRegression {
  std::vector<double> coef;
  double intercept = 0.0;

  static LinearRegression fit(const Dataset& d, double ridge = kLinearRidge) {
    const auto n = static_cast<Eigen::Index>(d.n);
    const auto p = static_cast<Eigen::Index>(d.example_size());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(d.x.data(), n, p);
    Eigen::Map<const Eigen::VectorXd> y(d.y.data(), n);
    const Eigen::RowVectorXd xm = X.colwise().mean();
    const double ym = y.mean();
    const Eigen::MatrixXd Xc = X.rowwise() - xm;
    Eigen::MatrixXd A = Xc.transpose() * Xc;
    A.diagonal().array() += ridge;
    const Eigen::VectorXd w = A.ldlt().solve(Xc.transpose() * (y.array() - ym).matrix());
    LinearRegression m;
    m.coef.assign(w.data(), w.data() + w.size());
    m.intercept = ym - xm.dot(w);
    if (!std::isfinite(m.intercept)) throw internal_error("NONCONVERGENCE", "linear solve produced non-finite values");
    return m;
  }

  double predict(std::span<const double> x) const {
    double s = intercept;
    for (std::size_t j = 0; j < coef.size(); ++j) s += coef[j] * x[j];
    return s;
  }

  nlohmann::json to_json() const { return {{"coef", coef}, {"intercept", intercept}}; }
  static LinearRegression from_json(const nlohmann::json& j) {
    LinearRegression m;
    m.coef = j.at("coef").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    return m;
  }
};

/// Binary objective C * sum_i CE_i + 0.5 ||w||^2 on standardized inputs.
/// theta = (w_1..w_p, b). Writes the gradient when `grad` is non-null.
inline double logistic_objective(std::span<const double> theta, const Dataset& d, const std::vector<double>& y01,
                                 double C, std::vector<double>* grad) {
  const std::size_t p = d.example_size();
  double J = 0.0;
  if (grad) grad->assign(p + 1, 0.0);
  for (std::size_t i = 0; i < d.n; ++i) {
    auto x = d.example(i);
    double z = theta[p];
    for (std::size_t j = 0; j < p; ++j) z += theta[j] * x[j];
    const double pr = sigmoid(z);
    const double s = y01[i] > 0.5 ? z : -z;
    J += C * (s >= 0 ? std::log1p(std::exp(-s)) : -s + std::log1p(std::exp(s)));
    if (grad) {
      const double r = C * (pr - y01[i]);
      for (std::size_t j = 0; j < p; ++j) (*grad)[j] += r * x[j];
      (*grad)[p] += r;
    }
  }
  for (std::size_t j = 0; j < p; ++j) {
    J += 0.5 * theta[j] * theta[j];
    if (grad) (*grad)[j] += theta[j];
  }
  return J;
}

struct BinaryLogistic {
  std::vector<double> coef;  // on standardized inputs
  double intercept = 0.0;
  bool converged = true;
  int iterations = 0;

  double decision(std::span<const double> xs) const {
    double z = intercept;
    for (std::size_t j = 0; j < coef.size(); ++j) z += coef[j] * xs[j];
    return z;
  }

  /// Damped Newton with Armijo backtracking.
  static BinaryLogistic fit(const Dataset& d, const std::vector<double>& y01, double C, int max_iter = 100) {
    const std::size_t p = d.example_size();
    const auto P = static_cast<Eigen::Index>(p + 1);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(P);
    std::vector<double> g;
    BinaryLogistic m;
    m.converged = false;
    double J = logistic_objective({theta.data(), p + 1}, d, y01, C, &g);
    for (int it = 0; it < max_iter; ++it) {
      m.iterations = it + 1;
      Eigen::Map<const Eigen::VectorXd> G(g.data(), P);
      const double gnorm = G.lpNorm<Eigen::Infinity>();
      if (gnorm < 1e-8 * std::max(1.0, C * static_cast<double>(d.n))) {
        m.converged = true;
        break;
      }
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(P, P);
      Eigen::VectorXd xa(P);
      for (std::size_t i = 0; i < d.n; ++i) {
        auto x = d.example(i);
        for (std::size_t j = 0; j < p; ++j) xa[static_cast<Eigen::Index>(j)] = x[j];
        xa[P - 1] = 1.0;
        const double pr = sigmoid(xa.dot(theta));
        H.selfadjointView<Eigen::Lower>().rankUpdate(xa, C * pr * (1.0 - pr));
      }
      H = H.selfadjointView<Eigen::Lower>();
      for (Eigen::Index j = 0; j + 1 < P; ++j) H(j, j) += 1.0;
      H(P - 1, P - 1) += 1e-10;
      const Eigen::VectorXd step = H.ldlt().solve(G);
      double t = 1.0;
      const double slope = G.dot(step);
      bool accepted = false;
      std::vector<double> g_new;
      for (int ls = 0; ls < 40; ++ls) {
        Eigen::VectorXd cand = theta - t * step;
        const double Jn = logistic_objective({cand.data(), p + 1}, d, y01, C, &g_new);
        if (Jn <= J - 1e-4 * t * slope) {
          theta = cand;
          J = Jn;
          g = g_new;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        m.converged = gnorm < 1e-5 * std::max(1.0, C * static_cast<double>(d.n));
        break;
      }
      if ((t * step).lpNorm<Eigen::Infinity>() < 1e-12) {
        m.converged = true;
        break;
      }
    }
    m.coef.assign(theta.data(), theta.data() + p);
    m.intercept = theta[P - 1];
    return m;
  }

  nlohmann::json to_json() const { return {{"coef", coef}, {"intercept", intercept}}; }
  static BinaryLogistic from_json(const nlohmann::json& j) {
    BinaryLogistic m;
    m.coef = j.at("coef").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    return m;
  }
};

/// L2-regularized logistic regression (penalty strength 1/C) on standardized
/// inputs; multiclass is one-vs-rest with normalized probabilities.
struct LogisticRegression {
  Standardizer scaler;
  std::vector<BinaryLogistic> members;  // one for binary tasks
  TaskKind kind = TaskKind::Binary;
  bool converged = true;

  static LogisticRegression fit(const Dataset& raw, double C, int max_iter = 100) {
    if (raw.kind == TaskKind::Regression)
      throw config_error("INCOMPATIBLE_MODEL", "logistic regression needs a classification task");
    if (!(C > 0)) throw config_error("INVALID_HYPERPARAMETER", "C must be positive");
    LogisticRegression m;
    m.kind = raw.kind;
    m.scaler = Standardizer::fit(raw);
    const Dataset d = m.scaler.transformed(raw);
    const int K = raw.kind == TaskKind::Binary ? 1 : raw.n_classes;
    for (int k = 0; k < K; ++k) {
      std::vector<double> y01(d.n);
      const int positive = raw.kind == TaskKind::Binary ? 1 : k;
      for (std::size_t i = 0; i < d.n; ++i) y01[i] = static_cast<int>(d.y[i]) == positive ? 1.0 : 0.0;
      m.members.push_back(BinaryLogistic::fit(d, y01, C, max_iter));
      m.converged = m.converged && m.members.back().converged;
    }
    return m;
  }

  std::vector<double> predict(std::span<const double> x) const {
    std::vector<double> xs(x.begin(), x.end());
    for (std::size_t j = 0; j < xs.size(); ++j) xs[j] = (xs[j] - scaler.mean[j]) / scaler.scale[j];
    if (kind == TaskKind::Binary) return {sigmoid(members[0].decision(xs))};
    std::vector<double> p(members.size());
    double s = 0;
    for (std::size_t k = 0; k < members.size(); ++k) s += p[k] = sigmoid(members[k].decision(xs));
    for (auto& v : p) v = s > 0 ? v / s : 1.0 / static_cast<double>(p.size());
    return p;
  }

  nlohmann::json to_json() const {
    nlohmann::json mem = nlohmann::json::array();
    for (const auto& b : members) mem.push_back(b.to_json());
    return {{"mean", scaler.mean}, {"scale", scaler.scale}, {"members", mem}, {"converged", converged}};
  }
  static LogisticRegression from_json(const nlohmann::json& j, TaskKind kind) {
    LogisticRegression m;
    m.kind = kind;
    m.scaler.mean = j.at("mean").get<std::vector<double>>();
    m.scaler.scale = j.at("scale").get<std::vector<double>>();
    for (const auto& b : j.at("members")) m.members.push_back(BinaryLogistic::from_json(b));
    m.converged = j.value("converged", true);
    return m;
  }
};

}  // namespace msprog::models
