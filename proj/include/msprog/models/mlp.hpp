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
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "msprog/models/adam.hpp"
#include "msprog/models/dataset.hpp"
#include "msprog/models/loss.hpp"
#include "msprog/random.hpp"

namespace msprog::models {

/// Fully connected ReLU network. Parameters are stored flat, layer by layer:
/// W (out x in, row-major) then b (out).
struct MlpArch {
  std::size_t inputs = 0;
  std::vector<std::size_t> hidden;
  std::size_t outputs = 1;

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s{inputs};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(outputs);
    return s;
  }

  std::size_t n_params() const {
    const auto s = sizes();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < s.size(); ++l) n += s[l + 1] * s[l] + s[l + 1];
    return n;
  }

  /// He-normal weights, zero biases.
  std::vector<double> init(CounterRng& rng) const {
    std::vector<double> p;
    p.reserve(n_params());
    const auto s = sizes();
    for (std::size_t l = 0; l + 1 < s.size(); ++l) {
      const double sd = std::sqrt(2.0 / static_cast<double>(std::max<std::size_t>(1, s[l])));
      for (std::size_t i = 0; i < s[l + 1] * s[l]; ++i) p.push_back(rng.normal(0.0, sd));
      for (std::size_t i = 0; i < s[l + 1]; ++i) p.push_back(0.0);
    }
    return p;
  }

  /// Forward pass; `acts[l]` holds post-activation outputs of layer l
  /// (acts[0] is the input, the last entry the raw head outputs).
  void forward(std::span<const double> params, std::span<const double> x,
               std::vector<std::vector<double>>& acts) const {
    const auto s = sizes();
    acts.resize(s.size());
    acts[0].assign(x.begin(), x.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < s.size(); ++l) {
      const std::size_t in = s[l], out = s[l + 1];
      const double* W = params.data() + off;
      const double* b = W + out * in;
      auto& a = acts[l + 1];
      a.assign(out, 0.0);
      const auto& prev = acts[l];
      for (std::size_t o = 0; o < out; ++o) {
        double z = b[o];
        const double* row = W + o * in;
        for (std::size_t i = 0; i < in; ++i) z += row[i] * prev[i];
        a[o] = (l + 2 < s.size()) ? std::max(0.0, z) : z;
      }
      off += out * in + out;
    }
  }

  /// Accumulates d loss / d params given head-output gradient `gz`.
  void backward(std::span<const double> params, const std::vector<std::vector<double>>& acts,
                std::vector<double> gz, std::span<double> grad) const {
    const auto s = sizes();
    std::vector<std::size_t> offs(s.size() - 1);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < s.size(); ++l) {
      offs[l] = off;
      off += s[l + 1] * s[l] + s[l + 1];
    }
    std::vector<double> g = std::move(gz);
    for (std::size_t l = s.size() - 1; l-- > 0;) {
      const std::size_t in = s[l], out = s[l + 1];
      const double* W = params.data() + offs[l];
      double* gW = grad.data() + offs[l];
      double* gb = gW + out * in;
      const auto& prev = acts[l];
      std::vector<double> gprev(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double go = g[o];
        if (go == 0.0) continue;
        gb[o] += go;
        double* grow = gW + o * in;
        const double* row = W + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          grow[i] += go * prev[i];
          gprev[i] += go * row[i];
        }
      }
      if (l > 0)
        for (std::size_t i = 0; i < in; ++i)
          if (prev[i] <= 0.0) gprev[i] = 0.0;
      g = std::move(gprev);
    }
  }
};

/// Mean loss over `idx` and its gradient (written into `grad`, which must be
/// zeroed by the caller).
inline double mlp_objective(const MlpArch& arch, std::span<const double> params, const Dataset& d,
                            std::span<const std::size_t> idx, const LossSpec& loss, std::vector<double>* grad) {
  std::vector<std::vector<double>> acts;
  std::vector<double> gz(arch.outputs);
  double total = 0;
  const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(1, idx.size()));
  for (auto i : idx) {
    arch.forward(params, d.example(i), acts);
    total += head_loss(acts.back(), d.y[i], d.kind, loss, gz);
    if (grad) {
      for (auto& v : gz) v *= inv;
      arch.backward(params, acts, gz, *grad);
    }
  }
  return total * inv;
}

struct MlpOptions {
  std::vector<std::size_t> hidden{64};
  LossSpec loss;
  TrainingOptions training;
};

struct MlpModel {
  MlpArch arch;
  Standardizer scaler;
  std::vector<double> params;
  TaskKind kind = TaskKind::Regression;
  TrainingResult training;

  static MlpModel fit(const Dataset& raw_train, const Dataset* raw_val, const MlpOptions& opts, std::uint64_t seed) {
    MlpModel m;
    m.kind = raw_train.kind;
    m.arch.inputs = raw_train.example_size();
    m.arch.hidden = opts.hidden;
    m.arch.outputs = raw_train.outputs();
    m.scaler = Standardizer::fit(raw_train);
    const Dataset tr = m.scaler.transformed(raw_train);
    std::optional<Dataset> va;
    if (raw_val && raw_val->n > 0) va = m.scaler.transformed(*raw_val);
    CounterRng rng(seed, 0x6d6c70);
    m.params = m.arch.init(rng);
    std::vector<std::size_t> val_idx;
    if (va) {
      val_idx.resize(va->n);
      for (std::size_t i = 0; i < va->n; ++i) val_idx[i] = i;
    }
    m.training = train_minibatch(
        m.params, tr.n,
        [&](std::span<const std::size_t> b, std::vector<double>& g) {
          return mlp_objective(m.arch, m.params, tr, b, opts.loss, &g);
        },
        [&]() -> std::optional<double> {
          if (!va) return std::nullopt;
          return mlp_objective(m.arch, m.params, *va, val_idx, opts.loss, nullptr);
        },
        opts.training, CounterRng(seed, 0x6d6c70 + 1));
    return m;
  }

  std::vector<double> predict(std::span<const double> x) const {
    std::vector<double> xs(x.begin(), x.end());
    for (std::size_t j = 0; j < xs.size(); ++j) xs[j] = (xs[j] - scaler.mean[j]) / scaler.scale[j];
    std::vector<std::vector<double>> acts;
    arch.forward(params, xs, acts);
    return head_scores(acts.back(), kind);
  }

  nlohmann::json to_json() const {
    return {{"inputs", arch.inputs}, {"hidden", arch.hidden}, {"outputs", arch.outputs}, {"mean", scaler.mean},
            {"scale", scaler.scale}, {"params", params}, {"epochs", training.epochs}};
  }
  static MlpModel from_json(const nlohmann::json& j, TaskKind kind) {
    MlpModel m;
    m.kind = kind;
    m.arch.inputs = j.at("inputs").get<std::size_t>();
    m.arch.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    m.arch.outputs = j.at("outputs").get<std::size_t>();
    m.scaler.mean = j.at("mean").get<std::vector<double>>();
    m.scaler.scale = j.at("scale").get<std::vector<double>>();
    m.params = j.at("params").get<std::vector<double>>();
    m.training.epochs = j.value("epochs", 0);
    if (m.params.size() != m.arch.n_params()) throw data_error("CORRUPT_CHECKPOINT", "mlp parameter count mismatch");
    return m;
  }
};

}  // namespace msprog::models
