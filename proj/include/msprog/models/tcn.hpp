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

/// Temporal convolutional network: `levels` residual blocks, each two dilated
/// causal convolutions (kernel k, dilation 2^level) with ReLU and dropout,
/// plus a 1x1 convolution on the skip path when the channel count changes.
/// The head reads the last timestep.
struct TcnArch {
  std::size_t inputs = 0;  // channels per timestep
  std::size_t filters = 16;
  std::size_t kernel = 3;
  std::size_t levels = 3;
  std::size_t outputs = 1;

  std::size_t dilation(std::size_t level) const { return std::size_t{1} << level; }

  /// Inputs at offset R-1 before the last step reach the output; offset R
  /// and beyond do not.
  std::size_t receptive_field() const {
    std::size_t sum = 0;
    for (std::size_t l = 0; l < levels; ++l) sum += dilation(l);
    return 1 + 2 * (kernel - 1) * sum;
  }

  struct LevelLayout {
    std::size_t in = 0;
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, wd = 0, bd = 0;
    bool downsample = false;
  };

  std::vector<LevelLayout> layout(std::size_t* head = nullptr, std::size_t* total = nullptr) const {
    std::vector<LevelLayout> out(levels);
    std::size_t off = 0;
    for (std::size_t l = 0; l < levels; ++l) {
      auto& L = out[l];
      L.in = l == 0 ? inputs : filters;
      L.w1 = off;
      off += filters * L.in * kernel;
      L.b1 = off;
      off += filters;
      L.w2 = off;
      off += filters * filters * kernel;
      L.b2 = off;
      off += filters;
      L.downsample = L.in != filters;
      if (L.downsample) {
        L.wd = off;
        off += filters * L.in;
        L.bd = off;
        off += filters;
      }
    }
    if (head) *head = off;
    off += outputs * filters + outputs;
    if (total) *total = off;
    return out;
  }

  std::size_t n_params() const {
    std::size_t total = 0;
    layout(nullptr, &total);
    return total;
  }

  std::vector<double> init(CounterRng& rng) const {
    std::size_t head = 0;
    const auto lay = layout(&head);
    std::vector<double> p(n_params(), 0.0);
    for (const auto& L : lay) {
      const double s1 = std::sqrt(2.0 / static_cast<double>(L.in * kernel));
      for (std::size_t i = 0; i < filters * L.in * kernel; ++i) p[L.w1 + i] = rng.normal(0.0, s1);
      const double s2 = std::sqrt(2.0 / static_cast<double>(filters * kernel));
      for (std::size_t i = 0; i < filters * filters * kernel; ++i) p[L.w2 + i] = rng.normal(0.0, s2);
      if (L.downsample) {
        const double sd = std::sqrt(1.0 / static_cast<double>(L.in));
        for (std::size_t i = 0; i < filters * L.in; ++i) p[L.wd + i] = rng.normal(0.0, sd);
      }
    }
    const double sh = std::sqrt(1.0 / static_cast<double>(filters));
    for (std::size_t i = 0; i < outputs * filters; ++i) p[head + i] = rng.normal(0.0, sh);
    return p;
  }

  struct LevelCache {
    std::vector<double> in;        // T x in
    std::vector<double> h1, h2;    // post-ReLU, pre-dropout, T x filters
    std::vector<double> m1, m2;    // dropout scale (empty when disabled)
    std::vector<double> out;       // T x filters
  };

  struct Cache {
    std::size_t steps = 0;
    std::vector<LevelCache> levels;
    std::vector<double> z;
  };

  /// y[t][o] = b[o] + sum_{i,j} W[o][i][j] * x[t - (k-1-j) d][i], with
  /// out-of-range (pre-sequence) inputs treated as zero.
  static void conv(const double* W, const double* b, std::span<const double> x, std::size_t T, std::size_t in,
                   std::size_t out, std::size_t k, std::size_t d, std::vector<double>& y) {
    y.assign(T * out, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      double* yt = y.data() + t * out;
      for (std::size_t o = 0; o < out; ++o) yt[o] = b[o];
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t back = (k - 1 - j) * d;
        if (back > t) continue;
        const double* xs = x.data() + (t - back) * in;
        for (std::size_t o = 0; o < out; ++o) {
          const double* w = W + (o * in) * k + j;
          double s = 0;
          for (std::size_t i = 0; i < in; ++i) s += w[i * k] * xs[i];
          yt[o] += s;
        }
      }
    }
  }

  static void conv_backward(const double* W, std::span<const double> x, const std::vector<double>& gy, std::size_t T,
                            std::size_t in, std::size_t out, std::size_t k, std::size_t d, double* gW, double* gb,
                            std::vector<double>* gx) {
    if (gx) gx->assign(T * in, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double* g = gy.data() + t * out;
      bool any = false;
      for (std::size_t o = 0; o < out; ++o) {
        gb[o] += g[o];
        any = any || g[o] != 0.0;
      }
      if (!any) continue;
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t back = (k - 1 - j) * d;
        if (back > t) continue;
        const double* xs = x.data() + (t - back) * in;
        double* gxs = gx ? gx->data() + (t - back) * in : nullptr;
        for (std::size_t o = 0; o < out; ++o) {
          const double go = g[o];
          if (go == 0.0) continue;
          const std::size_t base = (o * in) * k + j;
          for (std::size_t i = 0; i < in; ++i) {
            gW[base + i * k] += go * xs[i];
            if (gxs) gxs[i] += go * W[base + i * k];
          }
        }
      }
    }
  }

  /// Forward pass over x [T x inputs]. `dropout_rng` enables inverted dropout.
  void forward(std::span<const double> params, std::span<const double> x, std::size_t T, double dropout,
               CounterRng* dropout_rng, Cache& c) const {
    std::size_t head = 0;
    const auto lay = layout(&head);
    c.steps = T;
    c.levels.resize(levels);
    std::vector<double> cur(x.begin(), x.end());
    const bool drop = dropout_rng != nullptr && dropout > 0.0;
    const double keep_scale = drop ? 1.0 / (1.0 - dropout) : 1.0;
    auto make_mask = [&](std::vector<double>& m) {
      if (!drop) {
        m.clear();
        return;
      }
      m.resize(T * filters);
      for (auto& v : m) v = dropout_rng->uniform() < dropout ? 0.0 : keep_scale;
    };
    std::vector<double> tmp;
    for (std::size_t l = 0; l < levels; ++l) {
      const auto& L = lay[l];
      auto& lc = c.levels[l];
      lc.in = cur;
      const std::size_t d = dilation(l);
      conv(params.data() + L.w1, params.data() + L.b1, lc.in, T, L.in, filters, kernel, d, lc.h1);
      for (auto& v : lc.h1) v = std::max(0.0, v);
      make_mask(lc.m1);
      tmp = lc.h1;
      if (!lc.m1.empty())
        for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] *= lc.m1[i];
      conv(params.data() + L.w2, params.data() + L.b2, tmp, T, filters, filters, kernel, d, lc.h2);
      for (auto& v : lc.h2) v = std::max(0.0, v);
      make_mask(lc.m2);
      lc.out.assign(T * filters, 0.0);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t o = 0; o < filters; ++o) {
          double res;
          if (L.downsample) {
            res = params[L.bd + o];
            const double* w = params.data() + L.wd + o * L.in;
            const double* xi = lc.in.data() + t * L.in;
            for (std::size_t i = 0; i < L.in; ++i) res += w[i] * xi[i];
          } else {
            res = lc.in[t * filters + o];
          }
          double h = lc.h2[t * filters + o];
          if (!lc.m2.empty()) h *= lc.m2[t * filters + o];
          lc.out[t * filters + o] = std::max(0.0, h + res);
        }
      cur = lc.out;
    }
    c.z.assign(outputs, 0.0);
    const double* last = cur.data() + (T - 1) * filters;
    for (std::size_t o = 0; o < outputs; ++o) {
      double z = params[head + outputs * filters + o];
      for (std::size_t i = 0; i < filters; ++i) z += params[head + o * filters + i] * last[i];
      c.z[o] = z;
    }
  }

  void backward(std::span<const double> params, const Cache& c, std::span<const double> gz,
                std::span<double> grad) const {
    std::size_t head = 0;
    const auto lay = layout(&head);
    const std::size_t T = c.steps;
    std::vector<double> g(T * filters, 0.0);
    const auto& top = c.levels.back().out;
    for (std::size_t o = 0; o < outputs; ++o) {
      grad[head + outputs * filters + o] += gz[o];
      for (std::size_t i = 0; i < filters; ++i) {
        grad[head + o * filters + i] += gz[o] * top[(T - 1) * filters + i];
        g[(T - 1) * filters + i] += gz[o] * params[head + o * filters + i];
      }
    }
    std::vector<double> g_sum, g_pre2, g_d1, g_in, tmp;
    for (std::size_t l = levels; l-- > 0;) {
      const auto& L = lay[l];
      const auto& lc = c.levels[l];
      const std::size_t d = dilation(l);
      g_sum.assign(T * filters, 0.0);
      for (std::size_t i = 0; i < T * filters; ++i) g_sum[i] = lc.out[i] > 0.0 ? g[i] : 0.0;
      // skip path
      g_in.assign(T * L.in, 0.0);
      if (L.downsample) {
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t o = 0; o < filters; ++o) {
            const double go = g_sum[t * filters + o];
            if (go == 0.0) continue;
            grad[L.bd + o] += go;
            const double* xi = lc.in.data() + t * L.in;
            for (std::size_t i = 0; i < L.in; ++i) {
              grad[L.wd + o * L.in + i] += go * xi[i];
              g_in[t * L.in + i] += go * params[L.wd + o * L.in + i];
            }
          }
      } else {
        for (std::size_t i = 0; i < T * filters; ++i) g_in[i] += g_sum[i];
      }
      // conv2
      g_pre2.assign(T * filters, 0.0);
      for (std::size_t i = 0; i < T * filters; ++i) {
        double gh = g_sum[i];
        if (!lc.m2.empty()) gh *= lc.m2[i];
        g_pre2[i] = lc.h2[i] > 0.0 ? gh : 0.0;
      }
      tmp = lc.h1;
      if (!lc.m1.empty())
        for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] *= lc.m1[i];
      conv_backward(params.data() + L.w2, tmp, g_pre2, T, filters, filters, kernel, d, grad.data() + L.w2,
                    grad.data() + L.b2, &g_d1);
      // conv1
      for (std::size_t i = 0; i < T * filters; ++i) {
        double gh = g_d1[i];
        if (!lc.m1.empty()) gh *= lc.m1[i];
        g_d1[i] = lc.h1[i] > 0.0 ? gh : 0.0;
      }
      std::vector<double> g_x;
      conv_backward(params.data() + L.w1, lc.in, g_d1, T, L.in, filters, kernel, d, grad.data() + L.w1,
                    grad.data() + L.b1, l > 0 ? &g_x : nullptr);
      if (l > 0) {
        for (std::size_t i = 0; i < g_in.size(); ++i) g_in[i] += g_x[i];
        g = g_in;
      }
    }
  }
};

/// Mean loss over `idx`. With dropout > 0, masks are drawn from a stream keyed
/// by (dropout_seed, example index) so the objective is a pure function.
inline double tcn_objective(const TcnArch& arch, std::span<const double> params, const Dataset& d,
                            std::span<const std::size_t> idx, const LossSpec& loss, double dropout,
                            std::optional<std::uint64_t> dropout_seed, std::vector<double>* grad) {
  TcnArch::Cache cache;
  std::vector<double> gz(arch.outputs);
  double total = 0;
  const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(1, idx.size()));
  for (auto i : idx) {
    std::optional<CounterRng> rng;
    if (dropout_seed) rng.emplace(*dropout_seed, i);
    arch.forward(params, d.example(i), d.steps, dropout, rng ? &*rng : nullptr, cache);
    total += head_loss(cache.z, d.y[i], d.kind, loss, gz);
    if (grad) {
      for (auto& v : gz) v *= inv;
      arch.backward(params, cache, gz, *grad);
    }
  }
  return total * inv;
}

struct TcnOptions {
  std::size_t filters = 16;
  std::size_t kernel = 3;
  std::size_t levels = 3;
  double dropout = 0.0;
  LossSpec loss;
  TrainingOptions training;
};

struct TcnModel {
  TcnArch arch;
  Standardizer scaler;
  std::vector<double> params;
  TaskKind kind = TaskKind::Regression;
  std::size_t steps = 0;
  TrainingResult training;

  static TcnModel fit(const Dataset& raw_train, const Dataset* raw_val, const TcnOptions& opts, std::uint64_t seed) {
    if (raw_train.steps < 1) throw data_error("EMPTY_SEQUENCE", "tcn needs at least one timestep");
    TcnModel m;
    m.kind = raw_train.kind;
    m.steps = raw_train.steps;
    m.arch.inputs = raw_train.width;
    m.arch.filters = opts.filters;
    m.arch.kernel = opts.kernel;
    m.arch.levels = opts.levels;
    m.arch.outputs = raw_train.outputs();
    m.scaler = Standardizer::fit(raw_train);
    const Dataset tr = m.scaler.transformed(raw_train);
    std::optional<Dataset> va;
    if (raw_val && raw_val->n > 0) va = m.scaler.transformed(*raw_val);
    CounterRng rng(seed, 0x74636e);
    m.params = m.arch.init(rng);
    std::vector<std::size_t> val_idx;
    if (va) {
      val_idx.resize(va->n);
      for (std::size_t i = 0; i < va->n; ++i) val_idx[i] = i;
    }
    std::uint64_t batch_counter = 0;
    m.training = train_minibatch(
        m.params, tr.n,
        [&](std::span<const std::size_t> b, std::vector<double>& g) {
          const auto ds = derive_seed(seed, 0x64726f70, batch_counter++);
          return tcn_objective(m.arch, m.params, tr, b, opts.loss, opts.dropout, ds, &g);
        },
        [&]() -> std::optional<double> {
          if (!va) return std::nullopt;
          return tcn_objective(m.arch, m.params, *va, val_idx, opts.loss, 0.0, std::nullopt, nullptr);
        },
        opts.training, CounterRng(seed, 0x74636e + 1));
    return m;
  }

  std::vector<double> predict(std::span<const double> x) const {
    std::vector<double> xs(x.begin(), x.end());
    const std::size_t w = arch.inputs;
    for (std::size_t r = 0; r < steps; ++r)
      for (std::size_t j = 0; j < w; ++j) xs[r * w + j] = (xs[r * w + j] - scaler.mean[j]) / scaler.scale[j];
    TcnArch::Cache cache;
    arch.forward(params, xs, steps, 0.0, nullptr, cache);
    return head_scores(cache.z, kind);
  }

  nlohmann::json to_json() const {
    return {{"inputs", arch.inputs}, {"filters", arch.filters}, {"kernel", arch.kernel}, {"levels", arch.levels},
            {"outputs", arch.outputs}, {"steps", steps},          {"mean", scaler.mean},   {"scale", scaler.scale},
            {"params", params},        {"epochs", training.epochs}};
  }
  static TcnModel from_json(const nlohmann::json& j, TaskKind kind) {
    TcnModel m;
    m.kind = kind;
    m.arch.inputs = j.at("inputs").get<std::size_t>();
    m.arch.filters = j.at("filters").get<std::size_t>();
    m.arch.kernel = j.at("kernel").get<std::size_t>();
    m.arch.levels = j.at("levels").get<std::size_t>();
    m.arch.outputs = j.at("outputs").get<std::size_t>();
    m.steps = j.at("steps").get<std::size_t>();
    m.scaler.mean = j.at("mean").get<std::vector<double>>();
    m.scaler.scale = j.at("scale").get<std::vector<double>>();
    m.params = j.at("params").get<std::vector<double>>();
    m.training.epochs = j.value("epochs", 0);
    if (m.params.size() != m.arch.n_params()) throw data_error("CORRUPT_CHECKPOINT", "tcn parameter count mismatch");
    return m;
  }
};

}  // namespace msprog::models
