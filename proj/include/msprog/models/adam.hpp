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
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "msprog/log.hpp"
#include "msprog/random.hpp"

namespace msprog::models {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::size_t n, AdamOptions opts) : opts_(opts), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double b1t = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double b2t = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * grad[i];
      v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * grad[i] * grad[i];
      const double mh = m_[i] / b1t;
      const double vh = v_[i] / b2t;
      params[i] -= opts_.learning_rate * mh / (std::sqrt(vh) + opts_.epsilon);
    }
  }

  long steps() const { return t_; }

 private:
  AdamOptions opts_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct TrainingOptions {
  AdamOptions adam;
  std::size_t batch_size = 64;
  int max_epochs = 100;
  int patience = 10;
};

struct TrainingResult {
  int epochs = 0;
  double best_validation = std::numeric_limits<double>::quiet_NaN();
  double final_training = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
};

/// Mini-batch Adam with early stopping. `batch_loss(indices, grad)` returns the
/// mean loss over the batch and writes its gradient; `validation_loss()`
/// returns nullopt when there is no validation data, in which case training
/// runs for the full epoch budget. The best validation parameters are kept.
inline TrainingResult train_minibatch(
    std::vector<double>& params, std::size_t n_train,
    const std::function<double(std::span<const std::size_t>, std::vector<double>&)>& batch_loss,
    const std::function<std::optional<double>()>& validation_loss, const TrainingOptions& opts, CounterRng rng) {
  TrainingResult res;
  Adam adam(params.size(), opts.adam);
  std::vector<double> grad(params.size());
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
  std::vector<double> best = params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const std::size_t bs = std::max<std::size_t>(1, opts.batch_size);
  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0;
    for (std::size_t start = 0; start < n_train; start += bs) {
      const std::size_t end = std::min(n_train, start + bs);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double l = batch_loss(std::span<const std::size_t>(order.data() + start, end - start), grad);
      if (!std::isfinite(l)) {
        res.diverged = true;
        break;
      }
      total += l * static_cast<double>(end - start);
      adam.step(params, grad);
    }
    res.epochs = epoch + 1;
    if (res.diverged) break;
    res.final_training = total / static_cast<double>(std::max<std::size_t>(1, n_train));
    auto val = validation_loss();
    if (!val) continue;
    if (*val < best_val - 1e-12) {
      best_val = *val;
      best = params;
      since_best = 0;
    } else if (++since_best >= opts.patience) {
      log::debug("early stop at epoch " + std::to_string(epoch + 1));
      break;
    }
  }
  if (std::isfinite(best_val)) {
    params = best;
    res.best_validation = best_val;
  } else if (res.diverged) {
    params = best;
  }
  return res;
}

}  // namespace msprog::models
