/* Copyright 2026 The Recalprune Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "recalprune/trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "recalprune/errors.h"
#include "recalprune/kernels.h"

namespace recalprune {
namespace {

template <typename T>
int64_t count_correct(const Tensor<T>& logits,
                      std::span<const int32_t> labels) {
  const int64_t n = logits.dim(0), k = logits.dim(1);
  int64_t correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    const T* row = logits.data() + i * k;
    const int64_t pred = std::max_element(row, row + k) - row;
    if (pred == labels[static_cast<size_t>(i)]) ++correct;
  }
  return correct;
}

// Visits every trainable tensor of layer i in a fixed order.
template <typename T, typename Fn>
void for_each_trainable(LayerParams<T>& p, const LayerGrads<T>& g, Fn&& fn) {
  if (!p.weight.empty()) fn(p.weight.values(), g.weight.values());
  if (!p.bias.empty()) fn(p.bias.values(), g.bias.values());
  if (p.bn) {
    fn(std::span<T>(p.bn->gamma), std::span<const T>(g.gamma));
    fn(std::span<T>(p.bn->beta), std::span<const T>(g.beta));
  }
}

}  // namespace

double LrSchedule::rate(double base_lr, int epoch) const {
  double lr = base_lr;
  for (int m : milestones) {
    if (epoch >= m) lr *= decay;
  }
  return lr;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (!(base_lr >= 0)) throw ConfigError("base_lr must be non-negative");
  if (!(momentum >= 0 && momentum < 1)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (!(schedule.decay > 0)) throw ConfigError("lr decay must be positive");
  for (size_t i = 0; i < schedule.milestones.size(); ++i) {
    const int m = schedule.milestones[i];
    if (m <= 0 || m >= epochs) {
      throw ConfigError("lr milestone " + std::to_string(m) +
                        " must lie in (0, epochs)");
    }
    if (i > 0 && m <= schedule.milestones[i - 1]) {
      throw ConfigError("lr milestones must be strictly increasing");
    }
  }
}

TrainConfig TrainConfig::desk_default(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.schedule.milestones.clear();
  for (double frac : {0.6, 0.85}) {
    const int m = static_cast<int>(std::floor(frac * epochs));
    if (m > 0 && m < epochs &&
        (c.schedule.milestones.empty() || m > c.schedule.milestones.back())) {
      c.schedule.milestones.push_back(m);
    }
  }
  return c;
}

TrainConfig TrainConfig::finetune_default(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.base_lr = 1e-3;
  c.schedule.milestones.clear();
  return c;
}

template <typename T>
SgdOptimizer<T>::SgdOptimizer(const ParamStore<T>& params, double momentum,
                              double weight_decay)
    : momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : params.layers) {
    if (!p.weight.empty()) velocity_.emplace_back(p.weight.storage().size(), T(0));
    if (!p.bias.empty()) velocity_.emplace_back(p.bias.storage().size(), T(0));
    if (p.bn) {
      velocity_.emplace_back(p.bn->gamma.size(), T(0));
      velocity_.emplace_back(p.bn->beta.size(), T(0));
    }
  }
}

template <typename T>
void SgdOptimizer<T>::step(ParamStore<T>& params, const Gradients<T>& grads,
                           double lr) {
  if (grads.size() != params.size()) {
    throw ShapeError("gradient count does not match parameter store");
  }
  size_t slot = 0;
  const T m = static_cast<T>(momentum_);
  const T wd = static_cast<T>(weight_decay_);
  const T rate = static_cast<T>(lr);
  for (size_t i = 0; i < params.size(); ++i) {
    for_each_trainable(params[i], grads[i],
                       [&](std::span<T> w, std::span<const T> g) {
      if (slot >= velocity_.size() || velocity_[slot].size() != w.size() ||
          g.size() != w.size()) {
        throw ShapeError("optimizer state does not match layer " +
                         std::to_string(i));
      }
      std::vector<T>& v = velocity_[slot++];
      for (size_t j = 0; j < w.size(); ++j) {
        v[j] = m * v[j] + g[j] + wd * w[j];
        w[j] -= rate * v[j];
      }
    });
  }
}

template <typename T>
TrainLog train(const NetworkSpec& spec, ParamStore<T>& params,
               const DatasetSplit& train_split, const DatasetSplit& eval_split,
               const TrainConfig& config, const EpochCallback<T>& on_epoch) {
  config.validate();
  if (train_split.size() == 0) throw DataError("training split is empty");
  check_params(spec, params);
  TrainLog log;
  SgdOptimizer<T> opt(params, config.momentum, config.weight_decay);
  std::mt19937_64 rng(config.seed);
  std::vector<int64_t> order(static_cast<size_t>(train_split.size()));
  const auto batch = static_cast<size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.schedule.rate(config.base_lr, epoch);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    int64_t correct = 0, seen = 0;
    size_t batch_index = 0;
    for (size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const size_t len = std::min(batch, order.size() - start);
      // A one-sample tail cannot produce batch statistics.
      if (len < 2 && start > 0) break;
      std::span<const int64_t> rows(order.data() + start, len);
      const Tensor<T> x = gather_images<T>(train_split, rows);
      const std::vector<int32_t> y = gather_labels(train_split, rows);
      ForwardTrace<T> trace;
      Tensor<T> logits;
      try {
        logits = forward(spec, params, x, BNMode::kTrain, &trace);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      const LossAndGrad<T> lg = softmax_cross_entropy(logits, y);
      if (!std::isfinite(static_cast<double>(lg.loss))) {
        const int layer = first_nonfinite_layer(trace);
        throw NumericError(
            "non-finite loss at epoch " + std::to_string(epoch + 1) +
            ", batch " + std::to_string(batch_index) +
            (layer >= 0 ? ", first NaN/Inf produced by layer " +
                              std::to_string(layer) + " (" +
                              to_string(spec.layers[static_cast<size_t>(layer)].kind) +
                              ")"
                        : ", logits finite"));
      }
      if (epoch == 0 && batch_index == 0) log.first_batch_loss = lg.loss;
      loss_sum += static_cast<double>(lg.loss) * static_cast<double>(len);
      correct += count_correct(logits, y);
      seen += static_cast<int64_t>(len);
      Gradients<T> grads;
      try {
        grads = backward(spec, params, trace, lg.grad);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      opt.step(params, grads, lr);
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    rec.train_acc = seen ? static_cast<double>(correct) / seen : 0.0;
    rec.eval_acc = evaluate_accuracy(spec, params, eval_split);
    rec.lr = lr;
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec, params);
  }
  set_bn_mode(params, BNMode::kEval);
  return log;
}

template <typename T>
double finetune(const NetworkSpec& spec, ParamStore<T>& params,
                const DatasetSplit& train_split,
                const DatasetSplit& eval_split, const TrainConfig& config,
                const EpochCallback<T>& on_epoch, TrainLog* log) {
  if (config.epochs == 0) {
    return evaluate_accuracy(spec, params, eval_split);
  }
  TrainLog result =
      train(spec, params, train_split, eval_split, config, on_epoch);
  double best = 0;
  for (const EpochRecord& r : result.epochs) best = std::max(best, r.eval_acc);
  if (log) *log = std::move(result);
  return best;
}

template <typename T>
double evaluate_accuracy(const NetworkSpec& spec, const ParamStore<T>& params,
                         const DatasetSplit& split, int batch_size) {
  if (split.size() == 0) {
    throw DataError(std::string("cannot evaluate on an empty ") +
                    to_string(split.role) + " split");
  }
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  int64_t correct = 0;
  std::vector<int64_t> rows;
  for (int64_t start = 0; start < split.size(); start += batch_size) {
    const int64_t len = std::min<int64_t>(batch_size, split.size() - start);
    rows.resize(static_cast<size_t>(len));
    std::iota(rows.begin(), rows.end(), start);
    const Tensor<T> logits = infer(spec, params, gather_images<T>(split, rows));
    correct += count_correct(logits, gather_labels(split, rows));
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

template <typename T>
double evaluate_accuracy(const NetworkSpec& spec, ParamStore<T>& params,
                         const DatasetSplit& split, int batch_size) {
  set_bn_mode(params, BNMode::kEval);
  return evaluate_accuracy(spec, static_cast<const ParamStore<T>&>(params),
                           split, batch_size);
}

#define RECALPRUNE_INSTANTIATE_TRAINER(T)                                          \
  template class SgdOptimizer<T>;                                             \
  template TrainLog train(const NetworkSpec&, ParamStore<T>&,                 \
                          const DatasetSplit&, const DatasetSplit&,           \
                          const TrainConfig&, const EpochCallback<T>&);       \
  template double finetune(const NetworkSpec&, ParamStore<T>&,                \
                           const DatasetSplit&, const DatasetSplit&,          \
                           const TrainConfig&, const EpochCallback<T>&,       \
                           TrainLog*);                                        \
  template double evaluate_accuracy(const NetworkSpec&, const ParamStore<T>&, \
                                    const DatasetSplit&, int);                \
  template double evaluate_accuracy(const NetworkSpec&, ParamStore<T>&,       \
                                    const DatasetSplit&, int);

RECALPRUNE_INSTANTIATE_TRAINER(float)
RECALPRUNE_INSTANTIATE_TRAINER(double)

}  // namespace recalprune
