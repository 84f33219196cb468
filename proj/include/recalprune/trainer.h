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

#ifndef RECALPRUNE_TRAINER_H_
#define RECALPRUNE_TRAINER_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "recalprune/data.h"
#include "recalprune/netgraph.h"

namespace recalprune {

// Piecewise-constant learning rate: multiplied by `decay` at each milestone
// epoch (0-based epoch index at which the new rate starts).
struct LrSchedule {
  std::vector<int> milestones;
  double decay = 0.1;

  double rate(double base_lr, int epoch) const;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 128;
  double base_lr = 0.05;
  LrSchedule schedule{{6, 8}, 0.1};
  double momentum = 0.9;
  double weight_decay = 5e-4;
  uint64_t seed = 0;

  // Throws ConfigError when a rate is non-positive or milestones are not
  // strictly increasing below `epochs`.
  void validate() const;

  // Full-model training at desk scale: step decay at 60% / 85% of `epochs`.
  static TrainConfig desk_default(int epochs = 10);
  // Fine-tuning: constant lr 1e-3.
  static TrainConfig finetune_default(int epochs = 2);
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0;
  double train_acc = 0;
  double eval_acc = 0;
  double lr = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  double first_batch_loss = 0;
};

template <typename T>
using EpochCallback =
    std::function<void(const EpochRecord&, const ParamStore<T>&)>;

// One SGD step with momentum and L2 weight decay over every trainable
// tensor (conv/FC weights, classifier bias, BN gamma/beta):
//   v <- momentum * v + grad + weight_decay * w;  w <- w - lr * v
template <typename T>
class SgdOptimizer {
 public:
  SgdOptimizer(const ParamStore<T>& params, double momentum,
               double weight_decay);
  void step(ParamStore<T>& params, const Gradients<T>& grads, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<T>> velocity_;
};

// Trains in place. BN runs in Train mode for the steps and Eval mode for the
// per-epoch accuracy on `eval`. A non-finite loss aborts with NumericError
// naming epoch, batch and the first layer that produced NaN/Inf.
template <typename T>
TrainLog train(const NetworkSpec& spec, ParamStore<T>& params,
               const DatasetSplit& train_split, const DatasetSplit& eval_split,
               const TrainConfig& config,
               const EpochCallback<T>& on_epoch = nullptr);

// Same mechanics as train(); returns the best per-epoch eval accuracy, or
// the starting accuracy when config.epochs == 0. `params` ends at the last
// epoch's weights.
template <typename T>
double finetune(const NetworkSpec& spec, ParamStore<T>& params,
                const DatasetSplit& train_split,
                const DatasetSplit& eval_split, const TrainConfig& config,
                const EpochCallback<T>& on_epoch = nullptr,
                TrainLog* log = nullptr);

// Top-1 accuracy in Eval mode. Requires every BN state to be in Eval mode;
// use the ParamStore& overload to force it.
template <typename T>
double evaluate_accuracy(const NetworkSpec& spec, const ParamStore<T>& params,
                         const DatasetSplit& split, int batch_size = 256);

template <typename T>
double evaluate_accuracy(const NetworkSpec& spec, ParamStore<T>& params,
                         const DatasetSplit& split, int batch_size = 256);

}  // namespace recalprune

#endif  // RECALPRUNE_TRAINER_H_
