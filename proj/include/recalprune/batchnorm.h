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

#ifndef RECALPRUNE_BATCHNORM_H_
#define RECALPRUNE_BATCHNORM_H_

#include <cstdint>
#include <vector>

#include "recalprune/tensor.h"

namespace recalprune {

// Train: normalize with batch statistics, update moving statistics, keep a
//   cache for backward.
// Eval: normalize with moving statistics; never mutates the state.
// Recalibrate: normalize with batch statistics and update moving statistics,
//   but gamma/beta are frozen and no gradient may flow.
enum class BNMode { kTrain, kEval, kRecalibrate };

// How moving statistics absorb a batch statistic.
//   kMomentum: s_t = m * s_{t-1} + (1 - m) * s_B
//   kCumulativeAverage: s_t = plain mean of the batch statistics seen since
//   the last reset.
enum class StatsUpdate { kMomentum, kCumulativeAverage };

const char* to_string(BNMode mode);

template <typename T>
struct BNState {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> moving_mean;
  std::vector<T> moving_var;
  T epsilon = T(1e-5);
  T momentum = T(0.9);
  BNMode mode = BNMode::kEval;
  StatsUpdate update = StatsUpdate::kMomentum;
  int64_t updates_since_reset = 0;

  // gamma=1, beta=0, moving stats (0, 1).
  static BNState identity(int64_t channels);

  int64_t channels() const { return static_cast<int64_t>(gamma.size()); }
};

// Everything bn_backward needs from the matching Train-mode forward call.
template <typename T>
struct BNCache {
  std::vector<T> inv_std;   // 1 / sqrt(var_B + eps), per channel
  Tensor<T> normalized;     // x_hat
};

template <typename T>
struct BNGrads {
  Tensor<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

// Accepts [N,C,H,W] or [N,C] input. In Train and Recalibrate modes the batch
// variance uses the unbiased 1/(M-1) estimator over the M = N*H*W values of
// each channel, both for normalizing and for the moving-statistics update.
// `cache` is filled only in Train mode.
template <typename T>
Tensor<T> bn_forward(BNState<T>& state, const Tensor<T>& input,
                     BNCache<T>* cache = nullptr);

// Eval-mode forward on an immutable state. Throws ModeError otherwise.
template <typename T>
Tensor<T> bn_forward(const BNState<T>& state, const Tensor<T>& input);

template <typename T>
BNGrads<T> bn_backward(const BNState<T>& state, const Tensor<T>& grad_out,
                       const BNCache<T>& cache);

// moving_mean <- 0, moving_var <- 1.
template <typename T>
void reset_moving_stats(BNState<T>& state);

}  // namespace recalprune

#endif  // RECALPRUNE_BATCHNORM_H_
