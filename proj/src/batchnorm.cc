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

#include "recalprune/batchnorm.h"

#include <cmath>
#include <string>

namespace recalprune {
namespace {

struct BNDims {
  int64_t n, c, plane;
};

template <typename T>
BNDims bn_dims(const BNState<T>& state, const Tensor<T>& input) {
  if (input.rank() != 2 && input.rank() != 4) {
    throw ShapeError("bn_forward: expected [N,C] or [N,C,H,W], got " +
                     shape_string(input.shape()));
  }
  BNDims d{input.dim(0), input.dim(1),
           input.rank() == 4 ? input.dim(2) * input.dim(3) : 1};
  if (d.c != state.channels() ||
      static_cast<int64_t>(state.beta.size()) != d.c ||
      static_cast<int64_t>(state.moving_mean.size()) != d.c ||
      static_cast<int64_t>(state.moving_var.size()) != d.c) {
    throw ShapeError("bn_forward: input " + shape_string(input.shape()) +
                     " has " + std::to_string(d.c) +
                     " channels, BN state has " +
                     std::to_string(state.channels()));
  }
  return d;
}

template <typename T>
Tensor<T> normalize_with(const BNState<T>& state, const Tensor<T>& input,
                         const BNDims& d, const std::vector<T>& mean,
                         const std::vector<T>& inv_std, Tensor<T>* x_hat) {
  Tensor<T> out(input.shape());
  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t c = 0; c < d.c; ++c) {
      const int64_t off = (n * d.c + c) * d.plane;
      const T mu = mean[c], is = inv_std[c];
      const T g = state.gamma[c], b = state.beta[c];
      for (int64_t i = 0; i < d.plane; ++i) {
        const T xh = (input[off + i] - mu) * is;
        if (x_hat) (*x_hat)[off + i] = xh;
        out[off + i] = g * xh + b;
      }
    }
  }
  return out;
}

}  // namespace

const char* to_string(BNMode mode) {
  switch (mode) {
    case BNMode::kTrain:
      return "train";
    case BNMode::kEval:
      return "eval";
    case BNMode::kRecalibrate:
      return "recalibrate";
  }
  return "?";
}

template <typename T>
BNState<T> BNState<T>::identity(int64_t channels) {
  BNState<T> s;
  const auto c = static_cast<size_t>(channels);
  s.gamma.assign(c, T(1));
  s.beta.assign(c, T(0));
  s.moving_mean.assign(c, T(0));
  s.moving_var.assign(c, T(1));
  return s;
}

template <typename T>
Tensor<T> bn_forward(BNState<T>& state, const Tensor<T>& input,
                     BNCache<T>* cache) {
  const BNDims d = bn_dims(state, input);
  if (state.mode == BNMode::kEval) {
    return bn_forward(static_cast<const BNState<T>&>(state), input);
  }
  const int64_t population = d.n * d.plane;
  if (population < 2) {
    throw ShapeError(std::string("bn_forward: ") + to_string(state.mode) +
                     " mode needs at least 2 values per channel, got " +
                     std::to_string(population));
  }
  std::vector<T> mean(static_cast<size_t>(d.c), T(0));
  std::vector<T> var(static_cast<size_t>(d.c), T(0));
  for (int64_t c = 0; c < d.c; ++c) {
    T acc = 0;
    for (int64_t n = 0; n < d.n; ++n) {
      const T* src = input.data() + (n * d.c + c) * d.plane;
      for (int64_t i = 0; i < d.plane; ++i) acc += src[i];
    }
    const T mu = acc / static_cast<T>(population);
    T sq = 0;
    for (int64_t n = 0; n < d.n; ++n) {
      const T* src = input.data() + (n * d.c + c) * d.plane;
      for (int64_t i = 0; i < d.plane; ++i) {
        const T dev = src[i] - mu;
        sq += dev * dev;
      }
    }
    mean[c] = mu;
    var[c] = sq / static_cast<T>(population - 1);
  }
  std::vector<T> inv_std(static_cast<size_t>(d.c));
  for (int64_t c = 0; c < d.c; ++c) {
    inv_std[c] = T(1) / std::sqrt(var[c] + state.epsilon);
  }

  Tensor<T> x_hat;
  const bool keep = cache != nullptr && state.mode == BNMode::kTrain;
  if (keep) x_hat = Tensor<T>(input.shape());
  Tensor<T> out =
      normalize_with(state, input, d, mean, inv_std, keep ? &x_hat : nullptr);

  state.updates_since_reset += 1;
  const T m = state.update == StatsUpdate::kMomentum
                  ? state.momentum
                  : T(1) - T(1) / static_cast<T>(state.updates_since_reset);
  for (int64_t c = 0; c < d.c; ++c) {
    state.moving_mean[c] = m * state.moving_mean[c] + (T(1) - m) * mean[c];
    state.moving_var[c] = m * state.moving_var[c] + (T(1) - m) * var[c];
  }
  if (keep) {
    cache->inv_std = std::move(inv_std);
    cache->normalized = std::move(x_hat);
  }
  check_finite(out, "bn_forward");
  return out;
}

template <typename T>
Tensor<T> bn_forward(const BNState<T>& state, const Tensor<T>& input) {
  if (state.mode != BNMode::kEval) {
    throw ModeError(std::string("bn_forward on an immutable state requires "
                                "eval mode, state is in ") +
                    to_string(state.mode) + " mode");
  }
  const BNDims d = bn_dims(state, input);
  std::vector<T> inv_std(static_cast<size_t>(d.c));
  for (int64_t c = 0; c < d.c; ++c) {
    inv_std[c] = T(1) / std::sqrt(state.moving_var[c] + state.epsilon);
  }
  Tensor<T> out =
      normalize_with(state, input, d, state.moving_mean, inv_std,
                     static_cast<Tensor<T>*>(nullptr));
  check_finite(out, "bn_forward");
  return out;
}

template <typename T>
BNGrads<T> bn_backward(const BNState<T>& state, const Tensor<T>& grad_out,
                       const BNCache<T>& cache) {
  if (state.mode != BNMode::kTrain) {
    throw ModeError(std::string("bn_backward requires train mode, state is in ") +
                    to_string(state.mode) + " mode");
  }
  if (grad_out.shape() != cache.normalized.shape()) {
    throw ShapeError("bn_backward: grad " + shape_string(grad_out.shape()) +
                     " does not match cached forward " +
                     shape_string(cache.normalized.shape()));
  }
  const BNDims d = bn_dims(state, grad_out);
  const int64_t population = d.n * d.plane;
  BNGrads<T> g{Tensor<T>(grad_out.shape()),
               std::vector<T>(static_cast<size_t>(d.c), T(0)),
               std::vector<T>(static_cast<size_t>(d.c), T(0))};
  const Tensor<T>& xh = cache.normalized;
  for (int64_t c = 0; c < d.c; ++c) {
    T sum_g = 0, sum_gx = 0;
    for (int64_t n = 0; n < d.n; ++n) {
      const int64_t off = (n * d.c + c) * d.plane;
      for (int64_t i = 0; i < d.plane; ++i) {
        sum_g += grad_out[off + i];
        sum_gx += grad_out[off + i] * xh[off + i];
      }
    }
    g.beta[c] = sum_g;
    g.gamma[c] = sum_gx;
    // dx = gamma/s * (g - mean(g) - x_hat * sum(g*x_hat)/(M-1)); the (M-1)
    // comes from the unbiased variance.
    const T scale = state.gamma[c] * cache.inv_std[c];
    const T mean_g = sum_g / static_cast<T>(population);
    const T proj = sum_gx / static_cast<T>(population - 1);
    for (int64_t n = 0; n < d.n; ++n) {
      const int64_t off = (n * d.c + c) * d.plane;
      for (int64_t i = 0; i < d.plane; ++i) {
        g.input[off + i] =
            scale * (grad_out[off + i] - mean_g - xh[off + i] * proj);
      }
    }
  }
  check_finite(g.input, "bn_backward");
  return g;
}

template <typename T>
void reset_moving_stats(BNState<T>& state) {
  std::fill(state.moving_mean.begin(), state.moving_mean.end(), T(0));
  std::fill(state.moving_var.begin(), state.moving_var.end(), T(1));
  state.updates_since_reset = 0;
}

#define RECALPRUNE_INSTANTIATE_BN(T)                                              \
  template struct BNState<T>;                                                \
  template Tensor<T> bn_forward(BNState<T>&, const Tensor<T>&, BNCache<T>*); \
  template Tensor<T> bn_forward(const BNState<T>&, const Tensor<T>&);        \
  template BNGrads<T> bn_backward(const BNState<T>&, const Tensor<T>&,       \
                                  const BNCache<T>&);                        \
  template void reset_moving_stats(BNState<T>&);

RECALPRUNE_INSTANTIATE_BN(float)
RECALPRUNE_INSTANTIATE_BN(double)

}  // namespace recalprune
