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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "recalprune/errors.h"
#include "test_util.h"

namespace recalprune {
namespace {

using testing::random_tensor;

BNState<double> make_state(int64_t c, uint64_t seed) {
  BNState<double> s = BNState<double>::identity(c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (int64_t i = 0; i < c; ++i) {
    s.gamma[i] = u(rng);
    s.beta[i] = u(rng) - 1;
    s.moving_mean[i] = u(rng) - 1;
    s.moving_var[i] = u(rng);
  }
  return s;
}

TEST(BatchNorm, EvalOnMovingMeanGivesBeta) {
  BNState<double> s = make_state(3, 1);
  Tensor<double> x({2, 3, 2, 2});
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t i = 0; i < 4; ++i) x[(n * 3 + c) * 4 + i] = s.moving_mean[c];
  const Tensor<double> y = bn_forward(std::as_const(s), x);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t i = 0; i < 4; ++i) {
        EXPECT_EQ(y[(n * 3 + c) * 4 + i], s.beta[c]);
      }
}

TEST(BatchNorm, EvalIdentityConfiguration) {
  BNState<double> s = BNState<double>::identity(2);
  for (double& v : s.moving_var) v = 1 - s.epsilon;
  const Tensor<double> x = random_tensor({3, 2, 2, 2}, 2);
  EXPECT_EQ(bn_forward(std::as_const(s), x), x);
}

TEST(BatchNorm, MomentumUpdateSteps) {
  BNState<double> s = BNState<double>::identity(1);
  s.mode = BNMode::kRecalibrate;
  const Tensor<double> ones({4, 1, 1, 1}, 1.0);
  bn_forward(s, ones);
  EXPECT_DOUBLE_EQ(s.moving_mean[0], 0.1);
  bn_forward(s, ones);
  EXPECT_DOUBLE_EQ(s.moving_mean[0], 0.19);
}

TEST(BatchNorm, UnbiasedBatchVariance) {
  BNState<double> s = BNState<double>::identity(1);
  s.mode = BNMode::kTrain;
  s.momentum = 0;  // moving stats become the batch stats
  Tensor<double> x({4, 1}, std::vector<double>{1, 2, 3, 4});
  const Tensor<double> y = bn_forward(s, x);
  EXPECT_DOUBLE_EQ(s.moving_mean[0], 2.5);
  EXPECT_DOUBLE_EQ(s.moving_var[0], 5.0 / 3.0);
  EXPECT_NEAR(y[0], -1.5 / std::sqrt(5.0 / 3.0 + 1e-5), 1e-12);
}

TEST(BatchNorm, CumulativeAverageUpdate) {
  BNState<double> s = BNState<double>::identity(1);
  s.mode = BNMode::kRecalibrate;
  s.update = StatsUpdate::kCumulativeAverage;
  const double means[] = {1.0, 4.0, -2.0};
  for (double m : means) bn_forward(s, Tensor<double>({3, 1}, m));
  EXPECT_NEAR(s.moving_mean[0], 1.0, 1e-15);
  EXPECT_NEAR(s.moving_var[0], 0.0, 1e-15);
  reset_moving_stats(s);
  EXPECT_EQ(s.updates_since_reset, 0);
  bn_forward(s, Tensor<double>({3, 1}, 7.0));
  EXPECT_EQ(s.moving_mean[0], 7.0);
}

TEST(BatchNorm, BackwardZeroGradOut) {
  BNState<double> s = make_state(2, 3);
  s.mode = BNMode::kTrain;
  BNCache<double> cache;
  const Tensor<double> x = random_tensor({3, 2, 2, 2}, 4);
  bn_forward(s, x, &cache);
  const BNGrads<double> g = bn_backward(s, Tensor<double>(x.shape()), cache);
  for (double v : g.input.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.gamma) EXPECT_EQ(v, 0.0);
  for (double v : g.beta) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, ZeroGammaBlocksInputGradient) {
  BNState<double> s = make_state(2, 5);
  s.gamma = {0, 0};
  s.mode = BNMode::kTrain;
  BNCache<double> cache;
  const Tensor<double> x = random_tensor({3, 2, 2, 2}, 6);
  bn_forward(s, x, &cache);
  const Tensor<double> r = random_tensor(x.shape(), 7);
  const BNGrads<double> g = bn_backward(s, r, cache);
  for (double v : g.input.values()) EXPECT_EQ(v, 0.0);
  for (int64_t c = 0; c < 2; ++c) {
    double sum = 0;
    for (int64_t n = 0; n < 3; ++n)
      for (int64_t i = 0; i < 4; ++i) sum += r[(n * 2 + c) * 4 + i];
    EXPECT_NEAR(g.beta[c], sum, 1e-12);
  }
}

TEST(BatchNorm, ModeErrors) {
  BNState<double> s = make_state(2, 8);
  const Tensor<double> x = random_tensor({3, 2}, 9);
  BNCache<double> cache;
  s.mode = BNMode::kTrain;
  bn_forward(s, x, &cache);
  s.mode = BNMode::kEval;
  EXPECT_THROW(bn_backward(s, x, cache), ModeError);
  s.mode = BNMode::kRecalibrate;
  EXPECT_THROW(bn_backward(s, x, cache), ModeError);
  EXPECT_THROW(bn_forward(std::as_const(s), x), ModeError);
}

TEST(BatchNorm, ShapeErrors) {
  BNState<double> s = BNState<double>::identity(2);
  s.mode = BNMode::kTrain;
  EXPECT_THROW(bn_forward(s, Tensor<double>({1, 2})), ShapeError);
  EXPECT_THROW(bn_forward(s, Tensor<double>({1, 2, 1, 1})), ShapeError);
  EXPECT_THROW(bn_forward(s, Tensor<double>({4, 3})), ShapeError);
  s.mode = BNMode::kEval;
  EXPECT_NO_THROW(bn_forward(s, Tensor<double>({1, 2})));
}

TEST(BatchNorm, ResetMovingStats) {
  BNState<double> s = make_state(4, 10);
  reset_moving_stats(s);
  for (double v : s.moving_mean) EXPECT_EQ(v, 0.0);
  for (double v : s.moving_var) EXPECT_EQ(v, 1.0);
  s.gamma.assign(4, 1.0);
  s.beta.assign(4, 0.0);
  s.epsilon = 1e-12;
  const Tensor<double> x = random_tensor({2, 4, 3, 3}, 11);
  const Tensor<double> y = bn_forward(std::as_const(s), x);
  for (int64_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-11);
}

// Random mode sequences: Eval never mutates, Recalibrate never touches
// gamma/beta, moving_var stays non-negative.
TEST(BatchNorm, ModeDisciplineProperty) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    BNState<double> s = make_state(3, 100 + trial);
    for (int step = 0; step < 20; ++step) {
      const BNMode mode = static_cast<BNMode>(rng() % 3);
      s.mode = mode;
      const BNState<double> before = s;
      const Tensor<double> x =
          random_tensor({2 + static_cast<int64_t>(rng() % 3), 3, 2, 2}, rng(),
                        -3, 3);
      bn_forward(s, x);
      EXPECT_EQ(s.gamma, before.gamma);
      EXPECT_EQ(s.beta, before.beta);
      if (mode == BNMode::kEval) {
        EXPECT_EQ(s.moving_mean, before.moving_mean);
        EXPECT_EQ(s.moving_var, before.moving_var);
        EXPECT_EQ(s.updates_since_reset, before.updates_since_reset);
      } else {
        EXPECT_NE(s.moving_mean, before.moving_mean);
      }
      for (double v : s.moving_var) EXPECT_GE(v, 0.0);
    }
  }
}

// Repeating one batch from reset: the error shrinks by exactly m per step.
TEST(BatchNorm, RecalibrationFixedPoint) {
  const Tensor<double> x = random_tensor({8, 2, 3, 3}, 13, -2, 4);
  BNState<double> probe = BNState<double>::identity(2);
  probe.mode = BNMode::kRecalibrate;
  probe.momentum = 0;
  bn_forward(probe, x);  // batch statistics
  for (double m : {0.9, 0.5}) {
    BNState<double> s = BNState<double>::identity(2);
    s.momentum = m;
    s.mode = BNMode::kRecalibrate;
    for (int k = 1; k <= 30; ++k) {
      bn_forward(s, x);
      for (int64_t c = 0; c < 2; ++c) {
        const double mk = std::pow(m, k);
        EXPECT_NEAR(std::abs(s.moving_mean[c] - probe.moving_mean[c]),
                    mk * std::abs(0.0 - probe.moving_mean[c]), 1e-12);
        EXPECT_NEAR(std::abs(s.moving_var[c] - probe.moving_var[c]),
                    mk * std::abs(1.0 - probe.moving_var[c]), 1e-12);
      }
    }
  }
}

TEST(BatchNorm, TrainOutputHasMeanBetaAndUnitStd) {
  BNState<double> s = BNState<double>::identity(2);
  s.beta = {0.3, -1.2};
  s.mode = BNMode::kTrain;
  const Tensor<double> x = random_tensor({64, 2, 8, 8}, 14, -5, 9);
  const Tensor<double> y = bn_forward(s, x);
  for (int64_t c = 0; c < 2; ++c) {
    double sum = 0, sq = 0;
    int64_t m = 0;
    for (int64_t n = 0; n < 64; ++n)
      for (int64_t i = 0; i < 64; ++i) {
        const double v = y[(n * 2 + c) * 64 + i];
        sum += v;
        sq += v * v;
        ++m;
      }
    const double mean = sum / m;
    EXPECT_NEAR(mean, s.beta[c], 1e-9);
    const double sd = std::sqrt(sq / m - mean * mean);
    EXPECT_NEAR(sd, 1.0, 0.02);
  }
}

TEST(BatchNorm, FloatPrecisionAgrees) {
  BNState<double> sd = make_state(3, 15);
  BNState<float> sf = BNState<float>::identity(3);
  for (int64_t c = 0; c < 3; ++c) {
    sf.gamma[c] = static_cast<float>(sd.gamma[c]);
    sf.beta[c] = static_cast<float>(sd.beta[c]);
    sf.moving_mean[c] = static_cast<float>(sd.moving_mean[c]);
    sf.moving_var[c] = static_cast<float>(sd.moving_var[c]);
  }
  const Tensor<double> x = random_tensor({4, 3, 2, 2}, 16);
  const Tensor<double> yd = bn_forward(std::as_const(sd), x);
  const Tensor<float> yf = bn_forward(std::as_const(sf), x.cast<float>());
  for (int64_t i = 0; i < x.size(); ++i) EXPECT_NEAR(yf[i], yd[i], 1e-5);
}

}  // namespace
}  // namespace recalprune
