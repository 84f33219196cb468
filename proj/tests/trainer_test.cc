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

#include <gtest/gtest.h>

#include <cmath>

#include "recalprune/errors.h"

namespace recalprune {
namespace {

struct Blobs {
  DatasetSplit train;
  DatasetSplit eval;
};

Blobs blobs(int classes, int per_class, uint64_t seed) {
  return {synth_blobs(classes, per_class, 8, seed),
          synth_blobs(classes, per_class / 2, 8, seed + 1000)};
}

TrainConfig quick(int epochs, uint64_t seed = 3) {
  TrainConfig c = TrainConfig::desk_default(epochs);
  c.batch_size = 32;
  c.seed = seed;
  return c;
}

TEST(Train, ZeroLearningRateLeavesWeights) {
  const Blobs d = blobs(3, 20, 1);
  const NetworkSpec s = micro_cnn({1, 8, 8}, 3, 4);
  ParamStore<float> p = init_params<float>(s, 2);
  const ParamStore<float> before = p;
  TrainConfig c = quick(2);
  c.base_lr = 0;
  train(s, p, d.train, d.eval, c);
  ASSERT_EQ(p.size(), before.size());
  for (size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(p[i].weight, before[i].weight);
    EXPECT_EQ(p[i].bias, before[i].bias);
    if (p[i].bn) {
      EXPECT_EQ(p[i].bn->gamma, before[i].bn->gamma);
      EXPECT_EQ(p[i].bn->beta, before[i].bn->beta);
    }
  }
}

TEST(Train, SeparableBlobsReachNinetyNinePercent) {
  const Blobs d = blobs(2, 100, 4);
  const NetworkSpec s = micro_cnn({1, 8, 8}, 2, 8);
  ParamStore<float> p = init_params<float>(s, 5);
  const TrainLog log = train(s, p, d.train, d.eval, quick(5));
  ASSERT_EQ(log.epochs.size(), 5u);
  EXPECT_GE(log.epochs.back().train_acc, 0.99);
  EXPECT_GE(evaluate_accuracy(s, p, d.train), 0.99);
}

TEST(Train, LogFieldsAndSchedule) {
  const Blobs d = blobs(2, 30, 6);
  const NetworkSpec s = micro_cnn({1, 8, 8}, 2, 4);
  ParamStore<float> p = init_params<float>(s, 1);
  int calls = 0;
  const TrainLog log =
      train(s, p, d.train, d.eval, quick(4),
            EpochCallback<float>([&](const EpochRecord& r, const ParamStore<float>&) {
              EXPECT_EQ(r.epoch, ++calls);
            }));
  EXPECT_EQ(calls, 4);
  // desk_default(4) decays at floor(2.4) = 2 and floor(3.4) = 3.
  EXPECT_DOUBLE_EQ(log.epochs[0].lr, 0.05);
  EXPECT_DOUBLE_EQ(log.epochs[1].lr, 0.05);
  EXPECT_NEAR(log.epochs[2].lr, 0.005, 1e-15);
  EXPECT_NEAR(log.epochs[3].lr, 0.0005, 1e-15);
  for (const EpochRecord& r : log.epochs) {
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_GE(r.eval_acc, 0.0);
    EXPECT_LE(r.eval_acc, 1.0);
  }
  for (const auto& layer : p.layers) {
    if (layer.bn) EXPECT_EQ(layer.bn->mode, BNMode::kEval);
  }
}

TEST(Train, SingleStepIsMinusLrTimesGrad) {
  const NetworkSpec s = micro_cnn({1, 8, 8}, 3, 3);
  ParamStore<double> p = init_params<double>(s, 9);
  const DatasetSplit d = synth_blobs(3, 4, 8, 2);
  const std::vector<int64_t> rows{0, 3, 5, 7, 9, 11};
  ForwardTrace<double> trace;
  const Tensor<double> logits =
      forward(s, p, gather_images<double>(d, rows), BNMode::kTrain, &trace);
  const Gradients<double> g =
      backward(s, p, trace, softmax_cross_entropy(logits, gather_labels(d, rows)).grad);
  const ParamStore<double> before = p;
  SgdOptimizer<double> opt(p, 0.0, 0.0);
  const double lr = 0.125;
  opt.step(p, g, lr);
  for (size_t i = 0; i < p.size(); ++i) {
    for (int64_t j = 0; j < p[i].weight.size(); ++j) {
      ASSERT_EQ(p[i].weight[j], before[i].weight[j] - lr * g[i].weight[j]);
    }
    if (p[i].bn) {
      for (size_t c = 0; c < p[i].bn->gamma.size(); ++c) {
        ASSERT_EQ(p[i].bn->gamma[c], before[i].bn->gamma[c] - lr * g[i].gamma[c]);
        ASSERT_EQ(p[i].bn->beta[c], before[i].bn->beta[c] - lr * g[i].beta[c]);
      }
    }
  }
}

TEST(Train, MomentumAndDecayFollowUpdateRule) {
  const NetworkSpec s = micro_cnn({1, 8, 8}, 2, 2);
  ParamStore<double> p = init_params<double>(s, 1);
  Gradients<double> g(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    g[i].weight = Tensor<double>(p[i].weight.shape(), 0.5);
    g[i].bias = Tensor<double>(p[i].bias.shape(), 0.5);
    if (p[i].bn) {
      g[i].gamma.assign(p[i].bn->gamma.size(), 0.5);
      g[i].beta.assign(p[i].bn->beta.size(), 0.5);
    }
  }
  const double w0 = p[0].weight[0];
  SgdOptimizer<double> opt(p, 0.9, 0.01);
  opt.step(p, g, 0.1);
  const double v1 = 0.5 + 0.01 * w0;
  const double w1 = w0 - 0.1 * v1;
  EXPECT_NEAR(p[0].weight[0], w1, 1e-15);
  opt.step(p, g, 0.1);
  const double v2 = 0.9 * v1 + 0.5 + 0.01 * w1;
  EXPECT_NEAR(p[0].weight[0], w1 - 0.1 * v2, 1e-15);
}

TEST(Train, FirstBatchLossNearLogK) {
  const Blobs d = blobs(10, 20, 7);
  for (uint64_t seed : {1, 2, 3}) {
    const NetworkSpec s = micro_cnn({1, 8, 8}, 10);
    ParamStore<float> p = init_params<float>(s, seed);
    const TrainLog log = train(s, p, d.train, d.eval, quick(1, seed));
    EXPECT_NEAR(log.first_batch_loss, std::log(10.0), 0.1 * std::log(10.0))
        << "seed " << seed;
  }
}

TEST(Train, ReproducibleBitExact) {
  const Blobs d = blobs(3, 30, 8);
  const NetworkSpec s = micro_cnn({1, 8, 8}, 3, 4);
  ParamStore<float> a = init_params<float>(s, 3), b = a;
  const TrainLog la = train(s, a, d.train, d.eval, quick(2));
  const TrainLog lb = train(s, b, d.train, d.eval, quick(2));
  EXPECT_EQ(a, b);
  EXPECT_EQ(la.epochs.back().eval_acc, lb.epochs.back().eval_acc);
  EXPECT_EQ(la.epochs.back().loss, lb.epochs.back().loss);
}

TEST(Train, RejectsBadConfig) {
  const Blobs d = blobs(2, 5, 1);
  const NetworkSpec s = micro_cnn({1, 8, 8}, 2, 2);
  ParamStore<float> p = init_params<float>(s, 1);
  TrainConfig c = quick(3);
  c.schedule.milestones = {2, 1};
  EXPECT_THROW(train(s, p, d.train, d.eval, c), ConfigError);
  c = quick(3);
  c.batch_size = 0;
  EXPECT_THROW(train(s, p, d.train, d.eval, c), ConfigError);
  c = quick(3);
  c.momentum = 1.0;
  EXPECT_THROW(train(s, p, d.train, d.eval, c), ConfigError);
}

TEST(Train, NonFiniteLossNamesEpochBatchAndLayer) {
  const Blobs d = blobs(2, 10, 1);
  const NetworkSpec s = micro_cnn({1, 8, 8}, 2, 2);
  ParamStore<float> p = init_params<float>(s, 1);
  p[0].weight[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(s, p, d.train, d.eval, quick(1));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("layer"), std::string::npos) << msg;
  }
}

TEST(Finetune, DefaultsAndZeroEpochs) {
  const TrainConfig c = TrainConfig::finetune_default();
  EXPECT_EQ(c.epochs, 2);
  EXPECT_DOUBLE_EQ(c.base_lr, 1e-3);
  EXPECT_TRUE(c.schedule.milestones.empty());
  EXPECT_DOUBLE_EQ(c.schedule.rate(c.base_lr, 1), 1e-3);

  const Blobs d = blobs(3, 20, 2);
  const NetworkSpec s = micro_cnn({1, 8, 8}, 3, 4);
  ParamStore<float> p = init_params<float>(s, 4);
  const double pre = evaluate_accuracy(s, p, d.eval);
  EXPECT_EQ(finetune(s, p, d.train, d.eval, TrainConfig::finetune_default(0)), pre);
}

TEST(Finetune, ReturnsBestEpoch) {
  const Blobs d = blobs(3, 20, 2);
  const NetworkSpec s = micro_cnn({1, 8, 8}, 3, 4);
  ParamStore<float> p = init_params<float>(s, 4);
  TrainLog log;
  TrainConfig c = quick(3);
  c.schedule.milestones.clear();
  const double best = finetune(s, p, d.train, d.eval, c, EpochCallback<float>(), &log);
  double expect = 0;
  for (const EpochRecord& r : log.epochs) expect = std::max(expect, r.eval_acc);
  EXPECT_EQ(best, expect);
}

TEST(Evaluate, RandomModelNearChance) {
  const DatasetSplit d = synth_blobs(10, 50, 16, 31);
  double sum = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const NetworkSpec s = micro_cnn({1, 16, 16}, 10);
    ParamStore<float> p = init_params<float>(s, seed);
    const double acc = evaluate_accuracy(s, p, d);
    EXPECT_GE(acc, 0.0);
    sum += acc;
  }
  EXPECT_GE(sum / 20, 0.05);
  EXPECT_LE(sum / 20, 0.2);
}

TEST(Evaluate, DeterministicAndRejectsEmpty) {
  const DatasetSplit d = synth_blobs(3, 10, 8, 1);
  const NetworkSpec s = micro_cnn({1, 8, 8}, 3, 4);
  ParamStore<float> p = init_params<float>(s, 1);
  EXPECT_EQ(evaluate_accuracy(s, p, d), evaluate_accuracy(s, p, d));
  DatasetSplit empty = subset(d, {}, SplitRole::kTest);
  EXPECT_THROW(evaluate_accuracy(s, p, empty), DataError);
}

}  // namespace
}  // namespace recalprune
