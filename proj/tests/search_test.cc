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

#include "recalprune/search.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "recalprune/errors.h"
#include "recalprune/kernels.h"
#include "test_util.h"

namespace recalprune {
namespace {

// A small micro-CNN trained on separable blobs, shared by the tests.
struct Trained {
  NetworkSpec spec = micro_cnn({1, 16, 16}, 4, 8);
  DatasetSplit all = synth_blobs(4, 150, 16, 21);
  DatasetSplit test = synth_blobs(4, 50, 16, 22);
  Splits splits = make_splits(all, 0.1, 1.0 / 30.0, 23);
  ParamStore<double> params;
  SearchData data;

  Trained() {
    params = init_params<double>(spec, 5);
    TrainConfig c = TrainConfig::desk_default(3);
    c.batch_size = 32;
    c.seed = 2;
    train(spec, params, splits.train, test, c);
    data = {&splits.train, &splits.subval, &splits.recalib, &test};
  }
};

const Trained& trained() {
  static const Trained* t = new Trained();
  return *t;
}

SearchConfig small_config() {
  SearchConfig c;
  c.candidate_count = 6;
  c.recalib_iterations = 10;
  c.batch_size = 32;
  c.seed = 7;
  return c;
}

TrainConfig one_epoch() {
  TrainConfig c = TrainConfig::finetune_default(1);
  c.batch_size = 32;
  return c;
}

TEST(Generate, ZeroBoundGivesZeroStrategies) {
  SearchConfig c = small_config();
  c.max_ratio = 0;
  for (const PruningStrategy& s : generate_strategies(micro_cnn({1, 28, 28}, 10), c)) {
    EXPECT_EQ(s.ratios, (std::vector<double>{0, 0, 0}));
    EXPECT_EQ(s.realized_flops_ratio, 1.0);
  }
}

TEST(Generate, SupportBound) {
  SearchConfig c = small_config();
  c.candidate_count = 500;
  const std::vector<PruningStrategy> all =
      generate_strategies(micro_cnn({1, 28, 28}, 10), c);
  ASSERT_EQ(all.size(), 500u);
  double top = 0;
  for (const PruningStrategy& s : all) {
    EXPECT_LE(s.ratios[0], 0.2);
    for (double r : s.ratios) {
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 0.7);
      top = std::max(top, r);
    }
  }
  EXPECT_GT(top, 0.6);
}

TEST(Generate, FlopsTargetWindow) {
  SearchConfig c = small_config();
  c.candidate_count = 100;
  c.flops_target = 0.5;
  const NetworkSpec s = micro_cnn({1, 28, 28}, 10);
  for (const PruningStrategy& st : generate_strategies(s, c)) {
    EXPECT_GE(st.realized_flops_ratio, 0.48);
    EXPECT_LE(st.realized_flops_ratio, 0.52);
    EXPECT_EQ(st.realized_flops_ratio, strategy_flops_ratio(s, st.ratios));
  }
}

TEST(Generate, InfeasibleTargetNamesIt) {
  SearchConfig c = small_config();
  c.flops_target = 0.02;
  c.max_attempts = 200;
  try {
    generate_strategies(micro_cnn({1, 28, 28}, 10), c);
    FAIL() << "expected SearchError";
  } catch (const SearchError& e) {
    EXPECT_NE(std::string(e.what()).find("0.02"), std::string::npos) << e.what();
  }
}

TEST(Generate, Reproducible) {
  SearchConfig c = small_config();
  c.candidate_count = 20;
  const NetworkSpec s = micro_cnn({1, 28, 28}, 10);
  EXPECT_EQ(generate_strategies(s, c), generate_strategies(s, c));
  SearchConfig other = c;
  other.workers = 4;
  EXPECT_EQ(generate_strategies(s, c), generate_strategies(s, other));
  other = c;
  other.seed = 8;
  EXPECT_NE(generate_strategies(s, c), generate_strategies(s, other));
}

TEST(UniformStrategy, SingleRatioNearTarget) {
  const NetworkSpec s = micro_cnn({1, 28, 28}, 10);
  const PruningStrategy u = uniform_strategy(s, 0.5);
  ASSERT_EQ(u.ratios.size(), 3u);
  EXPECT_EQ(u.ratios[0], u.ratios[1]);
  EXPECT_EQ(u.ratios[1], u.ratios[2]);
  EXPECT_NEAR(u.realized_flops_ratio, 0.5, 0.1);
}

TEST(Vanilla, RatioZeroMatchesFullModel) {
  const Trained& t = trained();
  const PrunedModel<double> m = apply_strategy(
      t.spec, t.params, PruningStrategy{{0, 0, 0}}, Criterion::kL1Norm);
  ParamStore<double> full = t.params;
  const double acc = evaluate_vanilla(m.spec, m.params, t.splits.subval);
  EXPECT_EQ(acc, evaluate_accuracy(t.spec, full, t.splits.subval));
  EXPECT_EQ(acc, evaluate_vanilla(m.spec, m.params, t.splits.subval));
}

TEST(Adaptive, UnprunedModelSelfConsistent) {
  const Trained& t = trained();
  ParamStore<double> full = t.params;
  const double direct = evaluate_accuracy(t.spec, full, t.splits.subval);
  ParamStore<double> recal;
  const double adaptive = evaluate_adaptive(t.spec, t.params, t.splits.recalib,
                                            t.splits.subval, small_config(), 1, &recal);
  EXPECT_LE(std::abs(adaptive - direct), 0.01);
  EXPECT_EQ(adaptive, evaluate_adaptive(t.spec, t.params, t.splits.recalib,
                                        t.splits.subval, small_config(), 1));
  // Learnable parameters are bit-identical; only moving statistics move.
  bool stats_moved = false;
  for (size_t i = 0; i < full.size(); ++i) {
    EXPECT_EQ(recal[i].weight, full[i].weight);
    EXPECT_EQ(recal[i].bias, full[i].bias);
    if (!full[i].bn) continue;
    EXPECT_EQ(recal[i].bn->gamma, full[i].bn->gamma);
    EXPECT_EQ(recal[i].bn->beta, full[i].bn->beta);
    EXPECT_EQ(recal[i].bn->momentum, full[i].bn->momentum);
    EXPECT_EQ(recal[i].bn->mode, BNMode::kEval);
    stats_moved |= recal[i].bn->moving_mean != full[i].bn->moving_mean;
  }
  EXPECT_TRUE(stats_moved);
}

TEST(Adaptive, RecalibrationResetsBeforeAccumulating) {
  const Trained& t = trained();
  ParamStore<double> poisoned = t.params;
  for (auto& l : poisoned.layers) {
    if (!l.bn) continue;
    std::fill(l.bn->moving_mean.begin(), l.bn->moving_mean.end(), 100.0);
    std::fill(l.bn->moving_var.begin(), l.bn->moving_var.end(), 1e-3);
  }
  ParamStore<double> a = poisoned, b = t.params;
  const SearchConfig c = small_config();
  recalibrate_bn(t.spec, a, t.splits.recalib, c.recalib_iterations, c.batch_size,
                 c.recalib_momentum, c.recalib_update, 3);
  recalibrate_bn(t.spec, b, t.splits.recalib, c.recalib_iterations, c.batch_size,
                 c.recalib_momentum, c.recalib_update, 3);
  EXPECT_EQ(a, b);
}

TEST(Adaptive, RatioZeroAgreesWithVanilla) {
  const Trained& t = trained();
  const CandidateModel<double> c = evaluate_candidate(
      t.spec, t.params, PruningStrategy{{0, 0, 0}, 1.0}, 0, t.data, small_config());
  EXPECT_LE(std::abs(c.record.acc_adaptive - c.record.acc_vanilla), 0.01);
}

TEST(BnDistance, SelfIsZeroAndRowsCoverChannels) {
  const Trained& t = trained();
  const std::vector<BNChannelDistance> d = bn_stats_distance(t.params, t.params);
  EXPECT_EQ(d.size(), 24u);
  for (const BNChannelDistance& r : d) {
    EXPECT_EQ(r.mean_distance, 0.0);
    EXPECT_EQ(r.var_distance, 0.0);
  }
  ParamStore<double> shifted = t.params;
  shifted[1].bn->moving_mean[2] += 0.5;
  shifted[1].bn->moving_var[3] -= 0.25;
  const std::vector<BNChannelDistance> e = bn_stats_distance(t.params, shifted);
  EXPECT_EQ(e[2].layer, 1);
  EXPECT_EQ(e[2].channel, 2);
  EXPECT_DOUBLE_EQ(e[2].mean_distance, 0.5);
  EXPECT_DOUBLE_EQ(e[3].var_distance, 0.25);
  const PrunedModel<double> m = apply_strategy(
      t.spec, t.params, PruningStrategy{{0, 0.5, 0}}, Criterion::kL1Norm);
  EXPECT_THROW(bn_stats_distance(t.params, m.params), ShapeError);
}

// With one batch covering the split, the first BN layer's true statistics are
// the per-channel moments of the first conv's output.
TEST(BnDistance, TrueStatsMatchDirectMoments) {
  const Trained& t = trained();
  const DatasetSplit& v = t.test;
  const ParamStore<double> truth = true_bn_stats(t.spec, t.params, v, 1000);
  std::vector<int64_t> rows(static_cast<size_t>(v.size()));
  std::iota(rows.begin(), rows.end(), 0);
  const Tensor<double> y = conv2d_forward(gather_images<double>(v, rows),
                                          t.params[0].weight, t.spec.layers[0].geometry());
  const int64_t n = y.dim(0), c = y.dim(1), hw = y.dim(2) * y.dim(3);
  for (int64_t ch = 0; ch < c; ++ch) {
    long double sum = 0, sq = 0;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < hw; ++j) sum += y[(i * c + ch) * hw + j];
    const long double mean = sum / (n * hw);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < hw; ++j) {
        const long double d = y[(i * c + ch) * hw + j] - mean;
        sq += d * d;
      }
    EXPECT_NEAR(truth[1].bn->moving_mean[ch], static_cast<double>(mean), 1e-9);
    EXPECT_NEAR(truth[1].bn->moving_var[ch],
                static_cast<double>(sq / (n * hw - 1)), 1e-9);
  }
  EXPECT_EQ(truth[0].weight, t.params[0].weight);
}

TEST(RunSearch, RankingIsSortedPermutation) {
  const Trained& t = trained();
  const SearchResult r = run_search(t.spec, t.params, t.data, small_config(), one_epoch());
  ASSERT_EQ(r.ranked.size(), 6u);
  EXPECT_EQ(r.evaluated_now, 6);
  std::vector<int> ids;
  for (const CandidateRecord& c : r.ranked) ids.push_back(c.id);
  std::vector<int> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3, 4, 5}));
  for (size_t i = 1; i < r.ranked.size(); ++i) {
    const CandidateRecord &a = r.ranked[i - 1], &b = r.ranked[i];
    EXPECT_TRUE(a.acc_adaptive > b.acc_adaptive ||
                (a.acc_adaptive == b.acc_adaptive && a.id < b.id));
  }
  ASSERT_EQ(r.finetuned_ids.size(), 2u);
  EXPECT_EQ(r.finetuned_ids[0], r.ranked[0].id);
  EXPECT_EQ(r.finetuned_ids[1], r.ranked[1].id);
  double best = -1;
  int winner = -1;
  for (const CandidateRecord& c : r.ranked) {
    if (c.acc_finetuned && *c.acc_finetuned > best) {
      best = *c.acc_finetuned;
      winner = c.id;
    }
  }
  EXPECT_EQ(r.winner_id, winner);
}

TEST(RunSearch, SingleCandidateWins) {
  const Trained& t = trained();
  SearchConfig c = small_config();
  c.candidate_count = 1;
  const SearchResult r = run_search(t.spec, t.params, t.data, c, one_epoch());
  EXPECT_EQ(r.winner_id, 0);
  EXPECT_EQ(r.ranked.size(), 1u);
}

TEST(RunSearch, RatioZeroWinnerMatchesFullModel) {
  const Trained& t = trained();
  SearchConfig c = small_config();
  c.max_ratio = 0;
  c.first_layer_max_ratio = 0;
  c.candidate_count = 2;
  const SearchResult r = run_search(t.spec, t.params, t.data, c, one_epoch());
  ParamStore<double> full = t.params;
  const double base = evaluate_accuracy(t.spec, full, t.test);
  const CandidateRecord* w = nullptr;
  for (const CandidateRecord& rec : r.ranked) if (rec.id == r.winner_id) w = &rec;
  ASSERT_NE(w, nullptr);
  EXPECT_NEAR(*w->acc_finetuned, base, 0.005);
}

TEST(RunSearch, WorkerCountInvariant) {
  const Trained& t = trained();
  SearchConfig c = small_config();
  const SearchResult one = run_search(t.spec, t.params, t.data, c, one_epoch());
  c.workers = 3;
  const SearchResult three = run_search(t.spec, t.params, t.data, c, one_epoch());
  EXPECT_EQ(one.ranked, three.ranked);
  EXPECT_EQ(one.winner_id, three.winner_id);
}

TEST(RunSearch, HooksSkipCompletedAndReportInIdOrder) {
  const Trained& t = trained();
  const SearchConfig c = small_config();
  const SearchResult first = run_search(t.spec, t.params, t.data, c, one_epoch());
  std::vector<CandidateRecord> done;
  for (const CandidateRecord& r : first.ranked) {
    if (r.id < 3) {
      CandidateRecord copy = r;
      copy.acc_finetuned.reset();
      done.push_back(copy);
    }
  }
  SearchHooks<double> hooks;
  hooks.completed = done;
  std::vector<int> seen;
  hooks.on_evaluated = [&](const CandidateRecord& r, const PrunedModel<double>&) {
    seen.push_back(r.id);
  };
  const SearchResult resumed = run_search(t.spec, t.params, t.data, c, one_epoch(), hooks);
  EXPECT_EQ(seen, (std::vector<int>{3, 4, 5}));
  EXPECT_EQ(resumed.evaluated_now, 3);
  EXPECT_EQ(resumed.ranked, first.ranked);
}

TEST(RunSearch, FinetuneAllCoversEveryCandidate) {
  const Trained& t = trained();
  SearchConfig c = small_config();
  c.candidate_count = 3;
  SearchHooks<double> hooks;
  hooks.finetune_all = true;
  int calls = 0;
  hooks.on_finetuned = [&](const CandidateRecord& r, const PrunedModel<double>&) {
    EXPECT_TRUE(r.acc_finetuned.has_value());
    ++calls;
  };
  const SearchResult r = run_search(t.spec, t.params, t.data, c, one_epoch(), hooks);
  EXPECT_EQ(calls, 3);
  for (const CandidateRecord& rec : r.ranked) EXPECT_TRUE(rec.acc_finetuned.has_value());
}

TEST(ConstraintLabel, Format) {
  EXPECT_EQ(constraint_label(std::nullopt), "unconstrained");
  EXPECT_EQ(constraint_label(0.5), "50%");
  EXPECT_EQ(constraint_label(0.625), "62.5%");
}

TEST(SearchConfig, Validation) {
  SearchConfig c;
  c.max_ratio = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SearchConfig{};
  c.flops_target = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SearchConfig{};
  c.workers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(SearchConfig{}.validate());
}

}  // namespace
}  // namespace recalprune
