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

#ifndef RECALPRUNE_SEARCH_H_
#define RECALPRUNE_SEARCH_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "recalprune/batchnorm.h"
#include "recalprune/data.h"
#include "recalprune/netgraph.h"
#include "recalprune/pruner.h"
#include "recalprune/trainer.h"

namespace recalprune {

struct SearchConfig {
  int candidate_count = 50;
  double max_ratio = 0.7;              // R: per-layer ratios drawn from [0, R]
  double first_layer_max_ratio = 0.2;  // tighter bound for the first layer
  std::optional<double> flops_target;  // unset: unconstrained
  double flops_tolerance = 0.02;
  int max_attempts = 10000;  // rejection budget per accepted strategy
  int recalib_iterations = 100;
  double recalib_fraction = 1.0 / 30.0;
  double subval_fraction = 0.05;
  int top_k_to_finetune = 2;
  uint64_t seed = 0;
  Criterion criterion = Criterion::kL1Norm;
  double recalib_momentum = 0.9;
  StatsUpdate recalib_update = StatsUpdate::kMomentum;
  int batch_size = 128;
  // Also score every candidate with vanilla evaluation.
  bool analysis_mode = true;
  int workers = 1;

  void validate() const;
};

struct CandidateRecord {
  int id = 0;
  PruningStrategy strategy;
  double acc_vanilla = 0;   // X2
  double acc_adaptive = 0;  // X1
  std::optional<double> acc_finetuned;  // Y
  std::string checkpoint;
  std::string constraint;  // FLOPs-constraint label, e.g. "50%"
  Criterion criterion = Criterion::kL1Norm;

  friend bool operator==(const CandidateRecord&,
                         const CandidateRecord&) = default;
};

// Uniform per-layer sampling in [0, R] (first layer in [0, min(R, R_first)]),
// rejection-sampled to |flops ratio - target| <= tolerance when a target is
// set. Sequential and deterministic in config.seed.
std::vector<PruningStrategy> generate_strategies(const NetworkSpec& spec,
                                                 const SearchConfig& config);

// The single ratio applied to every prunable layer whose FLOPs ratio is
// closest to `flops_target` (ties: smaller ratio).
PruningStrategy uniform_strategy(const NetworkSpec& spec, double flops_target);

// Eval-mode accuracy with the inherited (global) BN statistics.
template <typename T>
double evaluate_vanilla(const NetworkSpec& spec, const ParamStore<T>& params,
                        const DatasetSplit& subval);

// Resets every BN layer's moving statistics and re-accumulates them with
// `iterations` Recalibrate-mode forward passes over batches of `recalib`
// (cycling through a seeded permutation). Learnable parameters are untouched;
// BN layers end in Eval mode with their original momentum restored.
template <typename T>
void recalibrate_bn(const NetworkSpec& spec, ParamStore<T>& params,
                    const DatasetSplit& recalib, int iterations,
                    int batch_size, double momentum, StatsUpdate update,
                    uint64_t seed);

// Adaptive-BN evaluation: recalibrate a copy of `params`, then measure
// Eval-mode accuracy on `subval`. The recalibrated copy is returned through
// `recalibrated` when given.
template <typename T>
double evaluate_adaptive(const NetworkSpec& spec, const ParamStore<T>& params,
                         const DatasetSplit& recalib,
                         const DatasetSplit& subval, const SearchConfig& config,
                         uint64_t seed, ParamStore<T>* recalibrated = nullptr);

// Data the search touches. `test` only scores fine-tuned candidates.
struct SearchData {
  const DatasetSplit* train = nullptr;
  const DatasetSplit* subval = nullptr;
  const DatasetSplit* recalib = nullptr;
  const DatasetSplit* test = nullptr;
};

template <typename T>
struct CandidateModel {
  CandidateRecord record;
  PrunedModel<T> model;  // adaptive-BN recalibrated parameters
};

// Prunes the full model with `strategy` and scores it (adaptive, plus vanilla
// in analysis mode).
template <typename T>
CandidateModel<T> evaluate_candidate(const NetworkSpec& spec,
                                     const ParamStore<T>& params,
                                     const PruningStrategy& strategy, int id,
                                     const SearchData& data,
                                     const SearchConfig& config);

// Rebuilds the candidate, fine-tunes it on data.train and returns the best
// test accuracy. `on_epoch` observes fine-tuning progress.
template <typename T>
double finetune_candidate(const NetworkSpec& spec, const ParamStore<T>& params,
                          const CandidateRecord& record, const SearchData& data,
                          const SearchConfig& config,
                          const TrainConfig& finetune_config,
                          PrunedModel<T>* finetuned = nullptr,
                          const EpochCallback<T>& on_epoch = nullptr);

// Candidate id order -> ranking: acc_adaptive descending, id ascending.
void rank_candidates(std::vector<CandidateRecord>& records);

template <typename T>
struct SearchHooks {
  // Records already on disk; their ids are skipped.
  std::vector<CandidateRecord> completed;
  // Called in id order as evaluations finish.
  std::function<void(const CandidateRecord&, const PrunedModel<T>&)>
      on_evaluated;
  std::function<void(const CandidateRecord&, const PrunedModel<T>&)>
      on_finetuned;
  // Fine-tune every candidate instead of the top-k (correlation studies).
  bool finetune_all = false;
};

struct SearchResult {
  std::vector<CandidateRecord> ranked;  // by acc_adaptive
  std::vector<int> finetuned_ids;
  int winner_id = -1;  // argmax fine-tuned accuracy
  int evaluated_now = 0;  // candidates computed in this call
};

template <typename T>
SearchResult run_search(const NetworkSpec& spec, const ParamStore<T>& params,
                        const SearchData& data, const SearchConfig& config,
                        const TrainConfig& finetune_config,
                        const SearchHooks<T>& hooks = {});

// "unconstrained" or the target as a percentage ("50%", "62.5%").
std::string constraint_label(const std::optional<double>& flops_target);

struct BNChannelDistance {
  int layer = 0;
  int64_t channel = 0;
  double mean_distance = 0;  // |mu_a - mu_b|
  double var_distance = 0;   // |var_a - var_b|
};

// Per-channel distance between the moving statistics of two parameter stores
// with identical BN structure.
template <typename T>
std::vector<BNChannelDistance> bn_stats_distance(const ParamStore<T>& a,
                                                 const ParamStore<T>& b);

// "True" statistics: a copy of `params` whose BN moving statistics are the
// plain average of batch statistics over one Recalibrate-mode pass of
// `validation`.
template <typename T>
ParamStore<T> true_bn_stats(const NetworkSpec& spec,
                            const ParamStore<T>& params,
                            const DatasetSplit& validation, int batch_size);

}  // namespace recalprune

#endif  // RECALPRUNE_SEARCH_H_
