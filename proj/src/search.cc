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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "recalprune/errors.h"
#include "recalprune/worker_pool.h"

namespace recalprune {
namespace {

// SplitMix64 finalizer: decorrelates per-candidate seeds.
uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr uint64_t kRecalibStream = 1;
constexpr uint64_t kFinetuneStream = 2;

void require(const DatasetSplit* split, const char* name) {
  if (split == nullptr || split->size() == 0) {
    throw DataError(std::string("search needs a non-empty ") + name +
                    " split");
  }
}

}  // namespace

void SearchConfig::validate() const {
  if (candidate_count < 1) throw ConfigError("candidate_count must be >= 1");
  if (!(max_ratio >= 0 && max_ratio < 1)) {
    throw ConfigError("max_ratio R must lie in [0, 1)");
  }
  if (!(first_layer_max_ratio >= 0 && first_layer_max_ratio < 1)) {
    throw ConfigError("first_layer_max_ratio must lie in [0, 1)");
  }
  if (flops_target && !(*flops_target > 0 && *flops_target <= 1)) {
    throw ConfigError("flops_target must lie in (0, 1]");
  }
  if (!(flops_tolerance >= 0)) throw ConfigError("flops_tolerance must be >= 0");
  if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (recalib_iterations < 1) throw ConfigError("recalib_iterations must be >= 1");
  if (!(recalib_fraction > 0 && recalib_fraction < 1)) {
    throw ConfigError("recalib_fraction must lie in (0, 1)");
  }
  if (!(subval_fraction > 0 && subval_fraction < 1)) {
    throw ConfigError("subval_fraction must lie in (0, 1)");
  }
  if (top_k_to_finetune < 0) throw ConfigError("top_k_to_finetune must be >= 0");
  if (!(recalib_momentum >= 0 && recalib_momentum < 1)) {
    throw ConfigError("recalib_momentum must lie in [0, 1)");
  }
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

std::vector<PruningStrategy> generate_strategies(const NetworkSpec& spec,
                                                 const SearchConfig& config) {
  config.validate();
  validate(spec);
  const size_t layers = prunable_layer_indices(spec).size();
  std::mt19937_64 rng(config.seed);
  std::vector<PruningStrategy> out;
  out.reserve(static_cast<size_t>(config.candidate_count));
  const double first_bound =
      std::min(config.max_ratio, config.first_layer_max_ratio);
  for (int c = 0; c < config.candidate_count; ++c) {
    bool accepted = false;
    for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
      PruningStrategy s;
      s.ratios.resize(layers);
      for (size_t l = 0; l < layers; ++l) {
        const double bound = l == 0 ? first_bound : config.max_ratio;
        s.ratios[l] = std::uniform_real_distribution<double>(0.0, bound)(rng);
      }
      s.realized_flops_ratio = strategy_flops_ratio(spec, s.ratios);
      if (config.flops_target &&
          std::abs(s.realized_flops_ratio - *config.flops_target) >
              config.flops_tolerance) {
        continue;
      }
      out.push_back(std::move(s));
      accepted = true;
      break;
    }
    if (!accepted) {
      throw SearchError(
          "no strategy within " + std::to_string(config.flops_tolerance) +
          " of FLOPs target " + std::to_string(*config.flops_target) +
          " after " + std::to_string(config.max_attempts) +
          " attempts (R = " + std::to_string(config.max_ratio) +
          "); the target is infeasible for this network");
    }
  }
  return out;
}

PruningStrategy uniform_strategy(const NetworkSpec& spec,
                                 double flops_target) {
  const size_t layers = prunable_layer_indices(spec).size();
  PruningStrategy best;
  double best_gap = 2.0;
  // Ratios only matter through floor(r * C); a 1e-3 grid visits every
  // distinct pruned shape for layers of up to 1000 channels.
  for (int step = 0; step < 1000; ++step) {
    const double r = step / 1000.0;
    std::vector<double> ratios(layers, r);
    const double flops = strategy_flops_ratio(spec, ratios);
    const double gap = std::abs(flops - flops_target);
    if (gap < best_gap) {
      best_gap = gap;
      best.ratios = ratios;
      best.realized_flops_ratio = flops;
    }
  }
  return best;
}

template <typename T>
double evaluate_vanilla(const NetworkSpec& spec, const ParamStore<T>& params,
                        const DatasetSplit& subval) {
  ParamStore<T> copy = params;
  return evaluate_accuracy(spec, copy, subval);
}

template <typename T>
void recalibrate_bn(const NetworkSpec& spec, ParamStore<T>& params,
                    const DatasetSplit& recalib, int iterations,
                    int batch_size, double momentum, StatsUpdate update,
                    uint64_t seed) {
  if (recalib.size() == 0) {
    throw DataError("adaptive BN needs a non-empty recalibration subset");
  }
  if (batch_size < 2) throw ConfigError("recalibration batch_size must be >= 2");
  std::vector<T> saved_momentum;
  for (auto& p : params.layers) {
    if (!p.bn) continue;
    saved_momentum.push_back(p.bn->momentum);
    reset_moving_stats(*p.bn);
    p.bn->momentum = static_cast<T>(momentum);
    p.bn->update = update;
  }
  std::mt19937_64 rng(seed);
  std::vector<int64_t> order(static_cast<size_t>(recalib.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = order.size();
  const auto batch = std::min<size_t>(static_cast<size_t>(batch_size), n);
  if (batch < 2) {
    throw DataError("recalibration subset needs at least 2 samples");
  }
  std::vector<int64_t> rows(batch);
  size_t cursor = 0;
  for (int it = 0; it < iterations; ++it) {
    for (size_t j = 0; j < batch; ++j) {
      rows[j] = order[cursor];
      cursor = (cursor + 1) % n;
    }
    forward(spec, params, gather_images<T>(recalib, rows),
            BNMode::kRecalibrate);
  }
  size_t k = 0;
  for (auto& p : params.layers) {
    if (!p.bn) continue;
    p.bn->momentum = saved_momentum[k++];
    p.bn->update = StatsUpdate::kMomentum;
    p.bn->mode = BNMode::kEval;
  }
}

template <typename T>
double evaluate_adaptive(const NetworkSpec& spec, const ParamStore<T>& params,
                         const DatasetSplit& recalib,
                         const DatasetSplit& subval, const SearchConfig& config,
                         uint64_t seed, ParamStore<T>* recalibrated) {
  if (subval.size() == 0) throw DataError("sub-validation split is empty");
  ParamStore<T> copy = params;
  recalibrate_bn(spec, copy, recalib, config.recalib_iterations,
                 config.batch_size, config.recalib_momentum,
                 config.recalib_update, seed);
  const double acc = evaluate_accuracy(spec, copy, subval);
  if (recalibrated) *recalibrated = std::move(copy);
  return acc;
}

template <typename T>
CandidateModel<T> evaluate_candidate(const NetworkSpec& spec,
                                     const ParamStore<T>& params,
                                     const PruningStrategy& strategy, int id,
                                     const SearchData& data,
                                     const SearchConfig& config) {
  require(data.subval, "sub-validation");
  require(data.recalib, "recalibration");
  CandidateModel<T> out;
  out.model = apply_strategy(spec, params, strategy, config.criterion);
  out.record.id = id;
  out.record.criterion = config.criterion;
  out.record.strategy = strategy;
  out.record.strategy.realized_flops_ratio =
      static_cast<double>(count_flops(out.model.spec).total) /
      static_cast<double>(count_flops(spec).total);
  if (config.analysis_mode) {
    out.record.acc_vanilla =
        evaluate_vanilla(out.model.spec, out.model.params, *data.subval);
  }
  ParamStore<T> recalibrated;
  out.record.acc_adaptive = evaluate_adaptive(
      out.model.spec, out.model.params, *data.recalib, *data.subval, config,
      mix_seed(config.seed, kRecalibStream * 1000003ULL + static_cast<uint64_t>(id)),
      &recalibrated);
  out.model.params = std::move(recalibrated);
  return out;
}

template <typename T>
double finetune_candidate(const NetworkSpec& spec, const ParamStore<T>& params,
                          const CandidateRecord& record, const SearchData& data,
                          const SearchConfig& config,
                          const TrainConfig& finetune_config,
                          PrunedModel<T>* finetuned,
                          const EpochCallback<T>& on_epoch) {
  require(data.train, "training");
  require(data.test, "test");
  SearchConfig eval_config = config;
  eval_config.analysis_mode = false;
  eval_config.criterion = record.criterion;
  CandidateModel<T> cand = evaluate_candidate(spec, params, record.strategy,
                                              record.id, data, eval_config);
  TrainConfig tc = finetune_config;
  tc.seed = mix_seed(finetune_config.seed,
                     kFinetuneStream * 1000003ULL + static_cast<uint64_t>(record.id));
  const double acc = finetune(cand.model.spec, cand.model.params, *data.train,
                              *data.test, tc, on_epoch);
  if (finetuned) *finetuned = std::move(cand.model);
  return acc;
}

std::string constraint_label(const std::optional<double>& flops_target) {
  if (!flops_target) return "unconstrained";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%%", *flops_target * 100.0);
  return buf;
}

void rank_candidates(std::vector<CandidateRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const CandidateRecord& a, const CandidateRecord& b) {
              if (a.acc_adaptive != b.acc_adaptive) {
                return a.acc_adaptive > b.acc_adaptive;
              }
              return a.id < b.id;
            });
}

template <typename T>
SearchResult run_search(const NetworkSpec& spec, const ParamStore<T>& params,
                        const SearchData& data, const SearchConfig& config,
                        const TrainConfig& finetune_config,
                        const SearchHooks<T>& hooks) {
  config.validate();
  require(data.subval, "sub-validation");
  require(data.recalib, "recalibration");
  const std::vector<PruningStrategy> strategies =
      generate_strategies(spec, config);

  std::map<int, CandidateRecord> done;
  for (const CandidateRecord& r : hooks.completed) {
    if (r.id < 0 || r.id >= config.candidate_count) continue;
    if (!(r.strategy.ratios == strategies[static_cast<size_t>(r.id)].ratios)) {
      throw SearchError("stored candidate " + std::to_string(r.id) +
                        " does not match the strategy regenerated from the "
                        "configured seed");
    }
    if (r.criterion != config.criterion) {
      throw SearchError("stored candidate " + std::to_string(r.id) +
                        " was ranked with " + to_string(r.criterion) +
                        ", the search is configured for " +
                        to_string(config.criterion));
    }
    done[r.id] = r;
  }
  std::vector<int> pending;
  for (int id = 0; id < config.candidate_count; ++id) {
    if (!done.count(id)) pending.push_back(id);
  }

  SearchResult result;
  result.evaluated_now = static_cast<int>(pending.size());
  const std::string label = constraint_label(config.flops_target);
  ordered_parallel_for<CandidateModel<T>>(
      pending.size(), config.workers,
      [&](size_t i) {
        const int id = pending[i];
        CandidateModel<T> c = evaluate_candidate(
            spec, params, strategies[static_cast<size_t>(id)], id, data,
            config);
        c.record.constraint = label;
        return c;
      },
      [&](size_t, CandidateModel<T>& c) {
        if (hooks.on_evaluated) hooks.on_evaluated(c.record, c.model);
        done[c.record.id] = c.record;
      });

  std::vector<CandidateRecord> ranked;
  for (auto& [id, r] : done) ranked.push_back(r);
  rank_candidates(ranked);

  std::vector<size_t> to_finetune;
  const size_t limit =
      hooks.finetune_all ? ranked.size()
                         : std::min(ranked.size(),
                                    static_cast<size_t>(config.top_k_to_finetune));
  for (size_t i = 0; i < limit; ++i) {
    if (!ranked[i].acc_finetuned) to_finetune.push_back(i);
  }
  if (!to_finetune.empty()) require(data.train, "training");
  using Finetuned = std::pair<double, PrunedModel<T>>;
  ordered_parallel_for<Finetuned>(
      to_finetune.size(), config.workers,
      [&](size_t i) {
        Finetuned f;
        f.first = finetune_candidate(spec, params, ranked[to_finetune[i]],
                                     data, config, finetune_config, &f.second);
        return f;
      },
      [&](size_t i, Finetuned& f) {
        CandidateRecord& r = ranked[to_finetune[i]];
        r.acc_finetuned = f.first;
        if (hooks.on_finetuned) hooks.on_finetuned(r, f.second);
      });

  double best = -1;
  for (size_t i = 0; i < limit; ++i) {
    result.finetuned_ids.push_back(ranked[i].id);
    if (ranked[i].acc_finetuned && *ranked[i].acc_finetuned > best) {
      best = *ranked[i].acc_finetuned;
      result.winner_id = ranked[i].id;
    }
  }
  result.ranked = std::move(ranked);
  return result;
}

template <typename T>
std::vector<BNChannelDistance> bn_stats_distance(const ParamStore<T>& a,
                                                 const ParamStore<T>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("BN distance: models have different layer counts");
  }
  std::vector<BNChannelDistance> rows;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].bn.has_value() != b[i].bn.has_value()) {
      throw ShapeError("BN distance: layer " + std::to_string(i) +
                       " is batch norm in only one model");
    }
    if (!a[i].bn) continue;
    const BNState<T>& x = *a[i].bn;
    const BNState<T>& y = *b[i].bn;
    if (x.channels() != y.channels()) {
      throw ShapeError("BN distance: layer " + std::to_string(i) + " has " +
                       std::to_string(x.channels()) + " vs " +
                       std::to_string(y.channels()) + " channels");
    }
    for (int64_t c = 0; c < x.channels(); ++c) {
      const auto k = static_cast<size_t>(c);
      rows.push_back({static_cast<int>(i), c,
                      std::abs(static_cast<double>(x.moving_mean[k]) -
                               static_cast<double>(y.moving_mean[k])),
                      std::abs(static_cast<double>(x.moving_var[k]) -
                               static_cast<double>(y.moving_var[k]))});
    }
  }
  return rows;
}

template <typename T>
ParamStore<T> true_bn_stats(const NetworkSpec& spec,
                            const ParamStore<T>& params,
                            const DatasetSplit& validation, int batch_size) {
  if (validation.size() < 2) {
    throw DataError("true BN statistics need at least 2 validation samples");
  }
  ParamStore<T> copy = params;
  for (auto& p : copy.layers) {
    if (!p.bn) continue;
    reset_moving_stats(*p.bn);
    p.bn->update = StatsUpdate::kCumulativeAverage;
  }
  std::vector<int64_t> rows;
  for (int64_t start = 0; start < validation.size(); start += batch_size) {
    int64_t len = std::min<int64_t>(batch_size, validation.size() - start);
    // Fold a one-sample tail into nothing: it has no batch variance.
    if (len < 2) break;
    rows.resize(static_cast<size_t>(len));
    std::iota(rows.begin(), rows.end(), start);
    forward(spec, copy, gather_images<T>(validation, rows),
            BNMode::kRecalibrate);
  }
  for (auto& p : copy.layers) {
    if (!p.bn) continue;
    p.bn->update = StatsUpdate::kMomentum;
    p.bn->mode = BNMode::kEval;
  }
  return copy;
}

#define RECALPRUNE_INSTANTIATE_SEARCH(T)                                           \
  template double evaluate_vanilla(const NetworkSpec&, const ParamStore<T>&,  \
                                   const DatasetSplit&);                      \
  template void recalibrate_bn(const NetworkSpec&, ParamStore<T>&,            \
                               const DatasetSplit&, int, int, double,         \
                               StatsUpdate, uint64_t);                        \
  template double evaluate_adaptive(const NetworkSpec&, const ParamStore<T>&, \
                                    const DatasetSplit&, const DatasetSplit&, \
                                    const SearchConfig&, uint64_t,            \
                                    ParamStore<T>*);                          \
  template CandidateModel<T> evaluate_candidate(                              \
      const NetworkSpec&, const ParamStore<T>&, const PruningStrategy&, int,  \
      const SearchData&, const SearchConfig&);                                \
  template double finetune_candidate(                                         \
      const NetworkSpec&, const ParamStore<T>&, const CandidateRecord&,       \
      const SearchData&, const SearchConfig&, const TrainConfig&,             \
      PrunedModel<T>*, const EpochCallback<T>&);                              \
  template SearchResult run_search(const NetworkSpec&, const ParamStore<T>&,  \
                                   const SearchData&, const SearchConfig&,    \
                                   const TrainConfig&,                        \
                                   const SearchHooks<T>&);                   \
  template std::vector<BNChannelDistance> bn_stats_distance(                  \
      const ParamStore<T>&, const ParamStore<T>&);                            \
  template ParamStore<T> true_bn_stats(const NetworkSpec&,                    \
                                       const ParamStore<T>&,                  \
                                       const DatasetSplit&, int);

RECALPRUNE_INSTANTIATE_SEARCH(float)
RECALPRUNE_INSTANTIATE_SEARCH(double)

}  // namespace recalprune
