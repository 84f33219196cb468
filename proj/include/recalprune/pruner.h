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

#ifndef RECALPRUNE_PRUNER_H_
#define RECALPRUNE_PRUNER_H_

#include <cstdint>
#include <string>
#include <vector>

#include "recalprune/netgraph.h"

namespace recalprune {

enum class Criterion { kL1Norm, kL2Norm };

const char* to_string(Criterion c);
Criterion criterion_from_string(const std::string& name);

// Layer-wise pruning ratios, one per prunable layer in network order.
struct PruningStrategy {
  std::vector<double> ratios;
  double realized_flops_ratio = 1.0;

  friend bool operator==(const PruningStrategy&,
                         const PruningStrategy&) = default;
};

// Number of filters removed from a layer with `channels` outputs at ratio r:
// floor(r * channels). Ratios must lie in [0, 1); r >= 1 would empty the
// layer and throws PruningError.
int64_t filters_to_remove(int64_t channels, double ratio);

// Per-filter importance over the filter's full kernel: sum |w| or
// sqrt(sum w^2).
template <typename T>
std::vector<double> filter_norms(const NetworkSpec& spec,
                                 const ParamStore<T>& params, int layer_index,
                                 Criterion criterion);

// Filter indices ordered least important first; ties keep the lower index
// first.
template <typename T>
std::vector<int64_t> rank_filters(const NetworkSpec& spec,
                                  const ParamStore<T>& params, int layer_index,
                                  Criterion criterion);

template <typename T>
struct PrunedModel {
  NetworkSpec spec;
  ParamStore<T> params;
  // Kept output channels (original indices, ascending) of every layer that
  // owns channels; empty for layers that do not.
  std::vector<std::vector<int64_t>> kept;
  // Depthwise layers whose channel set was inherited from their producer.
  std::vector<int> coupled_layers;
};

// Shape arithmetic only: the NetworkSpec apply_strategy would produce.
NetworkSpec pruned_spec(const NetworkSpec& spec,
                        const std::vector<double>& ratios);

// Removes floor(r_l * C_out) lowest-ranked filters from every prunable layer
// and carries the removal through the graph: the following BN drops the same
// channels, the next parameterized layer drops the matching input channels
// (or input-feature blocks after a flatten), depthwise layers keep their
// producer's channel set, and the classifier's outputs are never touched.
template <typename T>
PrunedModel<T> apply_strategy(const NetworkSpec& spec,
                              const ParamStore<T>& params,
                              const PruningStrategy& strategy,
                              Criterion criterion);

// count_flops(pruned) / count_flops(original).
double strategy_flops_ratio(const NetworkSpec& spec,
                            const std::vector<double>& ratios);

}  // namespace recalprune

#endif  // RECALPRUNE_PRUNER_H_
