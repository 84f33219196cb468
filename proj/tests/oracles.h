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

#ifndef RECALPRUNE_TESTS_ORACLES_H_
#define RECALPRUNE_TESTS_ORACLES_H_

#include <cstdint>
#include <vector>

#include "recalprune/netgraph.h"

namespace recalprune::testing {

// Two-pass textbook formula in long double.
double oracle_pearson(const std::vector<double>& x,
                      const std::vector<double>& y);

// rank_i = 1 + #{v_j < v_i} + (#{v_j == v_i} - 1) / 2, by pairwise counting.
std::vector<double> oracle_ranks(const std::vector<double>& v);

double oracle_spearman(const std::vector<double>& x,
                       const std::vector<double>& y);

// Exhaustive pair enumeration:
// (C - D) / sqrt((C + D + ties_y_only) * (C + D + ties_x_only)).
double oracle_kendall(const std::vector<double>& x,
                      const std::vector<double>& y);

// Runs one sample through a loop-level forward that counts every
// multiply-accumulate it performs (padding taps included).
int64_t instrumented_macs(const NetworkSpec& spec);

}  // namespace recalprune::testing

#endif  // RECALPRUNE_TESTS_ORACLES_H_
