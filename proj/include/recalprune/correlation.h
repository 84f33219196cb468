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

#ifndef RECALPRUNE_CORRELATION_H_
#define RECALPRUNE_CORRELATION_H_

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace recalprune {

struct CandidateRecord;

// Sample Pearson correlation. Throws CorrelationError for mismatched or short
// inputs and for constant vectors.
double pearson(std::span<const double> x, std::span<const double> y);

// Pearson of the fractional ranks (ties share their average rank).
double spearman(std::span<const double> x, std::span<const double> y);

// Kendall tau-b: (C - D) / sqrt((n0 - n1)(n0 - n2)), O(n^2).
double kendall(std::span<const double> x, std::span<const double> y);

// 1-based fractional ranks.
std::vector<double> average_ranks(std::span<const double> v);

// X1 = adaptive-BN evaluated accuracy, X2 = vanilla evaluated accuracy,
// Y = fine-tuned accuracy.
struct CorrelationReport {
  std::string label;
  size_t n = 0;
  double pearson_adaptive = 0;
  double pearson_vanilla = 0;
  double spearman_adaptive = 0;
  double spearman_vanilla = 0;
  double kendall_adaptive = 0;
  double kendall_vanilla = 0;
};

// Requires >= 3 records, every one fine-tuned.
CorrelationReport build_report(const std::vector<CandidateRecord>& records,
                               const std::string& label);

// Columns: constraint, n, pearson_x1_y, pearson_x2_y, spearman_x1_y,
// spearman_x2_y, kendall_x1_y, kendall_x2_y.
void write_report_csv(std::ostream& out,
                      const std::vector<CorrelationReport>& reports);

// Columns: constraint, id, acc_evaluated, acc_finetuned, method (adaptive | vanilla).
void write_scatter_csv(std::ostream& out,
                       const std::vector<CandidateRecord>& records);

}  // namespace recalprune

#endif  // RECALPRUNE_CORRELATION_H_
