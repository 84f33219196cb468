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

#include "recalprune/correlation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "recalprune/errors.h"
#include "recalprune/search.h"

namespace recalprune {
namespace {

void check_pair(std::span<const double> x, std::span<const double> y,
                const char* what) {
  if (x.size() != y.size()) {
    throw CorrelationError(std::string(what) + ": length mismatch (" +
                           std::to_string(x.size()) + " vs " +
                           std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) {
    throw CorrelationError(std::string(what) + " needs at least 2 samples");
  }
}

std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "pearson");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) {
    throw CorrelationError("pearson: correlation undefined for a constant "
                           "vector");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "spearman");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  try {
    return pearson(rx, ry);
  } catch (const CorrelationError&) {
    throw CorrelationError("spearman: correlation undefined for an all-tied "
                           "vector");
  }
}

double kendall(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "kendall");
  // n1 / n2 count pairs tied in x / y; pairs tied in both add to both.
  int64_t concordant = 0, discordant = 0, tied_x = 0, tied_y = 0, pairs = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    for (size_t j = i + 1; j < x.size(); ++j) {
      ++pairs;
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0) ++tied_x;
      if (dy == 0) ++tied_y;
      if (dx == 0 || dy == 0) continue;
      if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double denom = std::sqrt(static_cast<double>(pairs - tied_x)) *
                       std::sqrt(static_cast<double>(pairs - tied_y));
  if (denom == 0) {
    throw CorrelationError("kendall: tau-b undefined for an all-tied vector");
  }
  return std::clamp(static_cast<double>(concordant - discordant) / denom, -1.0,
                    1.0);
}

CorrelationReport build_report(const std::vector<CandidateRecord>& records,
                               const std::string& label) {
  if (records.size() < 3) {
    throw CorrelationError("correlation report '" + label + "' needs >= 3 "
                           "records, got " + std::to_string(records.size()));
  }
  std::vector<double> x1, x2, y;
  for (const CandidateRecord& r : records) {
    if (!r.acc_finetuned) {
      throw CorrelationError("candidate " + std::to_string(r.id) +
                             " has no fine-tuned accuracy");
    }
    x1.push_back(r.acc_adaptive);
    x2.push_back(r.acc_vanilla);
    y.push_back(*r.acc_finetuned);
  }
  CorrelationReport rep;
  rep.label = label;
  rep.n = records.size();
  rep.pearson_adaptive = pearson(x1, y);
  rep.pearson_vanilla = pearson(x2, y);
  rep.spearman_adaptive = spearman(x1, y);
  rep.spearman_vanilla = spearman(x2, y);
  rep.kendall_adaptive = kendall(x1, y);
  rep.kendall_vanilla = kendall(x2, y);
  return rep;
}

void write_report_csv(std::ostream& out,
                      const std::vector<CorrelationReport>& reports) {
  out << "constraint,n,pearson_x1_y,pearson_x2_y,spearman_x1_y,spearman_x2_y,"
         "kendall_x1_y,kendall_x2_y\n";
  for (const CorrelationReport& r : reports) {
    out << r.label << ',' << r.n << ',' << csv_number(r.pearson_adaptive) << ','
        << csv_number(r.pearson_vanilla) << ','
        << csv_number(r.spearman_adaptive) << ','
        << csv_number(r.spearman_vanilla) << ','
        << csv_number(r.kendall_adaptive) << ','
        << csv_number(r.kendall_vanilla) << '\n';
  }
}

void write_scatter_csv(std::ostream& out,
                       const std::vector<CandidateRecord>& records) {
  out << "constraint,id,acc_evaluated,acc_finetuned,method\n";
  for (const char* method : {"adaptive", "vanilla"}) {
    for (const CandidateRecord& r : records) {
      if (!r.acc_finetuned) continue;
      const double eval =
          method[0] == 'a' ? r.acc_adaptive : r.acc_vanilla;
      out << r.constraint << ',' << r.id << ',' << csv_number(eval) << ','
          << csv_number(*r.acc_finetuned) << ',' << method << '\n';
    }
  }
}

}  // namespace recalprune
