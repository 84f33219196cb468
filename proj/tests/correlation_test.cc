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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "recalprune/errors.h"
#include "recalprune/search.h"
#include "oracles.h"

namespace recalprune {
namespace {

using testing::oracle_kendall;
using testing::oracle_pearson;
using testing::oracle_spearman;
using V = std::vector<double>;

bool constant(const V& v) {
  for (double x : v) if (x != v[0]) return false;
  return true;
}

// Length 3..50; integer-valued draws in [0, 5] when `ties`.
V draw(std::mt19937_64& rng, size_t n, bool ties) {
  V v(n);
  std::uniform_real_distribution<double> u(-3, 3);
  std::uniform_int_distribution<int> k(0, 5);
  do {
    for (double& x : v) x = ties ? k(rng) : u(rng);
  } while (constant(v));
  return v;
}

TEST(Pearson, Examples) {
  EXPECT_NEAR(pearson(V{1, 2, 3, 4}, V{1, 3, 2, 4}), 0.8, 1e-15);
  EXPECT_NEAR(pearson(V{1, 2, 3, 5}, V{1, 2, 3, 5}), 1.0, 1e-15);
  EXPECT_NEAR(pearson(V{1, 2, 3, 5}, V{-1, -2, -3, -5}), -1.0, 1e-15);
  EXPECT_THROW(pearson(V{1, 1, 1}, V{1, 2, 3}), CorrelationError);
  EXPECT_THROW(pearson(V{1, 2}, V{1, 2, 3}), CorrelationError);
  EXPECT_THROW(pearson(V{1}, V{1}), CorrelationError);
}

TEST(Spearman, Examples) {
  EXPECT_NEAR(spearman(V{1, 2, 3, 4}, V{1, 3, 2, 4}), 0.8, 1e-15);
  EXPECT_NEAR(spearman(V{1, 1, 2}, V{3, 3, 4}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(V{1, 2, 3, 4}, V{1, 8, 27, 64}), 1.0, 1e-15);
  EXPECT_EQ(average_ranks(V{1, 1, 2}), (V{1.5, 1.5, 3}));
  EXPECT_EQ(average_ranks(V{3, 1, 2, 1}), (V{4, 1.5, 3, 1.5}));
  EXPECT_THROW(spearman(V{2, 2, 2}, V{1, 2, 3}), CorrelationError);
}

TEST(Kendall, Examples) {
  EXPECT_NEAR(kendall(V{1, 2, 3, 4}, V{1, 3, 2, 4}), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(kendall(V{1, 2, 3, 4}, V{1, 2, 3, 4}), 1.0, 1e-15);
  EXPECT_NEAR(kendall(V{1, 2, 3, 4}, V{4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_THROW(kendall(V{1, 1, 1}, V{1, 2, 3}), CorrelationError);
}

TEST(Oracles, MatchBruteForce) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<size_t> len(3, 50);
  for (int trial = 0; trial < 100; ++trial) {
    const bool ties = trial % 2 == 0;
    const size_t n = len(rng);
    const V x = draw(rng, n, ties), y = draw(rng, n, ties);
    EXPECT_NEAR(pearson(x, y), oracle_pearson(x, y), 1e-12) << trial;
    EXPECT_NEAR(spearman(x, y), oracle_spearman(x, y), 1e-12) << trial;
    EXPECT_NEAR(kendall(x, y), oracle_kendall(x, y), 1e-12) << trial;
    EXPECT_EQ(average_ranks(x), testing::oracle_ranks(x)) << trial;
  }
}

TEST(Properties, SymmetryAndBounds) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const V x = draw(rng, 20, trial % 3 == 0), y = draw(rng, 20, trial % 2 == 0);
    for (auto f : {pearson, spearman, kendall}) {
      const double a = f(x, y);
      EXPECT_NEAR(a, f(y, x), 1e-14);
      EXPECT_LE(std::abs(a), 1.0 + 1e-15);
    }
  }
}

TEST(Properties, MonotoneInvariance) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> scale(0.1, 10), shift(-5, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const V x = draw(rng, 25, trial % 2 == 0), y = draw(rng, 25, trial % 2 == 1);
    const double a = scale(rng), b = shift(rng), p = scale(rng) / 3;
    V affine = x, mono = x;
    for (double& v : affine) v = a * v + b;
    // Strictly increasing, non-affine.
    for (double& v : mono) v = std::exp(p * v) + a * v;
    EXPECT_NEAR(pearson(affine, y), pearson(x, y), 1e-12);
    EXPECT_NEAR(spearman(mono, y), spearman(x, y), 1e-12);
    EXPECT_NEAR(kendall(mono, y), kendall(x, y), 1e-12);
  }
}

CandidateRecord record(int id, double adaptive, double vanilla,
                       std::optional<double> finetuned) {
  CandidateRecord r;
  r.id = id;
  r.acc_adaptive = adaptive;
  r.acc_vanilla = vanilla;
  r.acc_finetuned = finetuned;
  r.constraint = "50%";
  return r;
}

TEST(Report, AdaptiveEqualToFinetunedGivesOnes) {
  std::vector<CandidateRecord> rs;
  for (int i = 0; i < 5; ++i) rs.push_back(record(i, 0.1 * i, 0.3 - 0.05 * (i % 2), 0.1 * i));
  const CorrelationReport r = build_report(rs, "50%");
  EXPECT_EQ(r.n, 5u);
  EXPECT_NEAR(r.pearson_adaptive, 1.0, 1e-12);
  EXPECT_NEAR(r.spearman_adaptive, 1.0, 1e-12);
  EXPECT_NEAR(r.kendall_adaptive, 1.0, 1e-12);
  V van, y;
  for (const CandidateRecord& c : rs) {
    van.push_back(c.acc_vanilla);
    y.push_back(*c.acc_finetuned);
  }
  EXPECT_NEAR(r.spearman_vanilla, oracle_spearman(van, y), 1e-12);
}

TEST(Report, Errors) {
  std::vector<CandidateRecord> two{record(0, 0.1, 0.2, 0.3), record(1, 0.2, 0.1, 0.4)};
  EXPECT_THROW(build_report(two, "x"), CorrelationError);
  two.push_back(record(2, 0.3, 0.3, std::nullopt));
  EXPECT_THROW(build_report(two, "x"), CorrelationError);
}

TEST(Report, CsvLayout) {
  std::vector<CandidateRecord> rs{record(0, 0.1, 0.2, 0.3), record(1, 0.2, 0.1, 0.4),
                                  record(2, 0.3, 0.3, 0.5)};
  std::ostringstream report, scatter;
  write_report_csv(report, {build_report(rs, "50%")});
  write_scatter_csv(scatter, rs);
  std::istringstream lines(report.str());
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_EQ(header,
            "constraint,n,pearson_x1_y,pearson_x2_y,spearman_x1_y,spearman_x2_y,"
            "kendall_x1_y,kendall_x2_y");
  EXPECT_EQ(row.rfind("50%,3,1,", 0), 0u) << row;
  const std::string s = scatter.str();
  EXPECT_EQ(s.rfind("constraint,id,acc_evaluated,acc_finetuned,method\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 7);
  EXPECT_NE(s.find("50%,1,0.20000000000000001,0.40000000000000002,adaptive"),
            std::string::npos) << s;
  EXPECT_NE(s.find("50%,1,0.10000000000000001,0.40000000000000002,vanilla"),
            std::string::npos) << s;
}

}  // namespace
}  // namespace recalprune
