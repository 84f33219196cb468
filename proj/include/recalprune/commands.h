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

#ifndef RECALPRUNE_COMMANDS_H_
#define RECALPRUNE_COMMANDS_H_

#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "recalprune/config.h"
#include "recalprune/correlation.h"
#include "recalprune/search.h"

namespace recalprune {

enum class Precision { kF32, kF64 };

// RECALPRUNE_PRECISION=f32|f64, default f32. Anything else is a ConfigError.
Precision precision_from_env();

// 2 config, 3 data or checkpoint, 4 numeric, 1 anything else.
int exit_code_for(const std::exception& e);

struct TrainSummary {
  std::string checkpoint;
  double test_accuracy = 0;
};

// Every command writes resolved_config.json into config.output_dir first.
template <typename T>
TrainSummary cmd_train(const ExperimentConfig& config);

struct SearchSummary {
  SearchResult result;
  std::string candidates_path;
  std::string scatter_path;
  std::string winner_checkpoint;  // empty when nothing was fine-tuned
};

// Resumes from <out>/candidates.jsonl when present.
template <typename T>
SearchSummary cmd_search(const ExperimentConfig& config,
                         const std::string& checkpoint_path);

struct FinetuneSummary {
  double pre_accuracy = 0;
  double best_accuracy = 0;
  std::string checkpoint;
  std::string histogram_path;
};

template <typename T>
FinetuneSummary cmd_finetune(const ExperimentConfig& config,
                             const std::string& checkpoint_path);

// Fine-tunes every candidate of every file (resuming from
// <out>/finetuned_<i>.jsonl) and writes correlation_report.csv and
// correlation_scatter.csv. Reports are ordered unconstrained, then by
// decreasing FLOPs target.
template <typename T>
std::vector<CorrelationReport> cmd_correlate(
    const ExperimentConfig& config, const std::string& checkpoint_path,
    const std::vector<std::string>& candidate_files);

struct BNDistanceRow {
  int layer = 0;
  int64_t channel = 0;
  double mean_global = 0;
  double mean_adaptive = 0;
  double var_global = 0;
  double var_adaptive = 0;
};

// `pruned_path` must embed its strategy. Global statistics are the ones the
// pruned layers inherit from the full model, adaptive ones are re-estimated
// on the recalibration split, and the reference is the test split's own
// statistics under the same weights.
template <typename T>
std::vector<BNDistanceRow> cmd_bn_distance(const ExperimentConfig& config,
                                           const std::string& full_path,
                                           const std::string& pruned_path);

template <typename T>
double cmd_eval(const ExperimentConfig& config,
                const std::string& checkpoint_path);

// argv-style entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace recalprune

#endif  // RECALPRUNE_COMMANDS_H_
