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

#include "recalprune/commands.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>

#include "CLI11.hpp"
#include "recalprune/checkpoint.h"
#include "recalprune/errors.h"
#include "recalprune/records.h"
#include "recalprune/worker_pool.h"

namespace recalprune {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path + "'");
}

void prepare_output(const ExperimentConfig& config) {
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) {
    throw DataError("cannot create output directory '" + config.output_dir +
                    "': " + ec.message());
  }
  write_text(join(config.output_dir, "resolved_config.json"),
             config_to_json(config).dump(2) + "\n");
}

// Loaded data and the splits carved from it. Not movable: SearchData points
// into it.
struct Workspace {
  explicit Workspace(const ExperimentConfig& config)
      : data(load_dataset(config.dataset)),
        splits(make_splits(data.train, config.dataset.subval_fraction,
                           config.dataset.recalib_fraction,
                           config.dataset.seed)) {
    search.train = &splits.train;
    search.subval = &splits.subval;
    search.recalib = &splits.recalib;
    search.test = &data.test;
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  LoadedData data;
  Splits splits;
  SearchData search;
};

template <typename T>
struct Model {
  NetworkSpec spec;
  ParamStore<T> params;
  std::optional<PruningStrategy> strategy;
  Criterion criterion = Criterion::kL1Norm;
};

template <typename T>
Model<T> load_model(const std::string& path, const Workspace& ws) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.spec.input_shape != ws.data.test.sample_shape()) {
    throw DataError("checkpoint '" + path + "' expects input " +
                    shape_string(ckpt.spec.input_shape) +
                    " but the dataset provides " +
                    shape_string(ws.data.test.sample_shape()));
  }
  if (ckpt.spec.class_count != ws.data.test.class_count) {
    throw DataError("checkpoint '" + path + "' has " +
                    std::to_string(ckpt.spec.class_count) +
                    " classes, dataset has " +
                    std::to_string(ws.data.test.class_count));
  }
  Model<T> m{std::move(ckpt.spec), ckpt.params.template cast<T>(),
             std::move(ckpt.strategy), ckpt.criterion};
  set_bn_mode(m.params, BNMode::kEval);
  return m;
}

template <typename T>
void save_model(const std::string& path, const NetworkSpec& spec,
                const ParamStore<T>& params,
                const std::optional<PruningStrategy>& strategy,
                Criterion criterion = Criterion::kL1Norm) {
  ParamStore<float> stored = params.template cast<float>();
  save_checkpoint(path,
                  Checkpoint{spec, std::move(stored), strategy, criterion});
}

std::string candidate_checkpoint(int id) {
  return "candidates/cand_" + std::to_string(id) + ".ckpt";
}

std::string finetuned_checkpoint(int id) {
  return "finetuned/cand_" + std::to_string(id) + ".ckpt";
}

// "unconstrained" sorts first, then FLOPs labels from the loosest target.
bool label_before(const std::string& a, const std::string& b) {
  if (a == b) return false;
  if (a == "unconstrained") return true;
  if (b == "unconstrained") return false;
  return std::strtod(a.c_str(), nullptr) > std::strtod(b.c_str(), nullptr);
}

}  // namespace

Precision precision_from_env() {
  const char* v = std::getenv("RECALPRUNE_PRECISION");
  if (v == nullptr || *v == '\0') return Precision::kF32;
  const std::string s(v);
  if (s == "f32") return Precision::kF32;
  if (s == "f64") return Precision::kF64;
  throw ConfigError("RECALPRUNE_PRECISION must be f32 or f64, got '" + s + "'");
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const CheckpointError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  return 1;
}

template <typename T>
TrainSummary cmd_train(const ExperimentConfig& config) {
  prepare_output(config);
  Workspace ws(config);
  const NetworkSpec spec = build_network(
      config.model, ws.data.train.sample_shape(), config.dataset.class_count);
  ParamStore<T> params = init_params<T>(spec, config.model.init_seed);
  JsonlWriter log(join(config.output_dir, "train_log.jsonl"), true);
  train(spec, params, ws.splits.train, ws.data.test, config.train,
        EpochCallback<T>([&](const EpochRecord& r, const ParamStore<T>&) {
          log.write(epoch_to_json(r));
        }));
  TrainSummary summary;
  summary.checkpoint = join(config.output_dir, "model.ckpt");
  summary.test_accuracy = evaluate_accuracy(spec, params, ws.data.test);
  save_model(summary.checkpoint, spec, params, std::nullopt);
  write_text(join(config.output_dir, "train_summary.json"),
             json{{"checkpoint", "model.ckpt"},
                  {"test_accuracy", summary.test_accuracy},
                  {"parameters", count_parameters(params)},
                  {"flops", count_flops(spec).total}}
                     .dump(2) +
                 "\n");
  return summary;
}

template <typename T>
SearchSummary cmd_search(const ExperimentConfig& config,
                         const std::string& checkpoint_path) {
  prepare_output(config);
  Workspace ws(config);
  const Model<T> full = load_model<T>(checkpoint_path, ws);
  const std::string& out = config.output_dir;
  fs::create_directories(join(out, "candidates"));
  fs::create_directories(join(out, "finetuned"));

  SearchSummary summary;
  summary.candidates_path = join(out, "candidates.jsonl");
  SearchHooks<T> hooks;
  hooks.completed = load_candidates(summary.candidates_path, true);
  JsonlWriter writer(summary.candidates_path);
  hooks.on_evaluated = [&](const CandidateRecord& rec,
                           const PrunedModel<T>& model) {
    CandidateRecord r = rec;
    r.checkpoint = candidate_checkpoint(rec.id);
    save_model(join(out, r.checkpoint), model.spec, model.params,
               rec.strategy, rec.criterion);
    writer.write(record_to_json(r));
  };
  hooks.on_finetuned = [&](const CandidateRecord& rec,
                           const PrunedModel<T>& model) {
    save_model(join(out, finetuned_checkpoint(rec.id)), model.spec,
               model.params, rec.strategy, rec.criterion);
    CandidateRecord r = rec;
    r.checkpoint = candidate_checkpoint(rec.id);
    writer.write(record_to_json(r));
  };
  summary.result = run_search(full.spec, full.params, ws.search, config.search,
                              config.finetune, hooks);

  std::vector<CandidateRecord> by_id = summary.result.ranked;
  std::sort(by_id.begin(), by_id.end(),
            [](const CandidateRecord& a, const CandidateRecord& b) {
              return a.id < b.id;
            });
  std::string csv = "id,flops_ratio,acc_vanilla,acc_adaptive\n";
  for (const CandidateRecord& r : by_id) {
    csv += std::to_string(r.id) + "," + fmt(r.strategy.realized_flops_ratio) +
           "," + fmt(r.acc_vanilla) + "," + fmt(r.acc_adaptive) + "\n";
  }
  summary.scatter_path = join(out, "search_scatter.csv");
  write_text(summary.scatter_path, csv);

  json winner = nullptr;
  if (summary.result.winner_id >= 0) {
    summary.winner_checkpoint =
        join(out, finetuned_checkpoint(summary.result.winner_id));
    for (const CandidateRecord& r : summary.result.ranked) {
      if (r.id == summary.result.winner_id) {
        winner = {{"id", r.id},
                  {"checkpoint", finetuned_checkpoint(r.id)},
                  {"acc_finetuned", *r.acc_finetuned},
                  {"flops_ratio", r.strategy.realized_flops_ratio}};
      }
    }
  }
  write_text(join(out, "search_summary.json"),
             json{{"constraint", constraint_label(config.search.flops_target)},
                  {"candidate_count", config.search.candidate_count},
                  {"evaluated_now", summary.result.evaluated_now},
                  {"finetuned_ids", summary.result.finetuned_ids},
                  {"winner", winner}}
                     .dump(2) +
                 "\n");
  return summary;
}

template <typename T>
FinetuneSummary cmd_finetune(const ExperimentConfig& config,
                             const std::string& checkpoint_path) {
  prepare_output(config);
  Workspace ws(config);
  Model<T> m = load_model<T>(checkpoint_path, ws);
  const std::string& out = config.output_dir;

  // Fixed per-layer bins from the starting weights: `histogram_bins` equal
  // bins up to the initial max |w| plus one open-ended overflow bin.
  std::vector<size_t> tracked;
  std::vector<std::vector<double>> edges;
  for (size_t i = 0; i < m.spec.layers.size(); ++i) {
    if (!m.spec.layers[i].has_weight()) continue;
    double hi = 0;
    for (T w : m.params[i].weight.values()) {
      hi = std::max(hi, std::abs(static_cast<double>(w)));
    }
    if (hi == 0) hi = 1;
    std::vector<double> e;
    for (int b = 0; b <= config.histogram_bins; ++b) {
      e.push_back(hi * b / config.histogram_bins);
    }
    e.push_back(std::numeric_limits<double>::infinity());
    tracked.push_back(i);
    edges.push_back(std::move(e));
  }
  FinetuneSummary summary;
  summary.histogram_path = join(out, "weight_histograms.csv");
  std::ofstream hist(summary.histogram_path, std::ios::trunc);
  if (!hist) throw DataError("cannot write '" + summary.histogram_path + "'");
  hist << "epoch,layer,bin_lo,bin_hi,count\n";
  auto emit = [&](int epoch, const ParamStore<T>& params) {
    for (size_t t = 0; t < tracked.size(); ++t) {
      const std::vector<int64_t> counts =
          weight_histogram(params, tracked[t], edges[t]);
      for (size_t b = 0; b < counts.size(); ++b) {
        hist << epoch << ',' << tracked[t] << ',' << fmt(edges[t][b]) << ','
             << fmt(edges[t][b + 1]) << ',' << counts[b] << '\n';
      }
    }
    hist.flush();
  };
  emit(0, m.params);

  JsonlWriter log(join(out, "finetune_log.jsonl"), true);
  summary.pre_accuracy = evaluate_accuracy(m.spec, m.params, ws.data.test);
  summary.best_accuracy = finetune(
      m.spec, m.params, ws.splits.train, ws.data.test, config.finetune,
      EpochCallback<T>([&](const EpochRecord& r, const ParamStore<T>& params) {
        log.write(epoch_to_json(r));
        emit(r.epoch, params);
      }));
  summary.checkpoint = join(out, "finetuned.ckpt");
  save_model(summary.checkpoint, m.spec, m.params, m.strategy, m.criterion);
  write_text(join(out, "finetune_summary.json"),
             json{{"pre_accuracy", summary.pre_accuracy},
                  {"best_accuracy", summary.best_accuracy},
                  {"checkpoint", "finetuned.ckpt"}}
                     .dump(2) +
                 "\n");
  return summary;
}

template <typename T>
std::vector<CorrelationReport> cmd_correlate(
    const ExperimentConfig& config, const std::string& checkpoint_path,
    const std::vector<std::string>& candidate_files) {
  if (candidate_files.empty()) {
    throw ConfigError("correlate needs at least one candidates file");
  }
  prepare_output(config);
  Workspace ws(config);
  const Model<T> full = load_model<T>(checkpoint_path, ws);

  std::vector<CandidateRecord> all;
  for (size_t f = 0; f < candidate_files.size(); ++f) {
    if (!fs::exists(candidate_files[f])) {
      throw DataError("candidates file '" + candidate_files[f] +
                      "' does not exist");
    }
    std::vector<CandidateRecord> records =
        load_candidates(candidate_files[f], false);
    const std::string done_path =
        join(config.output_dir, "finetuned_" + std::to_string(f) + ".jsonl");
    std::map<int, CandidateRecord> done;
    for (CandidateRecord& r : load_candidates(done_path, true)) {
      done[r.id] = std::move(r);
    }
    std::vector<size_t> pending;
    for (size_t i = 0; i < records.size(); ++i) {
      auto it = done.find(records[i].id);
      if (it != done.end() && it->second.acc_finetuned) {
        records[i].acc_finetuned = it->second.acc_finetuned;
      }
      if (!records[i].acc_finetuned) pending.push_back(i);
    }
    JsonlWriter writer(done_path);
    ordered_parallel_for<double>(
        pending.size(), config.search.workers,
        [&](size_t k) {
          return finetune_candidate(full.spec, full.params,
                                    records[pending[k]], ws.search,
                                    config.search, config.finetune);
        },
        [&](size_t k, double& acc) {
          CandidateRecord& r = records[pending[k]];
          r.acc_finetuned = acc;
          writer.write(record_to_json(r));
        });
    all.insert(all.end(), records.begin(), records.end());
  }

  std::vector<std::string> labels;
  for (const CandidateRecord& r : all) {
    if (std::find(labels.begin(), labels.end(), r.constraint) == labels.end()) {
      labels.push_back(r.constraint);
    }
  }
  std::sort(labels.begin(), labels.end(), label_before);
  std::vector<CorrelationReport> reports;
  for (const std::string& label : labels) {
    std::vector<CandidateRecord> group;
    for (const CandidateRecord& r : all) {
      if (r.constraint == label) group.push_back(r);
    }
    reports.push_back(build_report(group, label));
  }
  {
    std::ofstream out(join(config.output_dir, "correlation_report.csv"),
                      std::ios::trunc);
    write_report_csv(out, reports);
  }
  {
    std::ofstream out(join(config.output_dir, "correlation_scatter.csv"),
                      std::ios::trunc);
    write_scatter_csv(out, all);
  }
  return reports;
}

template <typename T>
std::vector<BNDistanceRow> cmd_bn_distance(const ExperimentConfig& config,
                                           const std::string& full_path,
                                           const std::string& pruned_path) {
  prepare_output(config);
  Workspace ws(config);
  const Model<T> full = load_model<T>(full_path, ws);
  const Model<T> pruned = load_model<T>(pruned_path, ws);
  if (!pruned.strategy) {
    throw CheckpointError("checkpoint '" + pruned_path +
                          "' carries no pruning strategy");
  }
  PrunedModel<T> global = apply_strategy(full.spec, full.params,
                                         *pruned.strategy, pruned.criterion);
  if (!(global.spec == pruned.spec)) {
    throw CheckpointError("checkpoint '" + pruned_path +
                          "' does not match its strategy applied to '" +
                          full_path + "'");
  }
  set_bn_mode(global.params, BNMode::kEval);
  ParamStore<T> adaptive = global.params;
  const SearchConfig& s = config.search;
  recalibrate_bn(global.spec, adaptive, ws.splits.recalib,
                 s.recalib_iterations, s.batch_size, s.recalib_momentum,
                 s.recalib_update, s.seed);
  const ParamStore<T> truth =
      true_bn_stats(global.spec, global.params, ws.data.test, s.batch_size);
  const auto dg = bn_stats_distance(global.params, truth);
  const auto da = bn_stats_distance(adaptive, truth);

  std::vector<BNDistanceRow> rows;
  std::string csv =
      "layer,channel,mean_global_vs_true,mean_adaptive_vs_true,"
      "var_global_vs_true,var_adaptive_vs_true\n";
  for (size_t i = 0; i < dg.size(); ++i) {
    BNDistanceRow row{dg[i].layer,         dg[i].channel,
                      dg[i].mean_distance, da[i].mean_distance,
                      dg[i].var_distance,  da[i].var_distance};
    csv += std::to_string(row.layer) + "," + std::to_string(row.channel) +
           "," + fmt(row.mean_global) + "," + fmt(row.mean_adaptive) + "," +
           fmt(row.var_global) + "," + fmt(row.var_adaptive) + "\n";
    rows.push_back(row);
  }
  write_text(join(config.output_dir, "bn_distance.csv"), csv);
  return rows;
}

template <typename T>
double cmd_eval(const ExperimentConfig& config,
                const std::string& checkpoint_path) {
  prepare_output(config);
  Workspace ws(config);
  const Model<T> m = load_model<T>(checkpoint_path, ws);
  const double acc = evaluate_accuracy(m.spec, m.params, ws.data.test);
  write_text(join(config.output_dir, "eval.json"),
             json{{"checkpoint", checkpoint_path}, {"test_accuracy", acc}}
                     .dump(2) +
                 "\n");
  return acc;
}

namespace {

struct CliArgs {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out_dir;
  std::string checkpoint;
  std::string pruned;
  std::vector<std::string> candidate_files;
  std::optional<std::string> flops_target;
  std::optional<int> candidates;
  std::optional<std::string> criterion;
};

ExperimentConfig resolve(const CliArgs& a) {
  ExperimentConfig cfg =
      a.config_path.empty() ? parse_config(json::object())
                            : load_config(a.config_path);
  if (a.seed) {
    cfg.train.seed = *a.seed;
    cfg.finetune.seed = *a.seed;
    cfg.search.seed = *a.seed;
    cfg.model.init_seed = *a.seed;
  }
  if (a.workers) cfg.search.workers = *a.workers;
  if (a.out_dir) cfg.output_dir = *a.out_dir;
  if (a.flops_target) {
    if (*a.flops_target == "unconstrained") {
      cfg.search.flops_target.reset();
    } else {
      try {
        size_t used = 0;
        cfg.search.flops_target = std::stod(*a.flops_target, &used);
        if (used != a.flops_target->size()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw ConfigError("--flops-target must be a number or unconstrained");
      }
    }
  }
  if (a.candidates) cfg.search.candidate_count = *a.candidates;
  if (a.criterion) cfg.search.criterion = criterion_from_string(*a.criterion);
  cfg.search.validate();
  return cfg;
}

template <typename T>
void dispatch(const std::string& command, const CliArgs& a) {
  const ExperimentConfig cfg = resolve(a);
  if (command == "train") {
    const TrainSummary s = cmd_train<T>(cfg);
    std::cout << "test_accuracy " << fmt(s.test_accuracy) << "\ncheckpoint "
              << s.checkpoint << "\n";
  } else if (command == "search") {
    const SearchSummary s = cmd_search<T>(cfg, a.checkpoint);
    std::cout << "evaluated_now " << s.result.evaluated_now << "\nwinner "
              << s.result.winner_id << "\n";
  } else if (command == "finetune") {
    const FinetuneSummary s = cmd_finetune<T>(cfg, a.checkpoint);
    std::cout << "pre_accuracy " << fmt(s.pre_accuracy) << "\nbest_accuracy "
              << fmt(s.best_accuracy) << "\n";
  } else if (command == "correlate") {
    for (const CorrelationReport& r :
         cmd_correlate<T>(cfg, a.checkpoint, a.candidate_files)) {
      std::cout << r.label << " n=" << r.n
                << " spearman_adaptive=" << fmt(r.spearman_adaptive)
                << " spearman_vanilla=" << fmt(r.spearman_vanilla) << "\n";
    }
  } else if (command == "bn-distance") {
    const auto rows = cmd_bn_distance<T>(cfg, a.checkpoint, a.pruned);
    std::cout << "rows " << rows.size() << "\n";
  } else if (command == "eval") {
    std::cout << "test_accuracy " << fmt(cmd_eval<T>(cfg, a.checkpoint))
              << "\n";
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Structured filter pruning with adaptive batch-norm candidate "
               "evaluation"};
  app.require_subcommand(1);
  CliArgs a;
  app.add_option("--config", a.config_path, "experiment config (JSON)");
  app.add_option("--seed", a.seed, "overrides every seed but the data split");
  app.add_option("--workers", a.workers, "parallel candidate workers");
  app.add_option("--out-dir", a.out_dir, "output directory");

  CLI::App* train_cmd = app.add_subcommand("train", "train the full model");
  CLI::App* search_cmd = app.add_subcommand("search", "pruning search");
  search_cmd->add_option("--checkpoint", a.checkpoint, "full model")
      ->required();
  search_cmd->add_option("--flops-target", a.flops_target,
                         "FLOPs ratio or 'unconstrained'");
  search_cmd->add_option("--candidates", a.candidates, "candidate count");
  search_cmd->add_option("--criterion", a.criterion, "l1 or l2");
  CLI::App* ft_cmd = app.add_subcommand("finetune", "fine-tune one model");
  ft_cmd->add_option("--checkpoint", a.checkpoint, "pruned model")->required();
  CLI::App* corr_cmd =
      app.add_subcommand("correlate", "fine-tune all candidates and correlate");
  corr_cmd->add_option("--checkpoint", a.checkpoint, "full model")->required();
  corr_cmd->add_option("--candidates-file", a.candidate_files,
                       "candidates JSONL (repeatable)")
      ->required();
  CLI::App* bn_cmd =
      app.add_subcommand("bn-distance", "per-channel BN statistic distances");
  bn_cmd->add_option("--checkpoint", a.checkpoint, "full model")->required();
  bn_cmd->add_option("--pruned", a.pruned, "pruned model with its strategy")
      ->required();
  CLI::App* eval_cmd = app.add_subcommand("eval", "test accuracy");
  eval_cmd->add_option("--checkpoint", a.checkpoint, "model")->required();
  for (CLI::App* sub :
       {train_cmd, search_cmd, ft_cmd, corr_cmd, bn_cmd, eval_cmd}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (precision_from_env() == Precision::kF64) {
      dispatch<double>(command, a);
    } else {
      dispatch<float>(command, a);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}

#define RECALPRUNE_INSTANTIATE_COMMANDS(T)                                        \
  template TrainSummary cmd_train<T>(const ExperimentConfig&);               \
  template SearchSummary cmd_search<T>(const ExperimentConfig&,              \
                                       const std::string&);                  \
  template FinetuneSummary cmd_finetune<T>(const ExperimentConfig&,          \
                                           const std::string&);              \
  template std::vector<CorrelationReport> cmd_correlate<T>(                  \
      const ExperimentConfig&, const std::string&,                           \
      const std::vector<std::string>&);                                      \
  template std::vector<BNDistanceRow> cmd_bn_distance<T>(                    \
      const ExperimentConfig&, const std::string&, const std::string&);      \
  template double cmd_eval<T>(const ExperimentConfig&, const std::string&);

RECALPRUNE_INSTANTIATE_COMMANDS(float)
RECALPRUNE_INSTANTIATE_COMMANDS(double)

}  // namespace recalprune
