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

#include "recalprune/config.h"

#include <fstream>
#include <set>
#include <sstream>

#include "recalprune/errors.h"

namespace recalprune {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& section,
                    const std::set<std::string>& allowed) {
  if (!obj.is_object()) {
    throw ConfigError("config section '" + section + "' must be an object");
  }
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("unknown config key '" + section +
                        (section.empty() ? "" : ".") + item.key() + "'");
    }
  }
}

template <typename V>
void read(const json& obj, const char* key, V& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + section + "." + key +
                      "' has the wrong type");
  }
}

TrainConfig parse_train(const json& j, const std::string& section,
                        TrainConfig base, bool derive_milestones) {
  reject_unknown(j, section,
                 {"epochs", "batch_size", "base_lr", "milestones", "lr_decay",
                  "momentum", "weight_decay", "seed"});
  TrainConfig c = base;
  read(j, "epochs", c.epochs, section);
  if (derive_milestones && !j.contains("milestones")) {
    c.schedule.milestones = TrainConfig::desk_default(c.epochs).schedule.milestones;
  }
  read(j, "batch_size", c.batch_size, section);
  read(j, "base_lr", c.base_lr, section);
  read(j, "milestones", c.schedule.milestones, section);
  read(j, "lr_decay", c.schedule.decay, section);
  read(j, "momentum", c.momentum, section);
  read(j, "weight_decay", c.weight_decay, section);
  read(j, "seed", c.seed, section);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(section + ": " + e.what());
  }
  return c;
}

json train_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"base_lr", c.base_lr},
          {"milestones", c.schedule.milestones},
          {"lr_decay", c.schedule.decay},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed}};
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig cfg;
  reject_unknown(doc, "",
                 {"dataset", "model", "train", "finetune", "search",
                  "output_dir", "histogram_bins"});
  if (doc.contains("dataset")) {
    const json& d = doc["dataset"];
    reject_unknown(d, "dataset",
                   {"kind", "train_images", "train_labels", "test_images",
                    "test_labels", "train_files", "test_files", "class_count",
                    "synthetic_per_class", "synthetic_test_per_class",
                    "synthetic_image_size", "normalization", "subval_fraction",
                    "recalib_fraction", "seed"});
    DatasetConfig& c = cfg.dataset;
    read(d, "kind", c.kind, "dataset");
    if (c.kind != "idx" && c.kind != "cifar10" && c.kind != "synthetic") {
      throw ConfigError("dataset.kind must be idx, cifar10 or synthetic");
    }
    if (c.kind == "cifar10") {
      c.normalization = {{0.4914, 0.4822, 0.4465}, {0.2470, 0.2435, 0.2616}};
      c.class_count = 10;
    }
    if (c.kind == "synthetic") c.normalization = {{0.0}, {1.0}};
    read(d, "train_images", c.train_images, "dataset");
    read(d, "train_labels", c.train_labels, "dataset");
    read(d, "test_images", c.test_images, "dataset");
    read(d, "test_labels", c.test_labels, "dataset");
    read(d, "train_files", c.train_files, "dataset");
    read(d, "test_files", c.test_files, "dataset");
    read(d, "class_count", c.class_count, "dataset");
    read(d, "synthetic_per_class", c.synthetic_per_class, "dataset");
    read(d, "synthetic_test_per_class", c.synthetic_test_per_class, "dataset");
    read(d, "synthetic_image_size", c.synthetic_image_size, "dataset");
    read(d, "subval_fraction", c.subval_fraction, "dataset");
    read(d, "recalib_fraction", c.recalib_fraction, "dataset");
    read(d, "seed", c.seed, "dataset");
    if (d.contains("normalization")) {
      const json& n = d["normalization"];
      reject_unknown(n, "dataset.normalization", {"mean", "std"});
      read(n, "mean", c.normalization.mean, "dataset.normalization");
      read(n, "std", c.normalization.stddev, "dataset.normalization");
    }
    if (c.normalization.mean.empty() ||
        c.normalization.mean.size() != c.normalization.stddev.size()) {
      throw ConfigError("dataset.normalization mean/std lengths differ");
    }
    if (c.class_count < 2) throw ConfigError("dataset.class_count must be >= 2");
  }
  if (doc.contains("model")) {
    const json& m = doc["model"];
    reject_unknown(m, "model", {"architecture", "widths", "init_seed"});
    read(m, "architecture", cfg.model.architecture, "model");
    read(m, "widths", cfg.model.widths, "model");
    read(m, "init_seed", cfg.model.init_seed, "model");
    if (cfg.model.architecture == "micro-mobilenet" && !m.contains("widths")) {
      cfg.model.widths = {16, 32, 32, 64, 64};
    }
  }
  if (doc.contains("train")) {
    cfg.train = parse_train(doc["train"], "train", cfg.train, true);
  }
  if (doc.contains("finetune")) {
    cfg.finetune = parse_train(doc["finetune"], "finetune", cfg.finetune, false);
  }
  if (doc.contains("search")) {
    const json& s = doc["search"];
    reject_unknown(s, "search",
                   {"candidate_count", "max_ratio", "first_layer_max_ratio",
                    "flops_target", "flops_tolerance", "max_attempts",
                    "recalib_iterations", "top_k_to_finetune", "seed",
                    "criterion", "recalib_momentum", "recalib_update",
                    "batch_size", "analysis_mode", "workers"});
    SearchConfig& c = cfg.search;
    read(s, "candidate_count", c.candidate_count, "search");
    read(s, "max_ratio", c.max_ratio, "search");
    read(s, "first_layer_max_ratio", c.first_layer_max_ratio, "search");
    if (s.contains("flops_target")) {
      const json& t = s["flops_target"];
      if (t.is_null() || (t.is_string() && t.get<std::string>() == "unconstrained")) {
        c.flops_target.reset();
      } else if (t.is_number()) {
        c.flops_target = t.get<double>();
      } else {
        throw ConfigError("search.flops_target must be a number or "
                          "\"unconstrained\"");
      }
    }
    read(s, "flops_tolerance", c.flops_tolerance, "search");
    read(s, "max_attempts", c.max_attempts, "search");
    read(s, "recalib_iterations", c.recalib_iterations, "search");
    read(s, "top_k_to_finetune", c.top_k_to_finetune, "search");
    read(s, "seed", c.seed, "search");
    if (s.contains("criterion")) {
      std::string name;
      read(s, "criterion", name, "search");
      c.criterion = criterion_from_string(name);
    }
    read(s, "recalib_momentum", c.recalib_momentum, "search");
    if (s.contains("recalib_update")) {
      std::string name;
      read(s, "recalib_update", name, "search");
      if (name == "momentum") {
        c.recalib_update = StatsUpdate::kMomentum;
      } else if (name == "cumulative") {
        c.recalib_update = StatsUpdate::kCumulativeAverage;
      } else {
        throw ConfigError("search.recalib_update must be momentum or "
                          "cumulative");
      }
    }
    read(s, "batch_size", c.batch_size, "search");
    read(s, "analysis_mode", c.analysis_mode, "search");
    read(s, "workers", c.workers, "search");
  }
  cfg.search.subval_fraction = cfg.dataset.subval_fraction;
  cfg.search.recalib_fraction = cfg.dataset.recalib_fraction;
  read(doc, "output_dir", cfg.output_dir, "");
  read(doc, "histogram_bins", cfg.histogram_bins, "");
  if (cfg.histogram_bins < 1) throw ConfigError("histogram_bins must be >= 1");
  cfg.search.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " +
                      e.what());
  }
  return parse_config(doc);
}

json config_to_json(const ExperimentConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  const SearchConfig& s = cfg.search;
  json dataset = {{"kind", d.kind},
                  {"train_images", d.train_images},
                  {"train_labels", d.train_labels},
                  {"test_images", d.test_images},
                  {"test_labels", d.test_labels},
                  {"train_files", d.train_files},
                  {"test_files", d.test_files},
                  {"class_count", d.class_count},
                  {"synthetic_per_class", d.synthetic_per_class},
                  {"synthetic_test_per_class", d.synthetic_test_per_class},
                  {"synthetic_image_size", d.synthetic_image_size},
                  {"normalization",
                   {{"mean", d.normalization.mean},
                    {"std", d.normalization.stddev}}},
                  {"subval_fraction", d.subval_fraction},
                  {"recalib_fraction", d.recalib_fraction},
                  {"seed", d.seed}};
  json search = {
      {"candidate_count", s.candidate_count},
      {"max_ratio", s.max_ratio},
      {"first_layer_max_ratio", s.first_layer_max_ratio},
      {"flops_target", s.flops_target ? json(*s.flops_target)
                                      : json("unconstrained")},
      {"flops_tolerance", s.flops_tolerance},
      {"max_attempts", s.max_attempts},
      {"recalib_iterations", s.recalib_iterations},
      {"top_k_to_finetune", s.top_k_to_finetune},
      {"seed", s.seed},
      {"criterion", to_string(s.criterion)},
      {"recalib_momentum", s.recalib_momentum},
      {"recalib_update", s.recalib_update == StatsUpdate::kMomentum
                             ? "momentum"
                             : "cumulative"},
      {"batch_size", s.batch_size},
      {"analysis_mode", s.analysis_mode},
      {"workers", s.workers}};
  return {{"dataset", dataset},
          {"model",
           {{"architecture", cfg.model.architecture},
            {"widths", cfg.model.widths},
            {"init_seed", cfg.model.init_seed}}},
          {"train", train_to_json(cfg.train)},
          {"finetune", train_to_json(cfg.finetune)},
          {"search", search},
          {"output_dir", cfg.output_dir},
          {"histogram_bins", cfg.histogram_bins}};
}

LoadedData load_dataset(const DatasetConfig& c) {
  LoadedData data;
  if (c.kind == "idx") {
    for (const std::string* p :
         {&c.train_images, &c.train_labels, &c.test_images, &c.test_labels}) {
      if (p->empty()) throw ConfigError("dataset: idx needs all four paths");
    }
    data.train = load_idx(c.train_images, c.train_labels, c.normalization,
                          c.class_count);
    data.test = load_idx(c.test_images, c.test_labels, c.normalization,
                         c.class_count);
  } else if (c.kind == "cifar10") {
    data.train = load_cifar_binary(c.train_files, c.normalization);
    data.test = load_cifar_binary(c.test_files, c.normalization);
  } else {
    data.train = synth_blobs(c.class_count, c.synthetic_per_class,
                             c.synthetic_image_size, c.seed);
    data.test = synth_blobs(c.class_count, c.synthetic_test_per_class,
                            c.synthetic_image_size, c.seed + 1);
  }
  data.train.role = SplitRole::kTrain;
  data.test.role = SplitRole::kTest;
  return data;
}

NetworkSpec build_network(const ModelConfig& model, const Shape& input_shape,
                          int64_t class_count) {
  try {
    if (model.architecture == "micro-cnn") {
      if (model.widths.size() != 1) {
        throw ConfigError("model.widths for micro-cnn is a single width");
      }
      return micro_cnn(input_shape, class_count, model.widths[0]);
    }
    if (model.architecture == "micro-mobilenet") {
      return micro_mobilenet(input_shape, class_count, model.widths);
    }
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  throw ConfigError("unknown model.architecture '" + model.architecture + "'");
}

}  // namespace recalprune
