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

#ifndef RECALPRUNE_CONFIG_H_
#define RECALPRUNE_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "recalprune/data.h"
#include "recalprune/netgraph.h"
#include "recalprune/search.h"
#include "recalprune/trainer.h"
#include "json.hpp"

namespace recalprune {

struct DatasetConfig {
  std::string kind = "idx";  // idx | cifar10 | synthetic
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::vector<std::string> train_files;  // cifar10 batches
  std::vector<std::string> test_files;
  int32_t class_count = 10;
  int64_t synthetic_per_class = 200;
  int64_t synthetic_test_per_class = 50;
  int64_t synthetic_image_size = 16;
  Normalization normalization{{0.1307}, {0.3081}};
  double subval_fraction = 0.05;
  double recalib_fraction = 1.0 / 30.0;
  uint64_t seed = 0;
};

struct ModelConfig {
  std::string architecture = "micro-cnn";  // micro-cnn | micro-mobilenet
  std::vector<int64_t> widths{16};
  uint64_t init_seed = 0;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train = TrainConfig::desk_default(10);
  TrainConfig finetune = TrainConfig::finetune_default(2);
  SearchConfig search;
  std::string output_dir = "out";
  int histogram_bins = 20;
};

// Strict parse: unknown keys and ill-typed values raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

// Every field, defaults included.
nlohmann::json config_to_json(const ExperimentConfig& config);

struct LoadedData {
  DatasetSplit train;  // the full training split, before carving subval
  DatasetSplit test;
};

LoadedData load_dataset(const DatasetConfig& config);

NetworkSpec build_network(const ModelConfig& model, const Shape& input_shape,
                          int64_t class_count);

}  // namespace recalprune

#endif  // RECALPRUNE_CONFIG_H_
