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

#ifndef RECALPRUNE_DATA_H_
#define RECALPRUNE_DATA_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "recalprune/tensor.h"

namespace recalprune {

enum class SplitRole { kTrain, kSubval, kTest, kRecalib };

const char* to_string(SplitRole role);

struct DatasetSplit {
  Tensor<float> images;         // [N,C,H,W], normalized
  std::vector<int32_t> labels;  // N entries, each < class_count
  SplitRole role = SplitRole::kTrain;
  int32_t class_count = 0;
  // Row of each sample in the split it was carved from (identity for loaded
  // data). Used to check disjointness of derived splits.
  std::vector<int64_t> source_index;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  Shape sample_shape() const {
    return Shape(images.shape().begin() + 1, images.shape().end());
  }
};

// Pixels are scaled to [0,1] then standardized per channel. A single entry
// applies to every channel.
struct Normalization {
  std::vector<double> mean{0.0};
  std::vector<double> stddev{1.0};
};

// MNIST-style IDX files: big-endian magic 0x00000803 (images, N x H x W) and
// 0x00000801 (labels).
DatasetSplit load_idx(const std::string& images_path,
                      const std::string& labels_path,
                      const Normalization& norm, int32_t class_count = 10);

// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes.
DatasetSplit load_cifar_binary(const std::vector<std::string>& paths,
                               const Normalization& norm);

// Class-conditioned Gaussian blobs: class k draws a bright blob centred on a
// class-specific point plus pixel noise. Samples are interleaved by class.
DatasetSplit synth_blobs(int32_t class_count, int64_t per_class,
                         int64_t image_size, uint64_t seed,
                         int64_t channels = 1);

DatasetSplit subset(const DatasetSplit& split, std::span<const int64_t> rows,
                    SplitRole role);

struct Splits {
  DatasetSplit train;    // train minus subval
  DatasetSplit subval;   // stratified, disjoint from train
  DatasetSplit recalib;  // drawn from train
};

// subval takes round(n_k * subval_fraction) samples of every class k;
// recalib takes round(N * recalib_fraction) samples of the remaining train
// rows. Deterministic in `seed`.
Splits make_splits(const DatasetSplit& train, double subval_fraction,
                   double recalib_fraction, uint64_t seed);

// Gathers rows into a batch tensor of the requested precision.
template <typename T>
Tensor<T> gather_images(const DatasetSplit& split,
                        std::span<const int64_t> rows);

std::vector<int32_t> gather_labels(const DatasetSplit& split,
                                   std::span<const int64_t> rows);

}  // namespace recalprune

#endif  // RECALPRUNE_DATA_H_
