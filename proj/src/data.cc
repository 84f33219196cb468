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

#include "recalprune/data.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "recalprune/errors.h"

namespace recalprune {
namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

uint32_t read_be32(const std::vector<uint8_t>& buf, size_t offset) {
  return (uint32_t{buf[offset]} << 24) | (uint32_t{buf[offset + 1]} << 16) |
         (uint32_t{buf[offset + 2]} << 8) | uint32_t{buf[offset + 3]};
}

void expect_bytes(const std::string& path, size_t expected, size_t actual) {
  if (actual < expected) {
    throw DataError("truncated file '" + path + "': expected " +
                    std::to_string(expected) + " bytes, found " +
                    std::to_string(actual));
  }
  if (actual > expected) {
    throw DataError("file '" + path + "' has " + std::to_string(actual) +
                    " bytes, expected exactly " + std::to_string(expected));
  }
}

double channel_value(const std::vector<double>& v, int64_t c,
                     const char* what) {
  if (v.size() == 1) return v[0];
  if (c < static_cast<int64_t>(v.size())) return v[static_cast<size_t>(c)];
  throw DataError(std::string("normalization ") + what + " has " +
                  std::to_string(v.size()) + " entries, image has more channels");
}

void normalize_into(const uint8_t* pixels, int64_t count, int64_t channels,
                    int64_t plane, const Normalization& norm, float* dst) {
  for (int64_t i = 0; i < count; ++i) {
    for (int64_t c = 0; c < channels; ++c) {
      const double mean = channel_value(norm.mean, c, "mean");
      const double sd = channel_value(norm.stddev, c, "stddev");
      if (!(sd > 0)) throw DataError("normalization stddev must be positive");
      const int64_t off = (i * channels + c) * plane;
      for (int64_t p = 0; p < plane; ++p) {
        dst[off + p] =
            static_cast<float>((pixels[off + p] / 255.0 - mean) / sd);
      }
    }
  }
}

std::vector<int64_t> iota_rows(int64_t n) {
  std::vector<int64_t> rows(static_cast<size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace

const char* to_string(SplitRole role) {
  switch (role) {
    case SplitRole::kTrain:
      return "train";
    case SplitRole::kSubval:
      return "subval";
    case SplitRole::kTest:
      return "test";
    case SplitRole::kRecalib:
      return "recalib";
  }
  return "?";
}

DatasetSplit load_idx(const std::string& images_path,
                      const std::string& labels_path,
                      const Normalization& norm, int32_t class_count) {
  const std::vector<uint8_t> img = read_file(images_path);
  const std::vector<uint8_t> lab = read_file(labels_path);
  if (img.size() < 16) expect_bytes(images_path, 16, img.size());
  if (lab.size() < 8) expect_bytes(labels_path, 8, lab.size());
  if (read_be32(img, 0) != 0x00000803) {
    throw DataError("bad magic in '" + images_path + "': expected 0x00000803");
  }
  if (read_be32(lab, 0) != 0x00000801) {
    throw DataError("bad magic in '" + labels_path + "': expected 0x00000801");
  }
  const int64_t n = read_be32(img, 4);
  const int64_t h = read_be32(img, 8);
  const int64_t w = read_be32(img, 12);
  const int64_t n_labels = read_be32(lab, 4);
  expect_bytes(images_path, 16 + static_cast<size_t>(n * h * w), img.size());
  expect_bytes(labels_path, 8 + static_cast<size_t>(n_labels), lab.size());
  if (n != n_labels) {
    throw DataError("image count " + std::to_string(n) + " in '" +
                    images_path + "' does not match label count " +
                    std::to_string(n_labels) + " in '" + labels_path + "'");
  }
  if (n == 0) throw DataError("'" + images_path + "' holds no images");

  DatasetSplit split;
  split.class_count = class_count;
  split.images = Tensor<float>({n, 1, h, w});
  normalize_into(img.data() + 16, n, 1, h * w, norm, split.images.data());
  split.labels.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const int32_t label = lab[8 + static_cast<size_t>(i)];
    if (label >= class_count) {
      throw DataError("label " + std::to_string(label) + " at row " +
                      std::to_string(i) + " of '" + labels_path +
                      "' is not below class count " +
                      std::to_string(class_count));
    }
    split.labels[static_cast<size_t>(i)] = label;
  }
  split.source_index = iota_rows(n);
  return split;
}

DatasetSplit load_cifar_binary(const std::vector<std::string>& paths,
                               const Normalization& norm) {
  constexpr int64_t kPixels = 3 * 32 * 32;
  constexpr int64_t kRecord = 1 + kPixels;
  if (paths.empty()) throw DataError("no CIFAR-10 batch files given");
  std::vector<uint8_t> pixels;
  std::vector<int32_t> labels;
  for (const std::string& path : paths) {
    const std::vector<uint8_t> buf = read_file(path);
    if (buf.empty() || buf.size() % kRecord != 0) {
      throw DataError("'" + path + "' has " + std::to_string(buf.size()) +
                      " bytes, not a whole number of " +
                      std::to_string(kRecord) + "-byte records");
    }
    const size_t records = buf.size() / kRecord;
    for (size_t r = 0; r < records; ++r) {
      const uint8_t* rec = buf.data() + r * kRecord;
      if (rec[0] >= 10) {
        throw DataError("label " + std::to_string(rec[0]) + " in record " +
                        std::to_string(r) + " of '" + path +
                        "' is not below class count 10");
      }
      labels.push_back(rec[0]);
      pixels.insert(pixels.end(), rec + 1, rec + kRecord);
    }
  }
  const auto n = static_cast<int64_t>(labels.size());
  if (static_cast<int64_t>(pixels.size()) != n * kPixels) {
    throw DataError("CIFAR-10 image/label count mismatch");
  }
  DatasetSplit split;
  split.class_count = 10;
  split.images = Tensor<float>({n, 3, 32, 32});
  normalize_into(pixels.data(), n, 3, 32 * 32, norm, split.images.data());
  split.labels = std::move(labels);
  split.source_index = iota_rows(n);
  return split;
}

DatasetSplit synth_blobs(int32_t class_count, int64_t per_class,
                         int64_t image_size, uint64_t seed, int64_t channels) {
  if (class_count <= 0 || per_class <= 0 || image_size <= 0 || channels <= 0) {
    throw DataError("synth_blobs needs positive sizes");
  }
  const int64_t n = class_count * per_class;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.25);
  std::uniform_real_distribution<double> jitter(-0.75, 0.75);
  const double mid = (image_size - 1) / 2.0;
  const double radius = 0.3 * image_size;
  const double sigma = std::max(1.0, image_size / 6.0);
  const double kPi = std::acos(-1.0);

  DatasetSplit split;
  split.class_count = class_count;
  split.images = Tensor<float>({n, channels, image_size, image_size});
  split.labels.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const auto label = static_cast<int32_t>(i % class_count);
    split.labels[static_cast<size_t>(i)] = label;
    const double angle = 2 * kPi * label / class_count;
    const double cy = mid + radius * std::sin(angle) + jitter(rng);
    const double cx = mid + radius * std::cos(angle) + jitter(rng);
    for (int64_t c = 0; c < channels; ++c) {
      for (int64_t y = 0; y < image_size; ++y) {
        for (int64_t x = 0; x < image_size; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          split.images.at(i, c, y, x) = static_cast<float>(
              std::exp(-d2 / (2 * sigma * sigma)) + noise(rng));
        }
      }
    }
  }
  split.source_index = iota_rows(n);
  return split;
}

DatasetSplit subset(const DatasetSplit& split, std::span<const int64_t> rows,
                    SplitRole role) {
  DatasetSplit out;
  out.role = role;
  out.class_count = split.class_count;
  Shape shape = split.images.shape();
  shape[0] = static_cast<int64_t>(rows.size());
  out.images = Tensor<float>(shape);
  const int64_t stride = shape_elements(split.sample_shape());
  out.labels.reserve(rows.size());
  out.source_index.assign(rows.begin(), rows.end());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= split.size()) {
      throw DataError("subset row " + std::to_string(rows[i]) +
                      " out of range");
    }
    std::copy_n(split.images.data() + rows[i] * stride, stride,
                out.images.data() + static_cast<int64_t>(i) * stride);
    out.labels.push_back(split.labels[static_cast<size_t>(rows[i])]);
  }
  return out;
}

Splits make_splits(const DatasetSplit& train, double subval_fraction,
                   double recalib_fraction, uint64_t seed) {
  if (!(subval_fraction > 0 && subval_fraction < 1) ||
      !(recalib_fraction > 0 && recalib_fraction < 1)) {
    throw DataError("split fractions must lie in (0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int64_t>> by_class(
      static_cast<size_t>(train.class_count));
  for (int64_t i = 0; i < train.size(); ++i) {
    by_class[static_cast<size_t>(train.labels[static_cast<size_t>(i)])]
        .push_back(i);
  }
  std::vector<int64_t> subval_rows;
  for (size_t k = 0; k < by_class.size(); ++k) {
    auto& rows = by_class[k];
    const auto take = static_cast<size_t>(
        std::llround(static_cast<double>(rows.size()) * subval_fraction));
    if (!rows.empty() && take >= rows.size()) {
      throw DataError("subval fraction " + std::to_string(subval_fraction) +
                      " leaves no training samples of class " +
                      std::to_string(k));
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    subval_rows.insert(subval_rows.end(), rows.begin(),
                       rows.begin() + static_cast<std::ptrdiff_t>(take));
  }
  if (subval_rows.empty()) {
    throw DataError("subval fraction " + std::to_string(subval_fraction) +
                    " selects no samples");
  }
  std::sort(subval_rows.begin(), subval_rows.end());
  std::vector<int64_t> train_rows;
  train_rows.reserve(static_cast<size_t>(train.size()) - subval_rows.size());
  std::vector<bool> in_subval(static_cast<size_t>(train.size()), false);
  for (int64_t r : subval_rows) in_subval[static_cast<size_t>(r)] = true;
  for (int64_t i = 0; i < train.size(); ++i) {
    if (!in_subval[static_cast<size_t>(i)]) train_rows.push_back(i);
  }

  const auto recalib_count = static_cast<size_t>(
      std::llround(static_cast<double>(train.size()) * recalib_fraction));
  if (recalib_count == 0 || recalib_count > train_rows.size()) {
    throw DataError("recalibration fraction " +
                    std::to_string(recalib_fraction) + " selects " +
                    std::to_string(recalib_count) + " of " +
                    std::to_string(train_rows.size()) + " training samples");
  }
  std::vector<int64_t> pool = train_rows;
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(recalib_count);
  std::sort(pool.begin(), pool.end());

  Splits s;
  s.train = subset(train, train_rows, SplitRole::kTrain);
  s.subval = subset(train, subval_rows, SplitRole::kSubval);
  s.recalib = subset(train, pool, SplitRole::kRecalib);
  return s;
}

template <typename T>
Tensor<T> gather_images(const DatasetSplit& split,
                        std::span<const int64_t> rows) {
  Shape shape = split.images.shape();
  shape[0] = static_cast<int64_t>(rows.size());
  Tensor<T> out(shape);
  const int64_t stride = shape_elements(split.sample_shape());
  for (size_t i = 0; i < rows.size(); ++i) {
    const float* src = split.images.data() + rows[i] * stride;
    std::copy_n(src, stride, out.data() + static_cast<int64_t>(i) * stride);
  }
  return out;
}

std::vector<int32_t> gather_labels(const DatasetSplit& split,
                                   std::span<const int64_t> rows) {
  std::vector<int32_t> out;
  out.reserve(rows.size());
  for (int64_t r : rows) out.push_back(split.labels[static_cast<size_t>(r)]);
  return out;
}

template Tensor<float> gather_images(const DatasetSplit&,
                                     std::span<const int64_t>);
template Tensor<double> gather_images(const DatasetSplit&,
                                      std::span<const int64_t>);

}  // namespace recalprune
