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

#ifndef RECALPRUNE_TENSOR_H_
#define RECALPRUNE_TENSOR_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "recalprune/errors.h"

namespace recalprune {

using Shape = std::vector<int64_t>;

// Rank 0 means "no tensor" and holds zero elements.
int64_t shape_elements(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array. Activations are laid out N,C,H,W and convolution
// weights C_out,C_in,K_h,K_w.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != checked_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  int64_t dim(size_t axis) const { return shape_.at(axis); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // N,C,H,W element access for rank-4 tensors.
  T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) *
                                         shape_[3] + w)];
  }
  const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) *
                                         shape_[3] + w)];
  }

  void reshape(Shape shape) {
    if (checked_size(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " +
                       shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static int64_t checked_size(const Shape& shape) {
    for (int64_t d : shape) {
      if (d < 0) throw ShapeError("negative extent in " + shape_string(shape));
    }
    return shape_elements(shape);
  }

  Shape shape_;
  std::vector<T> data_;
};

// Throws NumericError naming `what` when the tensor holds NaN/Inf. Compiled in
// only when RECALPRUNE_FINITE_CHECKS is defined (debug and test builds).
template <typename T>
inline void check_finite(const Tensor<T>& t, const char* what) {
#ifdef RECALPRUNE_FINITE_CHECKS
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + what);
  }
#else
  (void)t;
  (void)what;
#endif
}

}  // namespace recalprune

#endif  // RECALPRUNE_TENSOR_H_
