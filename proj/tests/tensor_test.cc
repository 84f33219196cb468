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

#include "recalprune/tensor.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "recalprune/errors.h"

namespace recalprune {
namespace {

TEST(Tensor, ShapeAndSize) {
  Tensor<float> t({2, 3, 4, 5}, 1.5f);
  EXPECT_EQ(t.size(), 120);
  EXPECT_EQ(t.rank(), 4u);
  EXPECT_EQ(t.dim(2), 4);
  EXPECT_EQ(t.at(1, 2, 3, 4), 1.5f);
  EXPECT_EQ(shape_string(t.shape()), "[2,3,4,5]");
}

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor<float>({2, -1}), ShapeError);
  EXPECT_NO_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3, 4}));
}

TEST(Tensor, DefaultIsEmpty) {
  Tensor<double> t;
  EXPECT_TRUE(t.empty());
  EXPECT_EQ(t.size(), 0);
  EXPECT_EQ(shape_elements({}), 0);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor<float> t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  t.reshape({3, 2});
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(t[5], 6.0f);
  EXPECT_THROW(t.reshape({4, 2}), ShapeError);
}

TEST(Tensor, CastRoundTrip) {
  Tensor<float> t({3}, std::vector<float>{0.1f, -2.5f, 3e7f});
  EXPECT_EQ(t.cast<double>().cast<float>(), t);
}

TEST(Tensor, FiniteCheck) {
  Tensor<float> t({2}, std::vector<float>{1, 2});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
#ifdef RECALPRUNE_FINITE_CHECKS
  EXPECT_THROW(check_finite(t, "probe"), NumericError);
#endif
}

}  // namespace
}  // namespace recalprune
