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

#include <gtest/gtest.h>

#include <set>

#include "gradient_suite.h"

namespace recalprune::testing {
namespace {

TEST(GradientSuite, EveryBackwardMatchesFiniteDifferences) {
  const std::vector<GradCheck> checks = run_gradient_suite(20);
  std::set<std::string> kernels;
  for (const GradCheck& c : checks) {
    kernels.insert(c.kernel);
    EXPECT_LT(c.error, 1e-6) << c.kernel << " seed " << c.seed;
  }
  for (const char* k :
       {"conv2d.input", "conv2d.weight", "depthwise_conv2d.input",
        "depthwise_conv2d.weight", "fc.input", "fc.weight", "fc.bias",
        "batch_norm.input", "batch_norm.gamma", "batch_norm.beta", "relu",
        "max_pool", "global_avg_pool", "softmax_cross_entropy"}) {
    EXPECT_TRUE(kernels.count(k)) << k;
  }
}

}  // namespace
}  // namespace recalprune::testing
