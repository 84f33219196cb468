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

#ifndef RECALPRUNE_TESTS_GRADIENT_SUITE_H_
#define RECALPRUNE_TESTS_GRADIENT_SUITE_H_

#include <cstdint>
#include <string>
#include <vector>

namespace recalprune::testing {

struct GradCheck {
  std::string kernel;  // e.g. "conv2d.weight"
  uint64_t seed = 0;
  double error = 0;    // ||analytic - numeric|| / max norm
};

// Central differences (eps 1e-4, double precision) against every backward
// kernel plus a whole-network pass, `seeds` randomized cases each.
std::vector<GradCheck> run_gradient_suite(int seeds);

}  // namespace recalprune::testing

#endif  // RECALPRUNE_TESTS_GRADIENT_SUITE_H_
