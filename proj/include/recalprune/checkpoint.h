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

#ifndef RECALPRUNE_CHECKPOINT_H_
#define RECALPRUNE_CHECKPOINT_H_

#include <cstdint>
#include <optional>
#include <string>

#include "recalprune/netgraph.h"
#include "recalprune/pruner.h"
#include "json.hpp"

namespace recalprune {

// Binary checkpoint layout (all integers little-endian):
//   "RECALPRN" | u32 version | u32 n + NetworkSpec JSON (n bytes)
//   | u32 n + PruningStrategy JSON with "criterion" (n = 0: none)
//   | u32 blob count
//   | per blob: u16 n + name | u32 rank | i64 dims[rank] | f32 data
//   | u64 FNV-1a of every preceding byte
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkSpec spec;
  ParamStore<float> params;
  std::optional<PruningStrategy> strategy;
  // Ranking the strategy was applied with; stored only with a strategy.
  Criterion criterion = Criterion::kL1Norm;
};

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& doc);

nlohmann::json strategy_to_json(const PruningStrategy& strategy);
PruningStrategy strategy_from_json(const nlohmann::json& doc);

std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointVersionError on a version mismatch and CheckpointError on
// any other corruption (bad magic, checksum, truncation, shape mismatch).
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

uint64_t fnv1a64(const void* data, size_t size);

}  // namespace recalprune

#endif  // RECALPRUNE_CHECKPOINT_H_
