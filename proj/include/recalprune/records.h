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

#ifndef RECALPRUNE_RECORDS_H_
#define RECALPRUNE_RECORDS_H_

#include <fstream>
#include <string>
#include <vector>

#include "recalprune/search.h"
#include "recalprune/trainer.h"
#include "json.hpp"

namespace recalprune {

nlohmann::json record_to_json(const CandidateRecord& record);
CandidateRecord record_from_json(const nlohmann::json& doc);

nlohmann::json epoch_to_json(const EpochRecord& record);

// Append-only JSON-lines file; every line is flushed as soon as it is
// written.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path, bool truncate = false);
  void write(const nlohmann::json& doc);

 private:
  std::string path_;
  std::ofstream out_;
};

// Reads every complete line. A trailing line without its newline (a write cut
// short by a crash) is dropped, and with `repair` the file is truncated back
// to the last complete line so appends resume cleanly. Missing file: empty.
std::vector<nlohmann::json> read_jsonl(const std::string& path,
                                       bool repair = false);

// Candidate records keyed by id; a later line for the same id replaces the
// earlier one. Returned in id order.
std::vector<CandidateRecord> load_candidates(const std::string& path,
                                             bool repair = false);

}  // namespace recalprune

#endif  // RECALPRUNE_RECORDS_H_
