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

#include "recalprune/records.h"

#include <filesystem>
#include <map>
#include <sstream>

#include "recalprune/errors.h"

namespace recalprune {

nlohmann::json record_to_json(const CandidateRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["constraint"] = r.constraint;
  j["criterion"] = to_string(r.criterion);
  j["ratios"] = r.strategy.ratios;
  j["flops_ratio"] = r.strategy.realized_flops_ratio;
  j["acc_vanilla"] = r.acc_vanilla;
  j["acc_adaptive"] = r.acc_adaptive;
  if (r.acc_finetuned) j["acc_finetuned"] = *r.acc_finetuned;
  if (!r.checkpoint.empty()) j["checkpoint"] = r.checkpoint;
  return j;
}

CandidateRecord record_from_json(const nlohmann::json& j) {
  try {
    CandidateRecord r;
    r.id = j.at("id").get<int>();
    r.constraint = j.value("constraint", std::string());
    r.criterion = criterion_from_string(j.value("criterion", std::string("l1")));
    r.strategy.ratios = j.at("ratios").get<std::vector<double>>();
    r.strategy.realized_flops_ratio = j.at("flops_ratio").get<double>();
    r.acc_vanilla = j.at("acc_vanilla").get<double>();
    r.acc_adaptive = j.at("acc_adaptive").get<double>();
    if (j.contains("acc_finetuned")) {
      r.acc_finetuned = j.at("acc_finetuned").get<double>();
    }
    r.checkpoint = j.value("checkpoint", std::string());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed candidate record: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed candidate record: ") + e.what());
  }
}

nlohmann::json epoch_to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"loss", r.loss},
          {"train_acc", r.train_acc},
          {"eval_acc", r.eval_acc},
          {"lr", r.lr}};
}

JsonlWriter::JsonlWriter(const std::string& path, bool truncate)
    : path_(path),
      out_(path, truncate ? std::ios::out | std::ios::trunc
                          : std::ios::out | std::ios::app) {
  if (!out_) throw DataError("cannot open '" + path + "' for writing");
}

void JsonlWriter::write(const nlohmann::json& doc) {
  out_ << doc.dump() << '\n';
  out_.flush();
  if (!out_) throw DataError("write to '" + path_ + "' failed");
}

std::vector<nlohmann::json> read_jsonl(const std::string& path, bool repair) {
  std::vector<nlohmann::json> docs;
  std::ifstream in(path, std::ios::binary);
  if (!in) return docs;
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  in.close();
  size_t start = 0, good_end = 0;
  while (start < text.size()) {
    const size_t nl = text.find('\n', start);
    if (nl == std::string::npos) break;  // torn tail
    const std::string line = text.substr(start, nl - start);
    if (!line.empty()) {
      try {
        docs.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt line in '" + path + "' at byte " +
                        std::to_string(start) + ": " + e.what());
      }
    }
    start = nl + 1;
    good_end = start;
  }
  if (repair && good_end < text.size()) {
    std::filesystem::resize_file(path, good_end);
  }
  return docs;
}

std::vector<CandidateRecord> load_candidates(const std::string& path,
                                             bool repair) {
  std::map<int, CandidateRecord> by_id;
  for (const auto& doc : read_jsonl(path, repair)) {
    CandidateRecord r = record_from_json(doc);
    by_id[r.id] = std::move(r);
  }
  std::vector<CandidateRecord> out;
  for (auto& [id, r] : by_id) out.push_back(std::move(r));
  return out;
}

}  // namespace recalprune
