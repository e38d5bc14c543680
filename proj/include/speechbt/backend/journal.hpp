// Copyright 2026 The speechbt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Append-only JSONL record of completed items, keyed by (batch_id, item_id).
// Redelivered results are dropped, which turns at-least-once delivery into
// exactly-once recording. A torn final line (process killed mid-write) is
// cut off on open; damage anywhere else is an error.

#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/core/error.hpp"
#include "speechbt/core/io.hpp"

namespace speechbt::backend {

class ResultJournal {
 public:
  explicit ResultJournal(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    if (std::filesystem::exists(path_)) load();
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw Error(ErrorCode::kIo, "cannot append to " + path_.string());
  }

  bool record(const std::string& batch_id, const std::string& item_id, const nlohmann::json& value) {
    std::lock_guard lock(mu_);
    if (!keys_.emplace(batch_id, item_id).second) return false;
    nlohmann::json row{{"batch_id", batch_id}, {"item_id", item_id}, {"value", value}};
    out_ << row.dump() << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorCode::kIo, "journal write failed: " + path_.string());
    rows_.push_back(std::move(row));
    return true;
  }

  bool contains(const std::string& batch_id, const std::string& item_id) const {
    std::lock_guard lock(mu_);
    return keys_.count({batch_id, item_id}) > 0;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return rows_.size();
  }

  std::vector<nlohmann::json> rows() const {
    std::lock_guard lock(mu_);
    return rows_;
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  void load() {
    const std::string data = io::read_file(path_);
    std::size_t pos = 0, good = 0;
    while (pos < data.size()) {
      const auto nl = data.find('\n', pos);
      if (nl == std::string::npos) break;  // torn tail
      const std::string line = data.substr(pos, nl - pos);
      try {
        auto row = nlohmann::json::parse(line);
        keys_.emplace(row.at("batch_id").get<std::string>(), row.at("item_id").get<std::string>());
        rows_.push_back(std::move(row));
      } catch (const nlohmann::json::exception&) {
        if (nl + 1 < data.size()) throw Error(ErrorCode::kInvalidInput, "corrupt journal line in " + path_.string());
        break;
      }
      pos = nl + 1;
      good = pos;
    }
    if (good < data.size()) std::filesystem::resize_file(path_, good);
  }

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::ofstream out_;
  std::set<std::pair<std::string, std::string>> keys_;
  std::vector<nlohmann::json> rows_;
};

}  // namespace speechbt::backend
