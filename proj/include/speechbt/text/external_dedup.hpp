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

// Out-of-core first-occurrence dedup over a JSONL sentence store.
//
// Pass 1 writes (line index, id) pairs into hash partitions sized to the
// memory budget. Pass 2 loads one partition at a time and marks every index
// whose id was already seen at a smaller index. Pass 3 re-streams the input
// and drops the marked lines. Peak memory is one partition's id set plus one
// bit per input line.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/core/error.hpp"
#include "speechbt/core/hash.hpp"
#include "speechbt/text/sentence.hpp"

namespace speechbt::text {

struct ExternalDedupStats {
  std::uint64_t input = 0;
  std::uint64_t kept = 0;
  std::size_t partitions = 0;
};

inline ExternalDedupStats dedup_jsonl_external(const std::filesystem::path& input,
                                               const std::filesystem::path& output,
                                               const std::filesystem::path& scratch_dir,
                                               std::uint64_t max_ids_in_memory) {
  namespace fs = std::filesystem;
  if (max_ids_in_memory == 0) max_ids_in_memory = 1;
  fs::create_directories(scratch_dir);

  ExternalDedupStats stats;
  {
    std::ifstream in(input, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + input.string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) ++stats.input;
    }
  }
  stats.partitions = static_cast<std::size_t>((stats.input + max_ids_in_memory - 1) / max_ids_in_memory);
  if (stats.partitions == 0) stats.partitions = 1;

  auto part_path = [&](std::size_t p) { return scratch_dir / ("part-" + std::to_string(p) + ".bin"); };

  {
    std::vector<std::ofstream> parts;
    parts.reserve(stats.partitions);
    for (std::size_t p = 0; p < stats.partitions; ++p) {
      parts.emplace_back(part_path(p), std::ios::binary | std::ios::trunc);
      if (!parts.back()) throw Error(ErrorCode::kIo, "cannot create " + part_path(p).string());
    }
    std::ifstream in(input, std::ios::binary);
    std::string line;
    std::uint64_t index = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const std::uint64_t id = parse_hex64(j.at("id").get<std::string>());
      auto& out = parts[static_cast<std::size_t>(id % stats.partitions)];
      out.write(reinterpret_cast<const char*>(&index), sizeof(index));
      out.write(reinterpret_cast<const char*>(&id), sizeof(id));
      ++index;
    }
  }

  std::vector<bool> dropped(static_cast<std::size_t>(stats.input), false);
  for (std::size_t p = 0; p < stats.partitions; ++p) {
    std::ifstream in(part_path(p), std::ios::binary);
    std::unordered_set<std::uint64_t> seen;
    std::uint64_t index = 0, id = 0;
    // Indices were appended in increasing order, so the first hit is the
    // first occurrence.
    while (in.read(reinterpret_cast<char*>(&index), sizeof(index)) &&
           in.read(reinterpret_cast<char*>(&id), sizeof(id))) {
      if (!seen.insert(id).second) dropped[static_cast<std::size_t>(index)] = true;
    }
    in.close();
    fs::remove(part_path(p));
  }

  {
    std::ifstream in(input, std::ios::binary);
    fs::path tmp = output;
    tmp += ".tmp";
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    std::string line;
    std::uint64_t index = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (!dropped[static_cast<std::size_t>(index)]) {
        out << line << '\n';
        ++stats.kept;
      }
      ++index;
    }
    out.close();
    fs::rename(tmp, output);
  }
  return stats;
}

}  // namespace speechbt::text
