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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/core/error.hpp"
#include "speechbt/core/io.hpp"

namespace speechbt::pipeline {

inline constexpr const char* kManifestSchema = "speechbt.manifest.v1";

// One synthesized utterance. audio_ref and gate_report_ref are relative to the
// run directory so manifests from different run directories compare equal.
struct ManifestEntry {
  std::string utt_id;
  std::string language;
  std::string text;
  std::string audio_ref;
  double duration_s = 0.0;
  std::string prompt_id;
  std::string batch_id;
  std::string engine_id;
  std::uint64_t seed = 0;
  std::string gate_report_ref;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline nlohmann::json to_json(const ManifestEntry& e) {
  return {{"schema", kManifestSchema}, {"utt_id", e.utt_id},       {"language", e.language},
          {"text", e.text},            {"audio_ref", e.audio_ref}, {"duration_s", e.duration_s},
          {"prompt_id", e.prompt_id},  {"batch_id", e.batch_id},   {"engine_id", e.engine_id},
          {"seed", e.seed},            {"gate_report_ref", e.gate_report_ref}};
}

inline ManifestEntry manifest_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kManifestSchema) throw Error(ErrorCode::kInvalidInput, "not a manifest record");
  ManifestEntry e;
  e.utt_id = j.at("utt_id").get<std::string>();
  e.language = j.at("language").get<std::string>();
  e.text = j.at("text").get<std::string>();
  e.audio_ref = j.at("audio_ref").get<std::string>();
  e.duration_s = j.at("duration_s").get<double>();
  e.prompt_id = j.at("prompt_id").get<std::string>();
  e.batch_id = j.at("batch_id").get<std::string>();
  e.engine_id = j.at("engine_id").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.gate_report_ref = j.at("gate_report_ref").get<std::string>();
  return e;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::vector<ManifestEntry> out;
  io::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) { out.push_back(manifest_from_json(j)); });
  return out;
}

}  // namespace speechbt::pipeline
