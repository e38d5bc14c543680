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

// speechbt.backend.v1: newline-delimited JSON over a worker's stdin/stdout.
// One request per line, one response per line, answered in order.
//
//   request  {"op", "request_id", "payload"?, "proto"?}
//   response {"request_id", "status": ok|partial|error, "results"?, "error"?,
//             "proto"?, "capabilities"?}
//
// Every item id of a batch request appears exactly once across
// results[].id and error.item_ids.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/core/error.hpp"
#include "speechbt/metrics/normalize.hpp"

namespace speechbt::backend {

using nlohmann::json;

inline constexpr const char* kProto = "speechbt.backend.v1";

enum class Op { kHello, kSynthesizeBatch, kTranscribeBatch, kShutdown };

inline std::string_view op_name(Op op) {
  switch (op) {
    case Op::kHello: return "hello";
    case Op::kSynthesizeBatch: return "synthesize_batch";
    case Op::kTranscribeBatch: return "transcribe_batch";
    case Op::kShutdown: return "shutdown";
  }
  return "?";
}

inline std::optional<Op> parse_op(std::string_view s) {
  if (s == "hello") return Op::kHello;
  if (s == "synthesize_batch") return Op::kSynthesizeBatch;
  if (s == "transcribe_batch") return Op::kTranscribeBatch;
  if (s == "shutdown") return Op::kShutdown;
  return std::nullopt;
}

struct SynthItem {
  std::string id;
  std::string text;
};

struct TranscribeItem {
  std::string id;
  std::string audio_ref;
};

inline json hello_request(const std::string& request_id) {
  return {{"op", "hello"}, {"request_id", request_id}, {"proto", kProto}};
}

inline json shutdown_request(const std::string& request_id) { return {{"op", "shutdown"}, {"request_id", request_id}}; }

inline json synthesize_payload(const std::string& prompt_ref, const std::string& language, std::uint64_t seed,
                               const std::vector<SynthItem>& items) {
  json arr = json::array();
  for (const auto& it : items) arr.push_back({{"id", it.id}, {"text", it.text}});
  return {{"prompt_ref", prompt_ref}, {"language", language}, {"seed", seed}, {"items", arr}};
}

inline json transcribe_payload(const std::string& language, const std::vector<TranscribeItem>& items) {
  json arr = json::array();
  for (const auto& it : items) arr.push_back({{"id", it.id}, {"audio_ref", it.audio_ref}});
  return {{"language", language}, {"items", arr}};
}

inline json make_request(Op op, const std::string& request_id, json payload) {
  return {{"op", op_name(op)}, {"request_id", request_id}, {"payload", std::move(payload)}};
}

struct Capabilities {
  std::vector<std::string> languages;
  std::size_t max_batch = 0;
  std::string engine_id;

  bool supports_language(std::string_view language) const {
    const std::string want = metrics::primary_language(language);
    return std::any_of(languages.begin(), languages.end(), [&](const std::string& l) {
      return l == "*" || metrics::primary_language(l) == want;
    });
  }

  bool can_take(std::string_view language, std::size_t items) const {
    return items <= max_batch && supports_language(language);
  }
};

inline json to_json(const Capabilities& c) {
  return {{"languages", c.languages}, {"max_batch", c.max_batch}, {"engine_id", c.engine_id}};
}

// Validates a hello reply. Throws ProtocolError on anything unexpected.
inline Capabilities parse_hello_response(const json& r, const std::string& request_id) {
  try {
    if (r.at("request_id").get<std::string>() != request_id) throw Error(ErrorCode::kProtocolError, "hello id mismatch");
    if (r.at("status").get<std::string>() != "ok") throw Error(ErrorCode::kProtocolError, "hello refused");
    if (r.at("proto").get<std::string>() != kProto) throw Error(ErrorCode::kProtocolError, "unsupported protocol");
    const auto& c = r.at("capabilities");
    Capabilities caps;
    caps.languages = c.at("languages").get<std::vector<std::string>>();
    caps.max_batch = c.at("max_batch").get<std::size_t>();
    caps.engine_id = c.at("engine_id").get<std::string>();
    if (caps.max_batch == 0 || caps.languages.empty()) throw Error(ErrorCode::kProtocolError, "empty capabilities");
    return caps;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocolError, std::string("malformed hello reply: ") + e.what());
  }
}

inline std::vector<std::string> request_item_ids(const json& request) {
  std::vector<std::string> ids;
  if (!request.contains("payload") || !request["payload"].contains("items")) return ids;
  for (const auto& it : request["payload"]["items"]) ids.push_back(it.at("id").get<std::string>());
  return ids;
}

// Same, but skips items that lack a string id instead of throwing.
inline std::vector<std::string> request_item_ids_lenient(const json& request) {
  std::vector<std::string> ids;
  if (!request.is_object() || !request.contains("payload") || !request["payload"].is_object()) return ids;
  const auto& p = request["payload"];
  if (!p.contains("items") || !p["items"].is_array()) return ids;
  for (const auto& it : p["items"])
    if (it.is_object() && it.contains("id") && it["id"].is_string()) ids.push_back(it["id"].get<std::string>());
  return ids;
}

// Item-id conservation plus basic shape checks for a batch response.
inline void check_batch_response(const json& request, const json& response) {
  try {
    if (response.at("request_id").get<std::string>() != request.at("request_id").get<std::string>()) {
      throw Error(ErrorCode::kProtocolError, "request_id not echoed");
    }
    const auto status = response.at("status").get<std::string>();
    if (status != "ok" && status != "partial" && status != "error") {
      throw Error(ErrorCode::kProtocolError, "unknown status " + status);
    }
    std::map<std::string, int> seen;
    for (const auto& id : request_item_ids(request)) seen[id] = 0;
    auto mark = [&](const std::string& id) {
      auto it = seen.find(id);
      if (it == seen.end()) throw Error(ErrorCode::kProtocolError, "response names unknown item " + id);
      ++it->second;
    };
    if (response.contains("results")) {
      for (const auto& r : response["results"]) mark(r.at("id").get<std::string>());
    }
    if (response.contains("error") && response["error"].is_object() && response["error"].contains("item_ids")) {
      for (const auto& id : response["error"]["item_ids"]) mark(id.get<std::string>());
    }
    for (const auto& [id, n] : seen) {
      if (n != 1) throw Error(ErrorCode::kProtocolError, "item " + id + " accounted " + std::to_string(n) + " times");
    }
    if (status == "ok" && response.contains("error")) throw Error(ErrorCode::kProtocolError, "ok response carries error");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocolError, std::string("malformed response: ") + e.what());
  }
}

inline json error_response(const json& request_id, std::string_view code, std::string_view message,
                           const std::vector<std::string>& item_ids) {
  return {{"request_id", request_id},
          {"status", "error"},
          {"results", json::array()},
          {"error", {{"code", code}, {"message", message}, {"item_ids", item_ids}}}};
}

}  // namespace speechbt::backend
