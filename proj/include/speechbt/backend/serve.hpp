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

// Request loop for a protocol worker: one line in, one line out, strictly in
// arrival order. A bad line gets an error reply and the session carries on.

#include <istream>
#include <optional>
#include <ostream>
#include <string>

#include "speechbt/backend/mock_engine.hpp"

namespace speechbt::backend {

struct ServeOptions {
  // Fault injection: stop without replying when the (n+1)-th batch request
  // arrives. With a marker path this fires only if the marker is absent, and
  // the marker is created first, so a respawned worker behaves normally.
  std::optional<std::size_t> crash_after;
  std::optional<std::filesystem::path> crash_marker;
};

enum class ServeExit { kShutdown, kEndOfInput, kCrash };

inline std::string response_line(const MockEngine& engine, const std::string& line) {
  json request;
  try {
    request = json::parse(line);
  } catch (const json::parse_error&) {
    return error_response(nullptr, "MalformedRequest", "line is not valid JSON", {}).dump();
  }
  try {
    return engine.handle(request).dump();
  } catch (const std::exception&) {
    json rid = request.is_object() && request.contains("request_id") && request["request_id"].is_string()
                   ? request["request_id"]
                   : json(nullptr);
    return error_response(rid, "EngineError", "engine failed on request", request_item_ids_lenient(request)).dump();
  }
}

inline ServeExit serve(std::istream& in, std::ostream& out, const MockEngine& engine, const ServeOptions& opts = {}) {
  std::string line;
  std::size_t batches = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    bool is_shutdown = false;
    bool is_batch = false;
    try {
      const auto j = json::parse(line);
      if (j.is_object() && j.contains("op") && j["op"].is_string()) {
        is_shutdown = j["op"] == "shutdown";
        is_batch = j["op"] == "synthesize_batch" || j["op"] == "transcribe_batch";
      }
    } catch (const json::parse_error&) {
    }
    if (is_batch && opts.crash_after && batches >= *opts.crash_after) {
      bool fire = true;
      if (opts.crash_marker) {
        fire = !std::filesystem::exists(*opts.crash_marker);
        if (fire) io::write_file_atomic(*opts.crash_marker, "crashed\n");
      }
      if (fire) return ServeExit::kCrash;
    }
    if (is_batch) ++batches;
    out << response_line(engine, line) << '\n';
    out.flush();
    if (is_shutdown) return ServeExit::kShutdown;
  }
  return ServeExit::kEndOfInput;
}

}  // namespace speechbt::backend
