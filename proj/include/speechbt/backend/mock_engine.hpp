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

// Deterministic stand-in for a TTS + ASR pair. "Synthesis" writes a small
// JSON sidecar holding the text after seeded character corruption;
// "transcription" reads it back. Everything that reaches the wire is a pure
// function of (config, request), so a second implementation of the protocol
// can reproduce responses byte for byte:
//
//   item_seed  = derive_seed(config.seed ^ request.seed, item.id)
//   for each code point c of item.text (whitespace passes through, no draw):
//     if rng.next_unit() < char_error_rate:
//       r = rng.next_below(26); x = 'a' + r; if x == c: x = 'a' + (r + 1) % 26
//   sidecar    = {"duration_s","prompt_ref","seed":item_seed,"text_corrupted"}
//   audio_ref  = audio_dir / (hex64(fnv1a64(sidecar.dump())) + ".json")
//
// JSON is emitted compact with sorted keys and raw UTF-8.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/backend/protocol.hpp"
#include "speechbt/core/error.hpp"
#include "speechbt/core/hash.hpp"
#include "speechbt/core/io.hpp"
#include "speechbt/core/unicode.hpp"

namespace speechbt::backend {

struct LatencyModel {
  double fixed_per_call_s = 0.0;
  double per_item_s = 0.0;
};

struct MockEngineConfig {
  double char_error_rate = 0.0;
  double seconds_per_char = 0.06;
  std::uint64_t seed = 0;
  std::optional<LatencyModel> latency_model;
  std::filesystem::path audio_dir = "mock-audio";
  std::string engine_id = "speechbt-mock-1";
  std::vector<std::string> languages{"*"};
  std::size_t max_batch = 64;

  void validate() const {
    if (!(char_error_rate >= 0.0 && char_error_rate <= 1.0)) {
      throw Error(ErrorCode::kConfigError, "char_error_rate must lie in [0, 1]");
    }
    if (!(seconds_per_char > 0.0) || !std::isfinite(seconds_per_char)) {
      throw Error(ErrorCode::kConfigError, "seconds_per_char must be positive");
    }
    if (max_batch == 0) throw Error(ErrorCode::kConfigError, "max_batch must be positive");
    if (latency_model && (latency_model->fixed_per_call_s < 0 || latency_model->per_item_s < 0)) {
      throw Error(ErrorCode::kConfigError, "latency must be non-negative");
    }
  }
};

inline std::uint64_t mock_item_seed(std::uint64_t config_seed, std::uint64_t request_seed, std::string_view item_id) {
  return derive_seed(config_seed ^ request_seed, item_id);
}

inline std::string corrupt_text(std::string_view text, double rate, std::uint64_t item_seed) {
  SplitMix64 rng(item_seed);
  std::string out;
  out.reserve(text.size());
  for (char32_t c : unicode::code_points(text)) {
    if (unicode::is_whitespace(c)) {
      unicode::append_utf8(out, c);
      continue;
    }
    if (rng.next_unit() < rate) {
      const auto r = rng.next_below(26);
      char32_t x = U'a' + static_cast<char32_t>(r);
      if (x == c) x = U'a' + static_cast<char32_t>((r + 1) % 26);
      unicode::append_utf8(out, x);
    } else {
      unicode::append_utf8(out, c);
    }
  }
  return out;
}

class MockEngine {
 public:
  explicit MockEngine(MockEngineConfig config) : config_(std::move(config)) { config_.validate(); }

  const MockEngineConfig& config() const { return config_; }

  Capabilities capabilities() const { return {config_.languages, config_.max_batch, config_.engine_id}; }

  // Handles one parsed request line. Never throws for bad input; the reply
  // carries an error code instead.
  json handle(const json& request) const {
    if (!request.is_object() || !request.contains("op") || !request["op"].is_string() ||
        !request.contains("request_id") || !request["request_id"].is_string()) {
      json rid = request.is_object() && request.contains("request_id") && request["request_id"].is_string()
                     ? request["request_id"]
                     : json(nullptr);
      return error_response(rid, "MalformedRequest", "request needs string fields op and request_id", {});
    }
    const json rid = request["request_id"];
    const auto op = parse_op(request["op"].get<std::string>());
    if (!op) return error_response(rid, "UnknownOp", "unknown op", {});
    switch (*op) {
      case Op::kHello: {
        if (request.contains("proto") && request["proto"] != kProto) {
          return error_response(rid, "UnsupportedProto", "unsupported protocol version", {});
        }
        return {{"request_id", rid}, {"status", "ok"}, {"proto", kProto}, {"capabilities", to_json(capabilities())}};
      }
      case Op::kShutdown:
        return {{"request_id", rid}, {"status", "ok"}};
      case Op::kSynthesizeBatch:
      case Op::kTranscribeBatch:
        return handle_batch(*op, request);
    }
    return error_response(rid, "UnknownOp", "unknown op", {});
  }

  // Seconds to sleep before answering a batch of n items.
  double latency_s(std::size_t n) const {
    if (!config_.latency_model) return 0.0;
    return config_.latency_model->fixed_per_call_s + config_.latency_model->per_item_s * static_cast<double>(n);
  }

 private:
  json handle_batch(Op op, const json& request) const {
    const json rid = request["request_id"];
    if (!request.contains("payload") || !request["payload"].is_object()) {
      return error_response(rid, "MalformedPayload", "missing payload object", {});
    }
    const json& p = request["payload"];
    const char* ref_key = op == Op::kSynthesizeBatch ? "text" : "audio_ref";
    std::vector<std::string> ids;
    std::set<std::string> unique;
    bool items_ok = p.contains("items") && p["items"].is_array() && !p["items"].empty();
    if (p.contains("items") && p["items"].is_array()) {
      for (const auto& it : p["items"]) {
        if (it.is_object() && it.contains("id") && it["id"].is_string()) {
          const auto& id = it["id"].get_ref<const std::string&>();
          if (unique.insert(id).second) ids.push_back(id);
          else items_ok = false;
          if (!it.contains(ref_key) || !it[ref_key].is_string()) items_ok = false;
        } else {
          items_ok = false;
        }
      }
    }
    if (!p.contains("language") || !p["language"].is_string()) items_ok = false;
    if (op == Op::kSynthesizeBatch) {
      if (!p.contains("prompt_ref") || !p["prompt_ref"].is_string()) items_ok = false;
      if (!p.contains("seed") || !p["seed"].is_number_unsigned()) items_ok = false;
    }
    if (!items_ok) return error_response(rid, "MalformedPayload", "malformed batch payload", ids);

    const auto language = p["language"].get<std::string>();
    if (!capabilities().supports_language(language)) {
      return error_response(rid, "UnsupportedLanguage", "language not served by this engine", ids);
    }
    if (ids.size() > config_.max_batch) return error_response(rid, "BatchTooLarge", "batch exceeds max_batch", ids);

    if (const double s = latency_s(ids.size()); s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(s));
    return op == Op::kSynthesizeBatch ? synthesize(rid, p) : transcribe(rid, p);
  }

  json synthesize(const json& rid, const json& p) const {
    const auto prompt_ref = p["prompt_ref"].get<std::string>();
    const auto seed = p["seed"].get<std::uint64_t>();
    json results = json::array();
    for (const auto& it : p["items"]) {
      const auto id = it["id"].get<std::string>();
      const auto text = it["text"].get<std::string>();
      const auto item_seed = mock_item_seed(config_.seed, seed, id);
      const double duration =
          static_cast<double>(unicode::scalar_count(text)) * config_.seconds_per_char;
      const json sidecar{{"text_corrupted", corrupt_text(text, config_.char_error_rate, item_seed)},
                         {"prompt_ref", prompt_ref},
                         {"duration_s", duration},
                         {"seed", item_seed}};
      const std::string body = sidecar.dump();
      const auto path = config_.audio_dir / (hex64(fnv1a64(body)) + ".json");
      // Content-addressed: an existing file already holds these bytes.
      if (!std::filesystem::exists(path)) io::write_file_atomic(path, body + "\n");
      results.push_back({{"id", id}, {"audio_ref", path.string()}, {"duration_s", duration}});
    }
    return {{"request_id", rid}, {"status", "ok"}, {"results", results}};
  }

  json transcribe(const json& rid, const json& p) const {
    json results = json::array();
    std::vector<std::string> unknown;
    for (const auto& it : p["items"]) {
      const auto id = it["id"].get<std::string>();
      const auto ref = it["audio_ref"].get<std::string>();
      std::optional<std::string> text;
      try {
        const json sidecar = json::parse(io::read_file(ref));
        if (sidecar.is_object() && sidecar.contains("text_corrupted") && sidecar["text_corrupted"].is_string()) {
          text = sidecar["text_corrupted"].get<std::string>();
        }
      } catch (const std::exception&) {
      }
      if (text) results.push_back({{"id", id}, {"text", *text}});
      else unknown.push_back(id);
    }
    if (unknown.empty()) return {{"request_id", rid}, {"status", "ok"}, {"results", results}};
    return {{"request_id", rid},
            {"status", results.empty() ? "error" : "partial"},
            {"results", results},
            {"error", {{"code", "UnknownAudioRef"}, {"message", "audio_ref not readable"}, {"item_ids", unknown}}}};
  }

  MockEngineConfig config_;
};

}  // namespace speechbt::backend
