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
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/core/error.hpp"
#include "speechbt/core/hash.hpp"
#include "speechbt/core/unicode.hpp"

namespace speechbt::text {

inline constexpr const char* kSentenceSchema = "speechbt.sent.v1";

enum class SourceKind { kWikipedia, kWmt, kBooks, kEuroparl, kSkypile, kOther };

struct TextSource {
  SourceKind kind = SourceKind::kOther;
  std::string other_name;  // only meaningful for kOther

  friend bool operator==(const TextSource&, const TextSource&) = default;
};

inline std::string to_string(const TextSource& s) {
  switch (s.kind) {
    case SourceKind::kWikipedia: return "wikipedia";
    case SourceKind::kWmt: return "wmt";
    case SourceKind::kBooks: return "books";
    case SourceKind::kEuroparl: return "europarl";
    case SourceKind::kSkypile: return "skypile";
    case SourceKind::kOther: return "other:" + s.other_name;
  }
  return "other:";
}

inline TextSource parse_source(std::string_view s) {
  if (s == "wikipedia") return {SourceKind::kWikipedia, {}};
  if (s == "wmt") return {SourceKind::kWmt, {}};
  if (s == "books") return {SourceKind::kBooks, {}};
  if (s == "europarl") return {SourceKind::kEuroparl, {}};
  if (s == "skypile") return {SourceKind::kSkypile, {}};
  if (s.starts_with("other:")) return {SourceKind::kOther, std::string(s.substr(6))};
  return {SourceKind::kOther, std::string(s)};
}

struct SentenceRecord {
  std::uint64_t id = 0;
  std::string language;
  std::string text;
  TextSource source;
  std::size_t char_count = 0;
  double alpha_ratio = 0.0;

  friend bool operator==(const SentenceRecord&, const SentenceRecord&) = default;
};

// Dedup canonical form: NFC, trimmed, whitespace runs collapsed, case kept.
inline std::string canonicalize(std::string_view raw) { return unicode::collapse_whitespace(unicode::nfc(raw)); }

inline std::uint64_t sentence_id(std::string_view language, std::string_view canonical_text) {
  std::uint64_t h = fnv1a64(language);
  h = fnv1a64(std::string_view("\x1f", 1), h);
  return fnv1a64(canonical_text, h);
}

// Alphabetic characters over non-whitespace characters; 0 for blank text.
inline double alpha_ratio(std::string_view utf8) {
  std::size_t alpha = 0, visible = 0;
  for (char32_t c : unicode::code_points(utf8)) {
    if (unicode::is_whitespace(c)) continue;
    ++visible;
    if (unicode::is_alphabetic(c)) ++alpha;
  }
  return visible == 0 ? 0.0 : static_cast<double>(alpha) / static_cast<double>(visible);
}

inline SentenceRecord make_record(std::string_view raw, std::string_view language, TextSource source = {}) {
  SentenceRecord r;
  r.language = std::string(language);
  r.text = canonicalize(raw);
  r.source = std::move(source);
  r.char_count = unicode::scalar_count(r.text);
  r.alpha_ratio = alpha_ratio(r.text);
  r.id = sentence_id(r.language, r.text);
  return r;
}

inline nlohmann::json to_json(const SentenceRecord& r) {
  return nlohmann::json{{"schema", kSentenceSchema},     {"id", hex64(r.id)},
                        {"language", r.language},        {"text", r.text},
                        {"source", to_string(r.source)}, {"char_count", r.char_count},
                        {"alpha_ratio", r.alpha_ratio}};
}

inline SentenceRecord sentence_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kSentenceSchema) throw Error(ErrorCode::kInvalidInput, "not a speechbt.sent.v1 record");
  SentenceRecord r;
  r.id = parse_hex64(j.at("id").get<std::string>());
  r.language = j.at("language").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.source = parse_source(j.at("source").get<std::string>());
  r.char_count = j.at("char_count").get<std::size_t>();
  r.alpha_ratio = j.at("alpha_ratio").get<double>();
  return r;
}

struct FilterPolicy {
  std::size_t min_chars = 8;
  std::size_t max_chars = 400;
  double min_alpha_ratio = 0.5;
};

enum class FilterVerdict { kKeep, kRejectShort, kRejectLong, kRejectNonAlpha };

inline std::string_view verdict_name(FilterVerdict v) {
  switch (v) {
    case FilterVerdict::kKeep: return "keep";
    case FilterVerdict::kRejectShort: return "short";
    case FilterVerdict::kRejectLong: return "long";
    case FilterVerdict::kRejectNonAlpha: return "nonalpha";
  }
  return "?";
}

inline FilterVerdict filter_sentence(const SentenceRecord& r, const FilterPolicy& policy = {}) {
  if (r.char_count < policy.min_chars) return FilterVerdict::kRejectShort;
  if (r.char_count > policy.max_chars) return FilterVerdict::kRejectLong;
  if (r.alpha_ratio < policy.min_alpha_ratio) return FilterVerdict::kRejectNonAlpha;
  return FilterVerdict::kKeep;
}

// First occurrence of each id wins; survivors keep their input order.
class SentenceDeduper {
 public:
  bool admit(std::uint64_t id) { return seen_.insert(id).second; }
  std::size_t size() const { return seen_.size(); }

 private:
  std::unordered_set<std::uint64_t> seen_;
};

template <typename Range>
std::vector<SentenceRecord> dedup_sentences(const Range& records) {
  SentenceDeduper dedup;
  std::vector<SentenceRecord> out;
  for (const SentenceRecord& r : records) {
    if (dedup.admit(r.id)) out.push_back(r);
  }
  return out;
}

}  // namespace speechbt::text
