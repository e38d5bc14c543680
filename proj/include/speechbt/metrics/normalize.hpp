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

#include <algorithm>
#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "speechbt/core/unicode.hpp"

namespace speechbt::metrics {

enum class Unit { kWord, kCharacter };

inline std::string_view unit_name(Unit u) { return u == Unit::kWord ? "word" : "character"; }

// Primary subtag, lowercased: "zh-Hans_CN" -> "zh".
inline std::string primary_language(std::string_view code) {
  std::string out;
  for (char c : code) {
    if (c == '-' || c == '_') break;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

struct NormalizerConfig {
  // Languages scored per character (CER) instead of per word.
  std::set<std::string> character_languages{"zh"};

  Unit unit_for(std::string_view language) const {
    return character_languages.count(primary_language(language)) ? Unit::kCharacter : Unit::kWord;
  }
};

struct NormalizedText {
  std::vector<std::string> tokens;
  std::string language;
  Unit unit = Unit::kWord;

  std::string joined() const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) out.push_back(' ');
      out += tokens[i];
    }
    return out;
  }
};

// Rule list, applied in order:
//   1. NFC, full lowercase mapping, NFC again.
//   2. Punctuation (P*), symbols (S*), controls and whitespace become a space.
//      Everything else, digits included, is kept verbatim.
//   3. Word languages split on spaces; character languages emit one token
//      per remaining code point.
inline NormalizedText normalize_text(std::string_view raw, std::string_view language,
                                     const NormalizerConfig& config = {}) {
  NormalizedText out;
  out.language = std::string(language);
  out.unit = config.unit_for(language);

  const std::string folded = unicode::nfc(unicode::lowercase(unicode::nfc(raw)));
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.tokens.push_back(std::move(current));
    current.clear();
  };
  for (char32_t c : unicode::code_points(folded)) {
    if (unicode::is_whitespace(c) || unicode::is_punct_or_symbol(c) || unicode::is_control(c)) {
      flush();
      continue;
    }
    if (out.unit == Unit::kCharacter) {
      std::string one;
      unicode::append_utf8(one, c);
      out.tokens.push_back(std::move(one));
    } else {
      unicode::append_utf8(current, c);
    }
  }
  flush();
  return out;
}

}  // namespace speechbt::metrics
