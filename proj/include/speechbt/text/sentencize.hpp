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

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "speechbt/core/unicode.hpp"
#include "speechbt/metrics/normalize.hpp"

namespace speechbt::text {

// Tokens (including their final period) after which a period never ends a
// sentence. Matched case-sensitively against the whitespace-delimited word.
inline std::map<std::string, std::set<std::string>> default_abbreviations() {
  return {
      {"en", {"Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "Sr.", "Jr.", "St.", "Mt.", "vs.", "e.g.", "i.e.", "Gen.",
              "Col.", "Lt.", "Sgt.", "Capt.", "Rev.", "Hon.", "Inc.", "Ltd.", "Co.", "No.", "Fig.", "approx."}},
      {"fr", {"M.", "MM.", "Mme.", "Mlle.", "Dr.", "Pr.", "St.", "Ste.", "p.", "cf.", "env."}},
      {"de", {"Dr.", "Prof.", "Nr.", "z.B.", "bzw.", "ca.", "Hr.", "Fr.", "vgl.", "S.", "St."}},
      {"es", {"Sr.", "Sra.", "Srta.", "Dr.", "Dra.", "Ud.", "Uds.", "p.ej.", "aprox."}},
      {"it", {"Sig.", "Sig.ra", "Dott.", "Prof.", "ecc."}},
      {"nl", {"dhr.", "mevr.", "dr.", "bijv.", "blz.", "ca."}},
  };
}

struct SentencizerConfig {
  std::map<std::string, std::set<std::string>> abbreviations = default_abbreviations();
};

namespace detail {

inline bool is_ascii_terminal(char32_t c) { return c == U'.' || c == U'!' || c == U'?'; }

inline bool is_cjk_terminal(char32_t c) { return c == U'。' || c == U'！' || c == U'？'; }

inline bool is_closer(char32_t c) {
  switch (c) {
    case U'"': case U'\'': case U')': case U']': case U'}':
    case U'»': case U'”': case U'’': case U'」': case U'』': case U'）': case U'】':
      return true;
    default:
      return false;
  }
}

}  // namespace detail

// Splits on . ! ? when followed by whitespace or the end of the document, and
// on 。！？ unconditionally. Closing quotes and brackets stay with the
// sentence they close. Whitespace inside a sentence is collapsed.
inline std::vector<std::string> sentencize(std::string_view document, std::string_view language,
                                           const SentencizerConfig& config = {}) {
  const std::vector<char32_t> cps = unicode::code_points(document);
  const auto abbrev_it = config.abbreviations.find(metrics::primary_language(language));
  const std::set<std::string>* guard = abbrev_it == config.abbreviations.end() ? nullptr : &abbrev_it->second;

  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    std::vector<char32_t> piece(cps.begin() + static_cast<std::ptrdiff_t>(start),
                                cps.begin() + static_cast<std::ptrdiff_t>(end));
    std::string s = unicode::collapse_whitespace(unicode::from_code_points(piece));
    if (!s.empty()) out.push_back(std::move(s));
    start = end;
  };

  std::size_t i = 0;
  while (i < cps.size()) {
    const char32_t c = cps[i];
    const bool cjk = detail::is_cjk_terminal(c);
    if (!cjk && !detail::is_ascii_terminal(c)) {
      ++i;
      continue;
    }
    // Swallow a run of terminals and closers: "?!", "...", ".»".
    std::size_t j = i + 1;
    while (j < cps.size() &&
           (detail::is_ascii_terminal(cps[j]) || detail::is_cjk_terminal(cps[j]) || detail::is_closer(cps[j]))) {
      ++j;
    }
    const bool at_boundary = j == cps.size() || unicode::is_whitespace(cps[j]);
    if (!cjk && !at_boundary) {
      i = j;
      continue;
    }
    if (!cjk && c == U'.' && guard != nullptr && j == i + 1) {
      std::size_t w = i;
      while (w > start && !unicode::is_whitespace(cps[w - 1])) --w;
      std::vector<char32_t> word(cps.begin() + static_cast<std::ptrdiff_t>(w),
                                 cps.begin() + static_cast<std::ptrdiff_t>(i + 1));
      if (guard->count(unicode::from_code_points(word))) {
        i = j;
        continue;
      }
    }
    emit(j);
    i = j;
  }
  if (start < cps.size()) emit(cps.size());
  return out;
}

}  // namespace speechbt::text
