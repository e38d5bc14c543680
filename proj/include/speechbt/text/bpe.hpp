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

// Word-frequency byte-pair encoding in its classic form: every word is split
// into characters plus a separate end-of-word symbol, and the most frequent
// adjacent pair is merged repeatedly. Pair statistics are kept incrementally,
// so each merge only revisits the words that contain the merged pair.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/core/error.hpp"
#include "speechbt/core/unicode.hpp"
#include "speechbt/text/sentence.hpp"

namespace speechbt::text {

using Merge = std::pair<std::string, std::string>;

inline constexpr const char* kBpeHeader = "#version: speechbt-bpe-1";

struct BpeOptions {
  std::string end_of_word = "</w>";
  // Threads used for the initial pair count. Merge selection is serial, so
  // the result does not depend on this.
  std::size_t threads = 1;
};

namespace detail {

// Tie-break order among equally frequent pairs: lexicographic on
// (left, right) by UTF-8 bytes, except that the end-of-word marker sorts
// after every ordinary character. Pairs that close a word therefore lose ties
// against pairs inside the word.
inline std::string tie_key(const std::string& symbol, const std::string& eow) {
  if (eow.empty()) return symbol;
  std::string key;
  key.reserve(symbol.size());
  std::size_t pos = 0;
  while (pos < symbol.size()) {
    if (symbol.compare(pos, eow.size(), eow) == 0) {
      key.push_back('\xff');
      pos += eow.size();
    } else {
      key.push_back(symbol[pos++]);
    }
  }
  return key;
}

struct BpeState {
  struct Word {
    std::vector<std::uint32_t> symbols;
    std::uint64_t count = 0;
  };
  struct Candidate {
    std::int64_t count;
    std::string left_key;
    std::string right_key;
    std::uint64_t pair;

    bool operator<(const Candidate& o) const {
      return std::tie(o.count, left_key, right_key) < std::tie(count, o.left_key, o.right_key) ||
             (count == o.count && left_key == o.left_key && right_key == o.right_key && pair < o.pair);
    }
  };

  std::string eow;
  std::vector<std::string> symbols;
  std::vector<std::string> keys;
  std::unordered_map<std::string, std::uint32_t> symbol_ids;
  std::vector<Word> words;
  std::unordered_map<std::uint64_t, std::int64_t> pair_counts;
  std::unordered_map<std::uint64_t, std::unordered_set<std::size_t>> pair_words;
  std::set<Candidate> ranked;

  static std::uint64_t pack(std::uint32_t a, std::uint32_t b) { return (static_cast<std::uint64_t>(a) << 32) | b; }

  std::uint32_t intern(const std::string& s) {
    auto [it, inserted] = symbol_ids.emplace(s, static_cast<std::uint32_t>(symbols.size()));
    if (inserted) {
      symbols.push_back(s);
      keys.push_back(tie_key(s, eow));
    }
    return it->second;
  }

  Candidate candidate(std::uint64_t pair, std::int64_t count) const {
    return {count, keys[pair >> 32], keys[pair & 0xffffffffu], pair};
  }

  void adjust(std::uint64_t pair, std::int64_t delta) {
    auto& c = pair_counts[pair];
    if (c > 0) ranked.erase(candidate(pair, c));
    c += delta;
    if (c > 0) ranked.insert(candidate(pair, c));
  }

  void remove_word_pairs(std::size_t w) {
    const auto& s = words[w].symbols;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) adjust(pack(s[i], s[i + 1]), -static_cast<std::int64_t>(words[w].count));
  }

  void add_word_pairs(std::size_t w) {
    const auto& s = words[w].symbols;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      const std::uint64_t p = pack(s[i], s[i + 1]);
      adjust(p, static_cast<std::int64_t>(words[w].count));
      pair_words[p].insert(w);
    }
  }
};

}  // namespace detail

// word -> frequency. Returns at most num_merges merges in creation order.
inline std::vector<Merge> learn_bpe(const std::map<std::string, std::uint64_t>& word_counts, std::size_t num_merges,
                                    const BpeOptions& opts = {}) {
  std::vector<Merge> merges;
  if (num_merges == 0 || word_counts.empty()) return merges;

  detail::BpeState st;
  st.eow = opts.end_of_word;
  for (const auto& [word, count] : word_counts) {
    if (word.empty() || count == 0) continue;
    detail::BpeState::Word w;
    w.count = count;
    for (char32_t c : unicode::code_points(word)) {
      std::string one;
      unicode::append_utf8(one, c);
      w.symbols.push_back(st.intern(one));
    }
    if (!opts.end_of_word.empty()) w.symbols.push_back(st.intern(opts.end_of_word));
    st.words.push_back(std::move(w));
  }

  // Initial pair count, optionally fanned out over threads. Summation is
  // order-independent, so the totals are identical for any thread count.
  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, st.words.size()));
  std::vector<std::unordered_map<std::uint64_t, std::int64_t>> partial(threads);
  {
    std::vector<std::thread> pool;
    const std::size_t chunk = (st.words.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(st.words.size(), lo + chunk);
        for (std::size_t w = lo; w < hi; ++w) {
          const auto& s = st.words[w].symbols;
          for (std::size_t i = 0; i + 1 < s.size(); ++i) {
            partial[t][detail::BpeState::pack(s[i], s[i + 1])] += static_cast<std::int64_t>(st.words[w].count);
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& part : partial) {
    for (const auto& [p, c] : part) st.pair_counts[p] += c;
  }
  for (const auto& [p, c] : st.pair_counts) {
    if (c > 0) st.ranked.insert(st.candidate(p, c));
  }
  for (std::size_t w = 0; w < st.words.size(); ++w) {
    const auto& s = st.words[w].symbols;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) st.pair_words[detail::BpeState::pack(s[i], s[i + 1])].insert(w);
  }

  while (merges.size() < num_merges && !st.ranked.empty()) {
    const std::uint64_t best = st.ranked.begin()->pair;
    const std::uint32_t left = static_cast<std::uint32_t>(best >> 32);
    const std::uint32_t right = static_cast<std::uint32_t>(best & 0xffffffffu);
    merges.emplace_back(st.symbols[left], st.symbols[right]);
    const std::uint32_t merged = st.intern(st.symbols[left] + st.symbols[right]);

    std::vector<std::size_t> affected(st.pair_words[best].begin(), st.pair_words[best].end());
    std::sort(affected.begin(), affected.end());
    st.pair_words.erase(best);
    for (std::size_t w : affected) {
      auto& s = st.words[w].symbols;
      bool present = false;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) present |= (s[i] == left && s[i + 1] == right);
      if (!present) continue;
      st.remove_word_pairs(w);
      std::vector<std::uint32_t> next;
      next.reserve(s.size());
      for (std::size_t i = 0; i < s.size();) {
        if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(s[i++]);
        }
      }
      s = std::move(next);
      st.add_word_pairs(w);
    }
  }
  return merges;
}

inline std::map<std::string, std::uint64_t> count_words(const std::vector<SentenceRecord>& corpus) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& r : corpus) {
    std::istringstream in(r.text);
    std::string word;
    while (in >> word) ++counts[word];
  }
  return counts;
}

inline std::vector<Merge> learn_bpe(const std::vector<SentenceRecord>& corpus, std::size_t num_merges,
                                    const BpeOptions& opts = {}) {
  return learn_bpe(count_words(corpus), num_merges, opts);
}

inline std::string format_merges(const std::vector<Merge>& merges) {
  std::string out = std::string(kBpeHeader) + "\n";
  for (const auto& [l, r] : merges) out += l + " " + r + "\n";
  return out;
}

inline std::vector<Merge> parse_merges(std::istream& in) {
  std::vector<Merge> merges;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header) {
      if (line != kBpeHeader) throw Error(ErrorCode::kInvalidInput, "missing BPE header");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || line.find(' ', sp + 1) != std::string::npos) {
      throw Error(ErrorCode::kInvalidInput, "malformed merge line: " + line);
    }
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  if (!header) throw Error(ErrorCode::kInvalidInput, "missing BPE header");
  return merges;
}

struct BpeVocabDelta {
  std::vector<std::string> base_vocab;
  std::vector<Merge> learned_merges;
  std::vector<std::string> new_subwords;
};

// Append-only: base_vocab comes back untouched and new subwords follow in
// merge order.
inline BpeVocabDelta expand_vocab(const std::vector<std::string>& base_vocab, const std::vector<Merge>& merges) {
  BpeVocabDelta delta;
  delta.base_vocab = base_vocab;
  delta.learned_merges = merges;
  std::unordered_set<std::string> known(base_vocab.begin(), base_vocab.end());
  for (const auto& [l, r] : merges) {
    std::string product = l + r;
    if (known.insert(product).second) delta.new_subwords.push_back(std::move(product));
  }
  return delta;
}

inline nlohmann::json to_json(const BpeVocabDelta& d) {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [l, r] : d.learned_merges) merges.push_back({l, r});
  return {{"schema", "speechbt.vocab.v1"},
          {"base_vocab", d.base_vocab},
          {"learned_merges", merges},
          {"new_subwords", d.new_subwords}};
}

}  // namespace speechbt::text
