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

#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "speechbt/text/bpe.hpp"

namespace speechbt::text {
namespace {

using Merges = std::vector<Merge>;

TEST(LearnBpe, AbabHandTrace) {
  // ("a","b") occurs twice in each of 4 words, 8 in all; after merging,
  // ("ab","ab") and ("ab","</w>") both occur 4 times and the in-word pair wins.
  const std::map<std::string, std::uint64_t> corpus{{"abab", 4}};
  EXPECT_EQ(learn_bpe(corpus, 2), (Merges{{"a", "b"}, {"ab", "ab"}}));
}

TEST(LearnBpe, FromSentenceRecords) {
  std::vector<SentenceRecord> corpus;
  for (int i = 0; i < 4; ++i) corpus.push_back(make_record("abab", "vi"));
  EXPECT_EQ(learn_bpe(corpus, 2), (Merges{{"a", "b"}, {"ab", "ab"}}));
}

TEST(LearnBpe, NothingToMerge) {
  EXPECT_TRUE(learn_bpe(std::map<std::string, std::uint64_t>{{"x", 3}}, 5, BpeOptions{"", 1}).empty());
  EXPECT_TRUE(learn_bpe(std::map<std::string, std::uint64_t>{{"abab", 4}}, 0).empty());
  // With the end-of-word symbol a single character still yields ("x","</w>").
  EXPECT_EQ(learn_bpe(std::map<std::string, std::uint64_t>{{"x", 3}}, 5), (Merges{{"x", "</w>"}}));
}

TEST(LearnBpe, StopsWhenPairsRunOut) {
  const auto merges = learn_bpe(std::map<std::string, std::uint64_t>{{"abc", 1}}, 100);
  EXPECT_EQ(merges.size(), 3u);  // a b c </w> collapses to one symbol in three merges
}

std::map<std::string, std::uint64_t> random_words(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::map<std::string, std::uint64_t> words;
  for (std::size_t i = 0; i < n; ++i) {
    std::string w;
    const auto len = 1 + rng() % 7;
    for (std::size_t k = 0; k < len; ++k) w.push_back("abcde"[rng() % 5]);
    words[w] += 1 + rng() % 5;
  }
  return words;
}

TEST(LearnBpe, MatchesFullRecountOracle) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto words = random_words(seed, 60);
    ASSERT_EQ(learn_bpe(words, 40), testing::bpe_oracle(words, 40)) << "seed " << seed;
  }
}

TEST(LearnBpe, IndependentOfThreadCount) {
  const auto words = random_words(99, 2000);
  const auto serial = learn_bpe(words, 200, BpeOptions{"</w>", 1});
  for (std::size_t threads : {2u, 4u, 7u}) EXPECT_EQ(learn_bpe(words, 200, BpeOptions{"</w>", threads}), serial);
}

TEST(BpeFile, HeaderAndLines) {
  const Merges merges{{"a", "b"}, {"ab", "</w>"}};
  const std::string text = format_merges(merges);
  EXPECT_EQ(text, "#version: speechbt-bpe-1\na b\nab </w>\n");
  std::istringstream in(text);
  EXPECT_EQ(parse_merges(in), merges);
  std::istringstream bad("a b\n");
  EXPECT_THROW(parse_merges(bad), Error);
}

TEST(ExpandVocab, Examples) {
  EXPECT_TRUE(expand_vocab({"ab", "x"}, {{"a", "b"}}).new_subwords.empty());
  const auto d = expand_vocab({"x"}, {{"a", "b"}, {"ab", "ab"}});
  EXPECT_EQ(d.new_subwords, (std::vector<std::string>{"ab", "abab"}));
  const auto empty = expand_vocab({"x", "y"}, {});
  EXPECT_TRUE(empty.new_subwords.empty());
  EXPECT_EQ(empty.base_vocab, (std::vector<std::string>{"x", "y"}));
}

TEST(ExpandVocab, AppendOnlyOnRandomBases) {
  std::mt19937_64 rng(17);
  const auto merges = learn_bpe(random_words(5, 300), 60);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> base;
    std::set<std::string> seen;
    const auto n = rng() % 40;
    for (std::size_t i = 0; i < n; ++i) {
      std::string s;
      const auto len = 1 + rng() % 3;
      for (std::size_t k = 0; k < len; ++k) s.push_back("abcde"[rng() % 5]);
      if (seen.insert(s).second) base.push_back(s);
    }
    const auto d = expand_vocab(base, merges);
    ASSERT_EQ(d.base_vocab, base);
    std::vector<std::string> expanded = d.base_vocab;
    expanded.insert(expanded.end(), d.new_subwords.begin(), d.new_subwords.end());
    ASSERT_TRUE(std::equal(base.begin(), base.end(), expanded.begin()));
    std::set<std::string> all(expanded.begin(), expanded.end());
    ASSERT_EQ(all.size(), expanded.size());
    // New subwords keep merge order and each is a merge product.
    std::size_t cursor = 0;
    for (const auto& sw : d.new_subwords) {
      while (cursor < merges.size() && merges[cursor].first + merges[cursor].second != sw) ++cursor;
      ASSERT_LT(cursor, merges.size());
    }
  }
}

}  // namespace
}  // namespace speechbt::text
