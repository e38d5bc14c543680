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

#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "speechbt/prompts/pool.hpp"

namespace speechbt::prompts {
namespace {

PromptClip clip(std::string id, std::vector<double> v) {
  PromptClip c;
  c.prompt_id = id;
  c.audio_ref = "clips/" + id + ".wav";
  c.duration_s = 5.0;
  c.source = "libritts";
  c.embedding = {std::move(v), "ecapa2"};
  return c;
}

// Speakers drawn around a few centroids so that some pairs exceed 0.8.
std::vector<PromptClip> clustered_pool(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> centroids(n / 10 + 1, std::vector<double>(dim));
  for (auto& c : centroids)
    for (auto& x : c) x = g(rng);
  std::vector<PromptClip> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = centroids[rng() % centroids.size()];
    const double noise = (rng() % 3 == 0) ? 1.5 : 0.4;
    std::vector<double> v(dim);
    for (std::size_t d = 0; d < dim; ++d) v[d] = c[d] + noise * g(rng);
    out.push_back(clip("p" + std::to_string(i), std::move(v)));
  }
  return out;
}

TEST(CosineSimilarity, Examples) {
  EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 1.0, 1e-9);
  EXPECT_EQ(cosine_similarity(std::vector<double>{1, 0, 0}, std::vector<double>{0, 1, 0}), 0.0);
}

TEST(CosineSimilarity, Errors) {
  try {
    cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  try {
    cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroNorm);
  }
}

TEST(CosineSimilarity, RandomPairsMatchOracle) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(192), b(192);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    const double c = cosine_similarity(a, b);
    ASSERT_NEAR(c, testing::cosine_oracle(a, b), 1e-12);
    ASSERT_EQ(c, cosine_similarity(b, a));
    ASSERT_LE(std::abs(c), 1.0);
  }
}

TEST(DedupPool, IdenticalVoicesCollapse) {
  const std::vector<PromptClip> clips{clip("a", {1, 2, 3}), clip("b", {1, 2, 3})};
  const auto kept = dedup_pool(clips);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].prompt_id, "a");
}

TEST(DedupPool, OrthogonalVoicesAllRetained) {
  const std::vector<PromptClip> clips{clip("a", {1, 0, 0}), clip("b", {0, 1, 0}), clip("c", {0, 0, 1})};
  EXPECT_EQ(dedup_pool(clips).size(), 3u);
}

TEST(DedupPool, MatchesPairwiseOracleAndPostCondition) {
  const auto clips = clustered_pool(500, 32, 8);
  std::vector<std::vector<double>> vecs;
  for (const auto& c : clips) vecs.push_back(c.embedding.vector);
  const auto oracle = testing::dedup_oracle(vecs, 0.8);
  const auto kept = dedup_pool_indices(clips);
  EXPECT_EQ(kept, oracle);
  EXPECT_LT(kept.size(), clips.size());
  EXPECT_GT(kept.size(), 1u);
  for (std::size_t i = 0; i < kept.size(); ++i)
    for (std::size_t j = i + 1; j < kept.size(); ++j)
      ASSERT_LT(testing::cosine_oracle(vecs[kept[i]], vecs[kept[j]]), 0.8);
  // Subsequence of the input.
  EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end()));
}

TEST(DedupPool, PrunedScanEqualsNaiveScan) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto clips = clustered_pool(400, 64, seed);
    for (double t : {0.3, 0.5, 0.8, 0.95}) {
      DedupOptions naive{t, false}, pruned{t, true};
      ASSERT_EQ(dedup_pool_indices(clips, naive), dedup_pool_indices(clips, pruned)) << seed << " " << t;
    }
  }
}

TEST(DedupPool, ThresholdExtremes) {
  const auto clips = clustered_pool(60, 8, 4);
  double hi = -1.0;
  for (std::size_t i = 0; i < clips.size(); ++i)
    for (std::size_t j = i + 1; j < clips.size(); ++j) {
      const double c = cosine_similarity(clips[i].embedding, clips[j].embedding);
      hi = std::max(hi, c);
    }
  // Retaining exactly one clip needs a positive minimum similarity, since
  // the threshold lives in (0, 1].
  EXPECT_EQ(dedup_pool(clips, {std::nextafter(hi, 2.0), false}).size(), clips.size());
  std::vector<PromptClip> positive;
  for (const auto& c : clips) {
    auto p = c;
    for (auto& x : p.embedding.vector) x = std::abs(x) + 0.01;
    positive.push_back(p);
  }
  double pos_lo = 1.0;
  for (std::size_t i = 0; i < positive.size(); ++i)
    for (std::size_t j = i + 1; j < positive.size(); ++j)
      pos_lo = std::min(pos_lo, cosine_similarity(positive[i].embedding, positive[j].embedding));
  ASSERT_GT(pos_lo, 0.0);
  EXPECT_EQ(dedup_pool(positive, {pos_lo, false}).size(), 1u);
}

TEST(DedupPool, MixedDimensionsRejected) {
  const std::vector<PromptClip> clips{clip("a", {1, 0}), clip("b", {1, 0, 0})};
  EXPECT_THROW(dedup_pool(clips), Error);
}

TEST(SamplePrompts, Examples) {
  const auto pool = clustered_pool(20, 4, 2);
  const auto all = sample_prompts(pool, pool.size(), 42);
  std::multiset<std::string> a, b;
  for (const auto& c : pool) a.insert(c.prompt_id);
  for (const auto& c : all) b.insert(c.prompt_id);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(sample_prompts(pool, 0, 42).empty());
  const auto x = sample_prompts(pool, 7, 1234), y = sample_prompts(pool, 7, 1234);
  ASSERT_EQ(x.size(), 7u);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i].prompt_id, y[i].prompt_id);
  const auto z = sample_prompts(pool, 7, 1235);
  bool differs = false;
  for (std::size_t i = 0; i < x.size(); ++i) differs |= x[i].prompt_id != z[i].prompt_id;
  EXPECT_TRUE(differs);
}

TEST(SamplePrompts, InsufficientPool) {
  const auto pool = clustered_pool(3, 4, 2);
  try {
    sample_prompts(pool, 4, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientPool);
  }
}

TEST(PromptJson, RoundTripAndValidation) {
  auto c = clip("v1", {0.5, -0.5});
  c.language_hint = "vi";
  const auto j = to_json(c, true);
  EXPECT_EQ(j["schema"], "speechbt.prompt.v1");
  EXPECT_EQ(j["retained"], true);
  const auto back = prompt_from_json(j);
  EXPECT_EQ(back.prompt_id, "v1");
  EXPECT_EQ(back.embedding.vector, c.embedding.vector);
  EXPECT_EQ(back.language_hint, c.language_hint);
  auto zero = j;
  zero["vector"] = {0.0, 0.0};
  EXPECT_THROW(prompt_from_json(zero), Error);
}

}  // namespace
}  // namespace speechbt::prompts
