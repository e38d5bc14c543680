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
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/core/error.hpp"
#include "speechbt/core/hash.hpp"
#include "speechbt/core/unicode.hpp"
#include "speechbt/prompts/pool.hpp"
#include "speechbt/sched/mask.hpp"

namespace speechbt::sched {

struct SentenceRef {
  std::uint64_t id = 0;
  std::string text;
};

struct BatchItem {
  std::uint64_t sentence_id = 0;
  std::string text;
  std::size_t token_estimate = 0;
};

struct SynthesisBatch {
  std::string batch_id;
  std::string language;
  std::string prompt_id;
  std::string prompt_ref;
  std::vector<BatchItem> items;
  MaskLayout mask_layout;
  std::uint64_t seed = 0;
};

struct BatchOptions {
  std::size_t max_batch = 16;
  std::size_t max_spread = 16;
  // Conditioning length reserved for the shared prompt in the mask layout.
  std::size_t prompt_len = 32;
};

// Cycles through a seeded permutation of the pool so consecutive batches get
// different voices whenever the pool holds more than one clip.
class PromptSampler {
 public:
  PromptSampler(std::span<const prompts::PromptClip> pool, std::uint64_t seed)
      : order_(prompts::sample_prompts(pool, pool.size(), seed)) {
    if (order_.empty()) throw Error(ErrorCode::kInsufficientPool, "prompt pool is empty");
  }

  const prompts::PromptClip& next() {
    const auto& c = order_[cursor_ % order_.size()];
    ++cursor_;
    return c;
  }

 private:
  std::vector<prompts::PromptClip> order_;
  std::size_t cursor_ = 0;
};

// Token estimate is the character count; the engine owns real tokenization.
inline std::size_t token_estimate(const std::string& text) { return unicode::scalar_count(text); }

// Sorts by (estimate, id), fills batches greedily while both the size cap and
// the spread cap hold, then orders batches by their smallest sentence id.
inline std::vector<SynthesisBatch> make_batches(const std::string& language, std::span<const SentenceRef> sentences,
                                                const BatchOptions& opts, PromptSampler& sampler,
                                                std::uint64_t seed, const std::string& id_prefix) {
  if (opts.max_batch == 0) throw Error(ErrorCode::kInvalidInput, "max_batch must be >= 1");

  std::vector<BatchItem> items;
  items.reserve(sentences.size());
  for (const auto& s : sentences) items.push_back({s.id, s.text, std::max<std::size_t>(1, token_estimate(s.text))});
  std::stable_sort(items.begin(), items.end(), [](const BatchItem& a, const BatchItem& b) {
    return a.token_estimate != b.token_estimate ? a.token_estimate < b.token_estimate : a.sentence_id < b.sentence_id;
  });

  std::vector<std::vector<BatchItem>> groups;
  for (auto& it : items) {
    if (groups.empty() || groups.back().size() >= opts.max_batch ||
        it.token_estimate - groups.back().front().token_estimate > opts.max_spread) {
      groups.emplace_back();
    }
    groups.back().push_back(std::move(it));
  }

  auto min_id = [](const std::vector<BatchItem>& g) {
    std::uint64_t m = UINT64_MAX;
    for (const auto& it : g) m = std::min(m, it.sentence_id);
    return m;
  };
  std::stable_sort(groups.begin(), groups.end(),
                   [&](const auto& a, const auto& b) { return min_id(a) < min_id(b); });

  std::vector<SynthesisBatch> out;
  out.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    SynthesisBatch b;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "b%06zu", g);
    b.batch_id = id_prefix + buf;
    b.language = language;
    const auto& prompt = sampler.next();
    b.prompt_id = prompt.prompt_id;
    b.prompt_ref = prompt.audio_ref;
    b.items = std::move(groups[g]);
    std::vector<std::size_t> lens;
    for (const auto& it : b.items) lens.push_back(it.token_estimate);
    b.mask_layout = MaskLayout(opts.prompt_len, lens);
    b.seed = derive_seed(seed, b.batch_id);
    out.push_back(std::move(b));
  }
  return out;
}

// The boolean mask is never stored; only prompt_len and item_lens travel.
inline nlohmann::json to_json(const SynthesisBatch& b) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : b.items) {
    items.push_back({{"sentence_id", hex64(it.sentence_id)}, {"text", it.text}, {"token_estimate", it.token_estimate}});
  }
  return {{"batch_id", b.batch_id},
          {"language", b.language},
          {"prompt_id", b.prompt_id},
          {"prompt_ref", b.prompt_ref},
          {"items", items},
          {"mask_layout", {{"prompt_len", b.mask_layout.prompt_span().length}, {"item_lens", b.mask_layout.item_lens()}}},
          {"seed", b.seed}};
}

inline SynthesisBatch batch_from_json(const nlohmann::json& j) {
  SynthesisBatch b;
  b.batch_id = j.at("batch_id").get<std::string>();
  b.language = j.at("language").get<std::string>();
  b.prompt_id = j.at("prompt_id").get<std::string>();
  b.prompt_ref = j.at("prompt_ref").get<std::string>();
  for (const auto& it : j.at("items")) {
    b.items.push_back({parse_hex64(it.at("sentence_id").get<std::string>()), it.at("text").get<std::string>(),
                       it.at("token_estimate").get<std::size_t>()});
  }
  const auto lens = j.at("mask_layout").at("item_lens").get<std::vector<std::size_t>>();
  b.mask_layout = MaskLayout(j.at("mask_layout").at("prompt_len").get<std::size_t>(), lens);
  b.seed = j.at("seed").get<std::uint64_t>();
  return b;
}

}  // namespace speechbt::sched
