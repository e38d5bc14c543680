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

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/core/error.hpp"
#include "speechbt/core/hash.hpp"

namespace speechbt::prompts {

inline constexpr const char* kPromptSchema = "speechbt.prompt.v1";
inline constexpr double kDefaultDedupThreshold = 0.8;

struct SpeakerEmbedding {
  std::vector<double> vector;
  std::string encoder_id;
};

struct PromptClip {
  std::string prompt_id;
  std::string audio_ref;
  double duration_s = 0.0;
  std::string source;  // emilia, commonvoice, wenetspeech, cml-tts, libritts, other
  SpeakerEmbedding embedding;
  std::optional<std::string> language_hint;
};

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kDimensionMismatch, "embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw Error(ErrorCode::kZeroNorm, "embedding has zero norm");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  return cosine_similarity(a.vector, b.vector);
}

struct DedupOptions {
  double threshold = kDefaultDedupThreshold;
  // Skip exact evaluation for pairs that a prefix dot product plus a
  // Cauchy-Schwarz bound on the remaining coordinates proves dissimilar.
  // The decision for every pair that is not skipped uses the same formula as
  // the naive scan, so the retained set is identical.
  bool prune = false;
};

namespace detail {

struct PrunedVector {
  std::vector<double> unit;   // normalized copy
  std::vector<double> tail;   // tail[k] = norm of unit[k..]
};

inline PrunedVector make_pruned(std::span<const double> v) {
  PrunedVector p;
  const double n = std::sqrt(squared_norm(v));
  if (!(n > 0.0)) throw Error(ErrorCode::kZeroNorm, "embedding has zero norm");
  p.unit.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) p.unit[i] = v[i] / n;
  p.tail.assign(v.size() + 1, 0.0);
  double acc = 0.0;
  for (std::size_t i = v.size(); i-- > 0;) {
    acc += p.unit[i] * p.unit[i];
    p.tail[i] = std::sqrt(acc);
  }
  return p;
}

}  // namespace detail

// Greedy first-wins scan: a clip survives iff its cosine similarity to every
// clip retained before it is strictly below the threshold. Returns indices
// into `clips`.
inline std::vector<std::size_t> dedup_pool_indices(std::span<const PromptClip> clips, const DedupOptions& opts = {}) {
  std::vector<std::size_t> kept;
  if (clips.empty()) return kept;
  const std::size_t dim = clips.front().embedding.vector.size();
  for (const auto& c : clips) {
    if (c.embedding.vector.size() != dim) throw Error(ErrorCode::kDimensionMismatch, "pool mixes embedding sizes");
  }

  std::vector<detail::PrunedVector> pruned;
  const std::size_t probe = dim / 4;
  constexpr double kSlack = 1e-9;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& v = clips[i].embedding.vector;
    detail::PrunedVector cand;
    if (opts.prune) cand = detail::make_pruned(v);
    bool duplicate = false;
    for (std::size_t k = 0; k < kept.size() && !duplicate; ++k) {
      if (opts.prune) {
        const auto& r = pruned[k];
        double partial = 0.0;
        for (std::size_t d = 0; d < probe; ++d) partial += cand.unit[d] * r.unit[d];
        if (partial + cand.tail[probe] * r.tail[probe] < opts.threshold - kSlack) continue;
      }
      duplicate = cosine_similarity(v, clips[kept[k]].embedding.vector) >= opts.threshold;
    }
    if (!duplicate) {
      kept.push_back(i);
      if (opts.prune) pruned.push_back(std::move(cand));
    }
  }
  return kept;
}

inline std::vector<PromptClip> dedup_pool(std::span<const PromptClip> clips, const DedupOptions& opts = {}) {
  std::vector<PromptClip> out;
  for (std::size_t i : dedup_pool_indices(clips, opts)) out.push_back(clips[i]);
  return out;
}

// Seeded uniform sample without replacement (partial Fisher-Yates over the
// pool order).
inline std::vector<PromptClip> sample_prompts(std::span<const PromptClip> pool, std::size_t k, std::uint64_t seed) {
  if (k > pool.size()) {
    throw Error(ErrorCode::kInsufficientPool,
                "requested " + std::to_string(k) + " prompts from a pool of " + std::to_string(pool.size()));
  }
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  std::vector<PromptClip> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(pool[order[i]]);
  return out;
}

struct ClipBounds {
  double min_duration_s = 3.0;
  double max_duration_s = 15.0;
};

inline bool within_bounds(const PromptClip& c, const ClipBounds& b) {
  return c.duration_s >= b.min_duration_s && c.duration_s <= b.max_duration_s;
}

inline nlohmann::json to_json(const PromptClip& c, bool retained) {
  nlohmann::json j{{"schema", kPromptSchema},       {"prompt_id", c.prompt_id},
                   {"audio_ref", c.audio_ref},     {"duration_s", c.duration_s},
                   {"source", c.source},           {"vector", c.embedding.vector},
                   {"encoder_id", c.embedding.encoder_id}};
  if (c.language_hint) j["language_hint"] = *c.language_hint;
  if (retained) j["retained"] = true;
  return j;
}

inline PromptClip prompt_from_json(const nlohmann::json& j) {
  if (j.value("schema", std::string(kPromptSchema)) != kPromptSchema) {
    throw Error(ErrorCode::kInvalidInput, "not a speechbt.prompt.v1 record");
  }
  PromptClip c;
  c.prompt_id = j.at("prompt_id").get<std::string>();
  c.audio_ref = j.at("audio_ref").get<std::string>();
  c.duration_s = j.at("duration_s").get<double>();
  c.source = j.value("source", std::string("other"));
  c.embedding.vector = j.at("vector").get<std::vector<double>>();
  c.embedding.encoder_id = j.value("encoder_id", std::string());
  if (j.contains("language_hint") && j["language_hint"].is_string()) c.language_hint = j["language_hint"].get<std::string>();
  for (double x : c.embedding.vector) {
    if (!std::isfinite(x)) throw Error(ErrorCode::kInvalidInput, "non-finite embedding entry in " + c.prompt_id);
  }
  if (!(squared_norm(c.embedding.vector) > 0.0)) throw Error(ErrorCode::kZeroNorm, "zero embedding for " + c.prompt_id);
  if (!(c.duration_s > 0.0)) throw Error(ErrorCode::kInvalidInput, "non-positive duration for " + c.prompt_id);
  return c;
}

}  // namespace speechbt::prompts
