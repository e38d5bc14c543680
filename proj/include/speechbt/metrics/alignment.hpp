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
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "speechbt/core/error.hpp"
#include "speechbt/metrics/normalize.hpp"

namespace speechbt::metrics {

struct AlignmentStats {
  std::uint64_t substitutions = 0;
  std::uint64_t deletions = 0;
  std::uint64_t insertions = 0;
  std::uint64_t reference_length = 0;

  std::uint64_t errors() const { return substitutions + deletions + insertions; }

  // Not clamped: insertion-heavy hypotheses give rates above 1.
  double rate() const {
    if (reference_length == 0) throw Error(ErrorCode::kEmptyReference, "reference has no tokens");
    return static_cast<double>(errors()) / static_cast<double>(reference_length);
  }

  AlignmentStats& operator+=(const AlignmentStats& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    reference_length += o.reference_length;
    return *this;
  }

  friend bool operator==(const AlignmentStats&, const AlignmentStats&) = default;
};

// Minimum edit alignment with unit costs. An empty reference is allowed here
// (every hypothesis token is an insertion); callers that need a rate check
// reference_length themselves.
//
// Among equal-cost predecessors the backtrace prefers deletion, then the
// diagonal step (match or substitution), then insertion. This only decides
// how the total splits into S/D/I.
template <typename T>
AlignmentStats align_counts(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  AlignmentStats stats;
  stats.reference_length = n;
  if (n == 0) {
    stats.insertions = m;
    return stats;
  }
  if (m == 0) {
    stats.deletions = n;
    return stats;
  }

  const std::size_t w = m + 1;
  std::vector<std::uint32_t> cost((n + 1) * w);
  for (std::size_t j = 0; j <= m; ++j) cost[j] = static_cast<std::uint32_t>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cost[i * w] = static_cast<std::uint32_t>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const std::uint32_t diag = cost[(i - 1) * w + (j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0u : 1u);
      const std::uint32_t del = cost[(i - 1) * w + j] + 1;
      const std::uint32_t ins = cost[i * w + (j - 1)] + 1;
      cost[i * w + j] = std::min({diag, del, ins});
    }
  }

  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::uint32_t here = cost[i * w + j];
    if (i > 0 && cost[(i - 1) * w + j] + 1 == here) {
      ++stats.deletions;
      --i;
    } else if (i > 0 && j > 0 &&
               cost[(i - 1) * w + (j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0u : 1u) == here) {
      if (!(ref[i - 1] == hyp[j - 1])) ++stats.substitutions;
      --i;
      --j;
    } else {
      ++stats.insertions;
      --j;
    }
  }
  return stats;
}

inline AlignmentStats edit_alignment(const std::vector<std::string>& reference,
                                     const std::vector<std::string>& hypothesis) {
  if (reference.empty()) throw Error(ErrorCode::kEmptyReference, "reference has no tokens");
  return align_counts<std::string>(reference, hypothesis);
}

inline AlignmentStats edit_alignment(const NormalizedText& reference, const NormalizedText& hypothesis) {
  if (primary_language(reference.language) != primary_language(hypothesis.language) ||
      reference.unit != hypothesis.unit) {
    throw Error(ErrorCode::kInvalidInput, "reference and hypothesis differ in language or unit");
  }
  return edit_alignment(reference.tokens, hypothesis.tokens);
}

using TextPair = std::pair<NormalizedText, NormalizedText>;

// Micro-average: total edits over total reference tokens.
inline AlignmentStats pooled_alignment(std::span<const TextPair> pairs) {
  AlignmentStats total;
  for (const auto& [ref, hyp] : pairs) {
    if (primary_language(ref.language) != primary_language(hyp.language) || ref.unit != hyp.unit) {
      throw Error(ErrorCode::kInvalidInput, "pair mixes languages or units");
    }
    if (!pairs.empty() && primary_language(ref.language) != primary_language(pairs.front().first.language)) {
      throw Error(ErrorCode::kInvalidInput, "pairs span more than one language");
    }
    total += align_counts<std::string>(ref.tokens, hyp.tokens);
  }
  return total;
}

inline double corpus_error_rate(std::span<const TextPair> pairs) {
  const AlignmentStats total = pooled_alignment(pairs);
  if (total.reference_length == 0) throw Error(ErrorCode::kEmptyReference, "pooled reference length is zero");
  return total.rate();
}

}  // namespace speechbt::metrics
