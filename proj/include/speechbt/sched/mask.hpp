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

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "speechbt/core/error.hpp"

namespace speechbt::sched {

struct Span {
  std::size_t offset = 0;
  std::size_t length = 0;

  bool contains(std::size_t pos) const { return pos >= offset && pos < offset + length; }
  friend bool operator==(const Span&, const Span&) = default;
};

// Attention layout for one shared-prompt batch laid out as
//   [prompt | item 0 | item 1 | ...]
// A position may attend to every prompt position and, causally, to earlier
// positions of its own item. Items never see each other.
class MaskLayout {
 public:
  MaskLayout() = default;

  MaskLayout(std::size_t prompt_len, std::span<const std::size_t> item_lens) : prompt_{0, prompt_len} {
    std::size_t offset = prompt_len;
    items_.reserve(item_lens.size());
    for (std::size_t len : item_lens) {
      if (len == 0) throw Error(ErrorCode::kInvalidInput, "mask item length must be >= 1");
      items_.push_back({offset, len});
      offset += len;
    }
    total_ = offset;
  }

  const Span& prompt_span() const { return prompt_; }
  const std::vector<Span>& item_spans() const { return items_; }
  std::size_t total_length() const { return total_; }

  std::vector<std::size_t> item_lens() const {
    std::vector<std::size_t> out;
    for (const auto& s : items_) out.push_back(s.length);
    return out;
  }

  // Index of the item holding `pos`, or nullopt for prompt positions.
  std::optional<std::size_t> item_of(std::size_t pos) const {
    if (pos < prompt_.length) return std::nullopt;
    std::size_t lo = 0, hi = items_.size();
    while (lo + 1 < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (items_[mid].offset <= pos) lo = mid;
      else hi = mid;
    }
    return lo;
  }

  bool allow(std::size_t query, std::size_t key) const {
    if (query >= total_ || key >= total_) return false;
    if (prompt_.contains(key)) return true;
    const auto qi = item_of(query);
    const auto ki = item_of(key);
    return qi && ki && *qi == *ki && key <= query;
  }

  // Row-major total_length() x total_length() boolean mask.
  std::vector<bool> dense() const {
    std::vector<bool> m(total_ * total_, false);
    for (std::size_t q = 0; q < total_; ++q) {
      for (std::size_t k = 0; k < total_; ++k) m[q * total_ + k] = allow(q, k);
    }
    return m;
  }

 private:
  Span prompt_;
  std::vector<Span> items_;
  std::size_t total_ = 0;
};

inline MaskLayout build_mask(std::size_t prompt_len, std::span<const std::size_t> item_lens) {
  return MaskLayout(prompt_len, item_lens);
}

}  // namespace speechbt::sched
