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

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "speechbt/core/error.hpp"

namespace speechbt::sched {

inline constexpr double kDefaultSegmentBudget = 30.0;

struct ClipDuration {
  std::string clip_id;
  double duration_s = 0.0;
};

struct PackedSegment {
  std::string segment_id;
  std::vector<std::string> clip_ids;
  double total_duration_s = 0.0;
};

// Next-fit in input order: a new segment starts whenever the next clip would
// push the current one past the budget.
inline std::vector<PackedSegment> pack_segments(const std::vector<ClipDuration>& clips,
                                                double budget_s = kDefaultSegmentBudget,
                                                const std::string& id_prefix = "seg") {
  std::vector<PackedSegment> out;
  for (const auto& c : clips) {
    if (c.duration_s > budget_s) throw Error(ErrorCode::kClipTooLong, c.clip_id);
    if (!(c.duration_s > 0.0)) throw Error(ErrorCode::kInvalidInput, "non-positive duration for " + c.clip_id);
    if (out.empty() || out.back().total_duration_s + c.duration_s > budget_s) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "-%06zu", out.size());
      out.push_back({id_prefix + buf, {}, 0.0});
    }
    out.back().clip_ids.push_back(c.clip_id);
    out.back().total_duration_s += c.duration_s;
  }
  return out;
}

}  // namespace speechbt::sched
