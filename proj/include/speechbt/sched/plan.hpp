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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/core/error.hpp"

namespace speechbt::sched {

inline constexpr const char* kPlanSchema = "speechbt.plan.v1";

enum class ResourceTier { kHigh, kMid, kLow };
enum class BudgetPolicy { kUniform, kWeighted };

inline std::string_view tier_name(ResourceTier t) {
  switch (t) {
    case ResourceTier::kHigh: return "high";
    case ResourceTier::kMid: return "mid";
    case ResourceTier::kLow: return "low";
  }
  return "?";
}

inline std::string_view policy_name(BudgetPolicy p) { return p == BudgetPolicy::kUniform ? "uniform" : "weighted"; }

inline BudgetPolicy parse_policy(std::string_view s) {
  if (s == "uniform") return BudgetPolicy::kUniform;
  if (s == "weighted") return BudgetPolicy::kWeighted;
  throw Error(ErrorCode::kConfigError, "unknown budget policy '" + std::string(s) + "'");
}

struct TierThresholds {
  double high_min_hours = 10000.0;
  double low_max_hours = 1000.0;
};

// Tiering keys off a reference availability figure (for instance the hours a
// base ASR model saw per language), not off the local real-data hours.
inline ResourceTier classify_tier(double reference_hours, const TierThresholds& t = {}) {
  if (reference_hours >= t.high_min_hours) return ResourceTier::kHigh;
  if (reference_hours <= t.low_max_hours) return ResourceTier::kLow;
  return ResourceTier::kMid;
}

struct LanguageInput {
  std::string language;
  double real_hours = 0.0;
  double weight = 1.0;
  std::optional<double> reference_hours;
};

struct LanguagePlan {
  std::string language;
  double real_hours = 0.0;
  double target_synth_hours = 0.0;
  ResourceTier resource_tier = ResourceTier::kLow;

  friend bool operator==(const LanguagePlan&, const LanguagePlan&) = default;
};

inline std::vector<LanguagePlan> plan_budgets(const std::vector<LanguageInput>& languages, double total_synth_hours,
                                              BudgetPolicy policy, const TierThresholds& tiers = {}) {
  if (languages.empty()) throw Error(ErrorCode::kEmptyLanguageList, "no languages to plan");
  if (!(total_synth_hours > 0.0)) throw Error(ErrorCode::kInvalidInput, "total synthetic hours must be positive");

  double weight_sum = 0.0;
  for (const auto& l : languages) {
    if (l.weight < 0.0) throw Error(ErrorCode::kInvalidInput, "negative weight for " + l.language);
    weight_sum += l.weight;
  }
  if (policy == BudgetPolicy::kWeighted && !(weight_sum > 0.0)) {
    throw Error(ErrorCode::kZeroWeightSum, "weights sum to zero");
  }

  std::vector<LanguagePlan> out;
  out.reserve(languages.size());
  for (const auto& l : languages) {
    LanguagePlan p;
    p.language = l.language;
    p.real_hours = l.real_hours;
    p.target_synth_hours = policy == BudgetPolicy::kUniform
                               ? total_synth_hours / static_cast<double>(languages.size())
                               : total_synth_hours * l.weight / weight_sum;
    p.resource_tier = classify_tier(l.reference_hours.value_or(l.real_hours), tiers);
    out.push_back(std::move(p));
  }
  return out;
}

inline nlohmann::json plan_to_json(const std::vector<LanguagePlan>& plans, BudgetPolicy policy, double total) {
  nlohmann::json langs = nlohmann::json::array();
  for (const auto& p : plans) {
    langs.push_back({{"language", p.language},
                     {"real_hours", p.real_hours},
                     {"target_synth_hours", p.target_synth_hours},
                     {"resource_tier", tier_name(p.resource_tier)}});
  }
  return {{"schema", kPlanSchema}, {"policy", policy_name(policy)}, {"total_synth_hours", total}, {"languages", langs}};
}

inline std::vector<LanguagePlan> plan_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kPlanSchema) throw Error(ErrorCode::kInvalidInput, "not a speechbt.plan.v1 document");
  std::vector<LanguagePlan> out;
  for (const auto& l : j.at("languages")) {
    LanguagePlan p;
    p.language = l.at("language").get<std::string>();
    p.real_hours = l.at("real_hours").get<double>();
    p.target_synth_hours = l.at("target_synth_hours").get<double>();
    const auto tier = l.at("resource_tier").get<std::string>();
    p.resource_tier = tier == "high" ? ResourceTier::kHigh : tier == "mid" ? ResourceTier::kMid : ResourceTier::kLow;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace speechbt::sched
