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
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechbt/core/error.hpp"
#include "speechbt/metrics/alignment.hpp"
#include "speechbt/metrics/normalize.hpp"

namespace speechbt::metrics {

inline constexpr double kDefaultGateThreshold = 0.01;
inline constexpr const char* kReportSchema = "speechbt.report.v1";

// exp((wer_real - wer_synthetic) / wer_real). Depends only on the ratio of the
// two rates; lies in (0, e] and reaches e only for a perfect synthetic WER.
inline double normalized_intelligibility(double wer_real, double wer_synthetic) {
  if (!(wer_real > 0.0) || !std::isfinite(wer_real)) {
    throw Error(ErrorCode::kDegenerateBaseline, "real-speech WER must be positive, got " + std::to_string(wer_real));
  }
  if (!(wer_synthetic >= 0.0)) {
    throw Error(ErrorCode::kInvalidInput, "synthetic WER must be non-negative");
  }
  return std::exp((wer_real - wer_synthetic) / wer_real);
}

struct IntelligibilityReport {
  std::string language;
  double wer_real = 0.0;
  double wer_synthetic = 0.0;
  double norm_i = 0.0;
  double gate_threshold = kDefaultGateThreshold;
  bool accepted = false;
  std::string judge_id;
  std::size_t sample_count = 0;

  friend bool operator==(const IntelligibilityReport&, const IntelligibilityReport&) = default;
};

inline nlohmann::json to_json(const IntelligibilityReport& r) {
  return nlohmann::json{{"schema", kReportSchema},
                        {"language", r.language},
                        {"wer_real", r.wer_real},
                        {"wer_synthetic", r.wer_synthetic},
                        {"norm_i", r.norm_i},
                        {"gate_threshold", r.gate_threshold},
                        {"accepted", r.accepted},
                        {"judge_id", r.judge_id},
                        {"sample_count", r.sample_count}};
}

inline IntelligibilityReport report_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kReportSchema) throw Error(ErrorCode::kInvalidInput, "not a speechbt.report.v1 object");
  IntelligibilityReport r;
  r.language = j.at("language").get<std::string>();
  r.wer_real = j.at("wer_real").get<double>();
  r.wer_synthetic = j.at("wer_synthetic").get<double>();
  r.norm_i = j.at("norm_i").get<double>();
  r.gate_threshold = j.at("gate_threshold").get<double>();
  r.accepted = j.at("accepted").get<bool>();
  r.judge_id = j.at("judge_id").get<std::string>();
  r.sample_count = j.at("sample_count").get<std::size_t>();
  return r;
}

struct GateInputs {
  std::string language;
  std::vector<TextPair> real_pairs;
  std::vector<TextPair> synthetic_pairs;
  std::string judge_id;
};

struct GateOptions {
  double threshold = kDefaultGateThreshold;
  // When set, a zero real-speech WER is replaced by this floor instead of
  // raising DegenerateBaseline. The report then carries the floor as wer_real.
  std::optional<double> degenerate_floor;
};

// Gate decision when the real-speech WER is already known (for instance
// measured once on a held-out real set and stored with the run config).
inline IntelligibilityReport gate_with_baseline(const std::string& language, double wer_real,
                                                const std::vector<TextPair>& synthetic_pairs,
                                                const std::string& judge_id, const GateOptions& opts = {}) {
  if (synthetic_pairs.empty()) throw Error(ErrorCode::kEmptyReference, "gate needs a non-empty synthetic evaluation set");
  for (const auto& p : synthetic_pairs) {
    if (primary_language(p.first.language) != primary_language(language)) {
      throw Error(ErrorCode::kInvalidInput, "evaluation pair language differs from gate language");
    }
  }
  IntelligibilityReport r;
  r.language = language;
  r.wer_real = wer_real;
  r.wer_synthetic = corpus_error_rate(synthetic_pairs);
  if (r.wer_real == 0.0 && opts.degenerate_floor) r.wer_real = *opts.degenerate_floor;
  r.norm_i = normalized_intelligibility(r.wer_real, r.wer_synthetic);
  r.gate_threshold = opts.threshold;
  r.accepted = r.norm_i >= opts.threshold;
  r.judge_id = judge_id;
  r.sample_count = synthetic_pairs.size();
  return r;
}

inline IntelligibilityReport gate_checkpoint(const GateInputs& in, const GateOptions& opts = {}) {
  if (in.real_pairs.empty() || in.synthetic_pairs.empty()) {
    throw Error(ErrorCode::kEmptyReference, "gate needs non-empty real and synthetic evaluation sets");
  }
  for (const auto& p : in.real_pairs) {
    if (primary_language(p.first.language) != primary_language(in.language)) {
      throw Error(ErrorCode::kInvalidInput, "evaluation pair language differs from gate language");
    }
  }
  return gate_with_baseline(in.language, corpus_error_rate(in.real_pairs), in.synthetic_pairs, in.judge_id, opts);
}

// Convenience for raw (reference, hypothesis) strings.
inline std::vector<TextPair> normalize_pairs(std::span<const std::pair<std::string, std::string>> raw,
                                             std::string_view language, const NormalizerConfig& config = {}) {
  std::vector<TextPair> out;
  out.reserve(raw.size());
  for (const auto& [ref, hyp] : raw) {
    out.emplace_back(normalize_text(ref, language, config), normalize_text(hyp, language, config));
  }
  return out;
}

}  // namespace speechbt::metrics
