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

#include <stdexcept>
#include <string>
#include <string_view>

namespace speechbt {

enum class ErrorCode {
  kEmptyReference,
  kDegenerateBaseline,
  kDimensionMismatch,
  kZeroNorm,
  kInsufficientPool,
  kEmptyLanguageList,
  kZeroWeightSum,
  kClipTooLong,
  kProtocolError,
  kTimeout,
  kUnknownAudioRef,
  kAllWorkersFailed,
  kBatchFailed,
  kConfigError,
  kMissingRunData,
  kInvalidInput,
  kIo,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyReference: return "EmptyReference";
    case ErrorCode::kDegenerateBaseline: return "DegenerateBaseline";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kZeroNorm: return "ZeroNorm";
    case ErrorCode::kInsufficientPool: return "InsufficientPool";
    case ErrorCode::kEmptyLanguageList: return "EmptyLanguageList";
    case ErrorCode::kZeroWeightSum: return "ZeroWeightSum";
    case ErrorCode::kClipTooLong: return "ClipTooLong";
    case ErrorCode::kProtocolError: return "ProtocolError";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kUnknownAudioRef: return "UnknownAudioRef";
    case ErrorCode::kAllWorkersFailed: return "AllWorkersFailed";
    case ErrorCode::kBatchFailed: return "BatchFailed";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kMissingRunData: return "MissingRunData";
    case ErrorCode::kInvalidInput: return "InvalidInput";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

// Every failure raised by the library carries a machine-readable code so the
// CLI can map it onto an exit status and an error report.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace speechbt
