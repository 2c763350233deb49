// Copyright 2026 The structground Authors.
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

#include "structground/error.hpp"

namespace structground {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidBox: return "InvalidBox";
    case ErrorCode::kEmptyCaption: return "EmptyCaption";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kEmptySubject: return "EmptySubject";
    case ErrorCode::kLlmUnavailable: return "LlmUnavailable";
    case ErrorCode::kReplayMiss: return "ReplayMiss";
    case ErrorCode::kEmptyScene: return "EmptyScene";
    case ErrorCode::kAllFiltered: return "AllFiltered";
    case ErrorCode::kBackendUnavailable: return "BackendUnavailable";
    case ErrorCode::kInvalidRegion: return "InvalidRegion";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kNonPositiveSimilarity: return "NonPositiveSimilarity";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kValidationError: return "ValidationError";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace structground
