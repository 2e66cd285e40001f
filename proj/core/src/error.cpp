/*
 * Copyright 2026 The dpfl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "dpfl/error.hpp"

namespace dpfl {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kUnknownArchitecture: return "unknown_architecture";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kTruncatedFile: return "truncated_file";
    case ErrorCode::kCountMismatch: return "count_mismatch";
    case ErrorCode::kMissingColumn: return "missing_column";
    case ErrorCode::kNonNumericCell: return "non_numeric_cell";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kInsufficientData: return "insufficient_data";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kNumericFailure: return "numeric_failure";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
      code_(code) {}

}  // namespace dpfl
