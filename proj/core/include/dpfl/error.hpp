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
#ifndef DPFL_ERROR_HPP_
#define DPFL_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace dpfl {

// Every failure surfaced by the library carries one of these codes so callers
// (and the CLI's exit-code mapping) can branch without parsing messages.
enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kUnknownArchitecture,
  kBadMagic,
  kTruncatedFile,
  kCountMismatch,
  kMissingColumn,
  kNonNumericCell,
  kEmptyInput,
  kInsufficientData,
  kOutOfRange,
  kNumericFailure,
  kConfig,
  kIo,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Throws Error(code, message) when `condition` is false.
inline void Require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace dpfl

#endif  // DPFL_ERROR_HPP_
