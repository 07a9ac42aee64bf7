/*
 * Copyright 2026 The lidarcam Authors
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

#ifndef LIDARCAM_ERROR_H_
#define LIDARCAM_ERROR_H_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lidarcam {

enum class ErrorCode {
  kIoError,
  kMalformedFile,
  kSchemaViolation,
  kBadQuaternion,
  kBadIntrinsics,
  kNonMonotonicTimestamps,
  kTruncatedFile,
  kNonFiniteValue,
  kTimestampOutOfRange,
  kUnknownSensor,
  kEmptyScene,
  kShapeMismatch,
  kNoForwardState,
  kDivergedLoss,
  kIndexMismatch,
  kInvalidArgument,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every recoverable failure in the library is reported as an Error. `index`
// names the offending record, point or pose when one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message,
        std::optional<std::int64_t> index = std::nullopt);

  ErrorCode code() const { return code_; }
  const std::optional<std::int64_t>& index() const { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::int64_t> index_;
};

}  // namespace lidarcam

#endif  // LIDARCAM_ERROR_H_
