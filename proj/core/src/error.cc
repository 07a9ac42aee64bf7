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

#include "lidarcam/error.h"

#include <utility>

namespace lidarcam {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kMalformedFile: return "MalformedFile";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kBadQuaternion: return "BadQuaternion";
    case ErrorCode::kBadIntrinsics: return "BadIntrinsics";
    case ErrorCode::kNonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kTimestampOutOfRange: return "TimestampOutOfRange";
    case ErrorCode::kUnknownSensor: return "UnknownSensor";
    case ErrorCode::kEmptyScene: return "EmptyScene";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNoForwardState: return "NoForwardState";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kIndexMismatch: return "IndexMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

namespace {

std::string FormatMessage(ErrorCode code, const std::string& message,
                          const std::optional<std::int64_t>& index) {
  std::string out(ErrorCodeName(code));
  if (index.has_value()) {
    out += " [index " + std::to_string(*index) + "]";
  }
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, std::string message,
             std::optional<std::int64_t> index)
    : std::runtime_error(FormatMessage(code, message, index)),
      code_(code),
      index_(std::move(index)) {}

}  // namespace lidarcam
