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

#include "lidarcam/calib_io.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "lidarcam/error.h"

namespace lidarcam::calib {

namespace {

using nlohmann::json;

json ParseJsonArray(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedFile, e.what());
  }
  if (!doc.is_array()) {
    throw Error(ErrorCode::kSchemaViolation, "top-level value is not an array");
  }
  return doc;
}

const json& RequireField(const json& obj, const char* name, std::size_t index) {
  const auto it = obj.find(name);
  if (it == obj.end()) {
    throw Error(ErrorCode::kSchemaViolation,
                std::string("missing field '") + name + "'",
                static_cast<std::int64_t>(index));
  }
  return *it;
}

double FiniteNumber(const json& value, const char* what, std::size_t index) {
  if (!value.is_number()) {
    throw Error(ErrorCode::kSchemaViolation,
                std::string("'") + what + "' must contain numbers",
                static_cast<std::int64_t>(index));
  }
  const double v = value.get<double>();
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::kNonFiniteValue,
                std::string("'") + what + "' contains a non-finite number",
                static_cast<std::int64_t>(index));
  }
  return v;
}

Eigen::Vector3d ParseTranslation(const json& obj, std::size_t index) {
  const json& t = RequireField(obj, "translation", index);
  if (!t.is_array() || t.size() != 3) {
    throw Error(ErrorCode::kSchemaViolation,
                "'translation' must be an array of 3 numbers",
                static_cast<std::int64_t>(index));
  }
  return {FiniteNumber(t[0], "translation", index),
          FiniteNumber(t[1], "translation", index),
          FiniteNumber(t[2], "translation", index)};
}

Eigen::Quaterniond ParseRotation(const json& obj, std::size_t index) {
  const json& r = RequireField(obj, "rotation", index);
  if (!r.is_array() || r.size() != 4) {
    throw Error(ErrorCode::kSchemaViolation,
                "'rotation' must be an array of 4 numbers (w, x, y, z)",
                static_cast<std::int64_t>(index));
  }
  Eigen::Quaterniond q(FiniteNumber(r[0], "rotation", index),
                       FiniteNumber(r[1], "rotation", index),
                       FiniteNumber(r[2], "rotation", index),
                       FiniteNumber(r[3], "rotation", index));
  const double norm = q.norm();
  if (!(std::abs(norm - 1.0) <= kQuaternionNormTolerance)) {
    std::ostringstream msg;
    msg << "quaternion norm " << norm << " deviates from 1 by more than "
        << kQuaternionNormTolerance;
    throw Error(ErrorCode::kBadQuaternion, msg.str(),
                static_cast<std::int64_t>(index));
  }
  // Already unit to double precision: keep the bits so files round-trip.
  if (std::abs(norm - 1.0) > 4 * std::numeric_limits<double>::epsilon()) q.normalize();
  return q;
}

std::optional<Eigen::Matrix3d> ParseIntrinsic(const json& obj,
                                              std::size_t index) {
  const auto it = obj.find("camera_intrinsic");
  if (it == obj.end() || it->is_null()) return std::nullopt;
  const json& k = *it;
  if (!k.is_array()) {
    throw Error(ErrorCode::kSchemaViolation,
                "'camera_intrinsic' must be a 3x3 nested array",
                static_cast<std::int64_t>(index));
  }
  // nuScenes writes [] for non-camera sensors.
  if (k.empty()) return std::nullopt;
  if (k.size() != 3) {
    throw Error(ErrorCode::kSchemaViolation,
                "'camera_intrinsic' must be a 3x3 nested array",
                static_cast<std::int64_t>(index));
  }
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    const json& row = k[r];
    if (!row.is_array() || row.size() != 3) {
      throw Error(ErrorCode::kSchemaViolation,
                  "'camera_intrinsic' must be a 3x3 nested array",
                  static_cast<std::int64_t>(index));
    }
    for (int c = 0; c < 3; ++c) {
      m(r, c) = FiniteNumber(row[c], "camera_intrinsic", index);
    }
  }
  if (!(m(0, 0) > 0.0) || !(m(1, 1) > 0.0) || m(2, 2) != 1.0 ||
      m(2, 0) != 0.0 || m(2, 1) != 0.0) {
    throw Error(ErrorCode::kBadIntrinsics,
                "intrinsic matrix needs fx, fy > 0 and last row (0, 0, 1)",
                static_cast<std::int64_t>(index));
  }
  return m;
}

json TranslationJson(const Eigen::Vector3d& t) {
  return json::array({t.x(), t.y(), t.z()});
}

json RotationJson(const Eigen::Quaterniond& q) {
  return json::array({q.w(), q.x(), q.y(), q.z()});
}

float ReadFloatLE(const std::uint8_t* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, sizeof(bits));
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap32(bits);
  }
  return std::bit_cast<float>(bits);
}

void WriteFloatLE(float value, std::uint8_t* p) {
  auto bits = std::bit_cast<std::uint32_t>(value);
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap32(bits);
  }
  std::memcpy(p, &bits, sizeof(bits));
}

}  // namespace

std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::uint8_t> ReadBinaryFile(const std::filesystem::path& path) {
  const std::string text = ReadTextFile(path);
  return {text.begin(), text.end()};
}

void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIoError,
                "cannot open '" + path.string() + "' for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorCode::kIoError, "write to '" + path.string() + "' failed");
  }
}

std::vector<CalibrationRecord> ParseCalibration(std::string_view json_text) {
  const json doc = ParseJsonArray(json_text);
  std::vector<CalibrationRecord> records;
  records.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& obj = doc[i];
    if (!obj.is_object()) {
      throw Error(ErrorCode::kSchemaViolation, "record is not an object",
                  static_cast<std::int64_t>(i));
    }
    const json& name = RequireField(obj, "sensor_name", i);
    if (!name.is_string()) {
      throw Error(ErrorCode::kSchemaViolation, "'sensor_name' must be a string",
                  static_cast<std::int64_t>(i));
    }
    CalibrationRecord record;
    record.sensor_name = name.get<std::string>();
    record.translation = ParseTranslation(obj, i);
    record.rotation = ParseRotation(obj, i);
    record.camera_intrinsic = ParseIntrinsic(obj, i);
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<CalibrationRecord> LoadCalibration(
    const std::filesystem::path& path) {
  return ParseCalibration(ReadTextFile(path));
}

std::string CalibrationToJson(std::span<const CalibrationRecord> records) {
  json doc = json::array();
  for (const auto& r : records) {
    json obj;
    obj["sensor_name"] = r.sensor_name;
    obj["translation"] = TranslationJson(r.translation);
    obj["rotation"] = RotationJson(r.rotation);
    json k = json::array();
    if (r.camera_intrinsic) {
      for (int row = 0; row < 3; ++row) {
        k.push_back(json::array({(*r.camera_intrinsic)(row, 0),
                                 (*r.camera_intrinsic)(row, 1),
                                 (*r.camera_intrinsic)(row, 2)}));
      }
    }
    obj["camera_intrinsic"] = std::move(k);
    doc.push_back(std::move(obj));
  }
  return doc.dump(2) + "\n";
}

void WriteCalibration(const std::filesystem::path& path,
                      std::span<const CalibrationRecord> records) {
  WriteFileBytes(path, CalibrationToJson(records));
}

std::vector<EgoPoseRecord> ParseEgoPoses(std::string_view json_text) {
  const json doc = ParseJsonArray(json_text);
  std::vector<EgoPoseRecord> poses;
  poses.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& obj = doc[i];
    if (!obj.is_object()) {
      throw Error(ErrorCode::kSchemaViolation, "record is not an object",
                  static_cast<std::int64_t>(i));
    }
    const json& ts = RequireField(obj, "timestamp", i);
    if (!ts.is_number_integer() ||
        (ts.is_number_unsigned() &&
         ts.get<std::uint64_t>() >
             static_cast<std::uint64_t>(
                 std::numeric_limits<std::int64_t>::max()))) {
      throw Error(ErrorCode::kSchemaViolation,
                  "'timestamp' must be an integer number of microseconds",
                  static_cast<std::int64_t>(i));
    }
    EgoPoseRecord pose;
    pose.timestamp = ts.get<std::int64_t>();
    pose.translation = ParseTranslation(obj, i);
    pose.rotation = ParseRotation(obj, i);
    if (!poses.empty() && pose.timestamp <= poses.back().timestamp) {
      std::ostringstream msg;
      msg << "timestamp " << pose.timestamp << " at record " << i
          << " does not follow " << poses.back().timestamp << " at record "
          << i - 1;
      throw Error(ErrorCode::kNonMonotonicTimestamps, msg.str(),
                  static_cast<std::int64_t>(i));
    }
    poses.push_back(pose);
  }
  return poses;
}

std::vector<EgoPoseRecord> LoadEgoPoses(const std::filesystem::path& path) {
  return ParseEgoPoses(ReadTextFile(path));
}

std::string EgoPosesToJson(std::span<const EgoPoseRecord> poses) {
  json doc = json::array();
  for (const auto& p : poses) {
    json obj;
    obj["timestamp"] = p.timestamp;
    obj["translation"] = TranslationJson(p.translation);
    obj["rotation"] = RotationJson(p.rotation);
    doc.push_back(std::move(obj));
  }
  return doc.dump(2) + "\n";
}

void WriteEgoPoses(const std::filesystem::path& path,
                   std::span<const EgoPoseRecord> poses) {
  WriteFileBytes(path, EgoPosesToJson(poses));
}

PointCloud DecodePointCloud(std::span<const std::uint8_t> bytes,
                            std::string frame, std::int64_t timestamp) {
  if (bytes.size() % kPointRecordBytes != 0) {
    std::ostringstream msg;
    msg << "size " << bytes.size() << " is not a multiple of "
        << kPointRecordBytes << " bytes";
    throw Error(ErrorCode::kTruncatedFile, msg.str());
  }
  PointCloud cloud;
  cloud.frame = std::move(frame);
  cloud.timestamp = timestamp;
  const std::size_t n = bytes.size() / kPointRecordBytes;
  cloud.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kPointRecordBytes;
    const float x = ReadFloatLE(rec);
    const float y = ReadFloatLE(rec + 4);
    const float z = ReadFloatLE(rec + 8);
    const float intensity = ReadFloatLE(rec + 12);
    const float ring = ReadFloatLE(rec + 16);
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) ||
        !std::isfinite(intensity) || !std::isfinite(ring)) {
      throw Error(ErrorCode::kNonFiniteValue, "non-finite value in point",
                  static_cast<std::int64_t>(i));
    }
    if (intensity < 0.0f || intensity > 255.0f) {
      throw Error(ErrorCode::kSchemaViolation,
                  "intensity outside [0, 255]", static_cast<std::int64_t>(i));
    }
    if (ring < 0.0f || ring > 65535.0f || ring != std::floor(ring)) {
      throw Error(ErrorCode::kSchemaViolation,
                  "ring must be a non-negative integer below 65536",
                  static_cast<std::int64_t>(i));
    }
    cloud.points[i] = {x, y, z, intensity, static_cast<std::uint16_t>(ring)};
  }
  return cloud;
}

PointCloud LoadPointCloudBin(const std::filesystem::path& path,
                             std::string frame, std::int64_t timestamp) {
  const auto bytes = ReadBinaryFile(path);
  return DecodePointCloud(bytes, std::move(frame), timestamp);
}

std::vector<std::uint8_t> EncodePointCloud(const PointCloud& cloud) {
  std::vector<std::uint8_t> bytes(cloud.points.size() * kPointRecordBytes);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const LidarPoint& p = cloud.points[i];
    std::uint8_t* rec = bytes.data() + i * kPointRecordBytes;
    WriteFloatLE(p.x, rec);
    WriteFloatLE(p.y, rec + 4);
    WriteFloatLE(p.z, rec + 8);
    WriteFloatLE(p.intensity, rec + 12);
    WriteFloatLE(static_cast<float>(p.ring), rec + 16);
  }
  return bytes;
}

void WritePointCloudBin(const std::filesystem::path& path,
                        const PointCloud& cloud) {
  const auto bytes = EncodePointCloud(cloud);
  WriteFileBytes(path, std::string_view(
                           reinterpret_cast<const char*>(bytes.data()),
                           bytes.size()));
}

const CalibrationRecord* FindSensor(std::span<const CalibrationRecord> records,
                                    std::string_view sensor_name) {
  for (const auto& r : records) {
    if (r.sensor_name == sensor_name) return &r;
  }
  return nullptr;
}

}  // namespace lidarcam::calib
