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

#ifndef LIDARCAM_CALIB_IO_H_
#define LIDARCAM_CALIB_IO_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace lidarcam::calib {

// Quaternions are stored w-first (w, x, y, z) on disk. A raw norm within
// kQuaternionNormTolerance of 1 is normalized on ingest; anything further
// off is treated as corruption.
inline constexpr double kQuaternionNormTolerance = 1e-3;

// Static sensor-to-ego extrinsics for one sensor. Cameras additionally carry
// the 3x3 pinhole matrix.
struct CalibrationRecord {
  std::string sensor_name;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  std::optional<Eigen::Matrix3d> camera_intrinsic;
};

// Pose of the ego vehicle in the global frame at `timestamp` (microseconds).
struct EgoPoseRecord {
  std::int64_t timestamp = 0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
};

struct LidarPoint {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  float intensity = 0.0f;
  std::uint16_t ring = 0;

  friend bool operator==(const LidarPoint&, const LidarPoint&) = default;
};

struct PointCloud {
  std::vector<LidarPoint> points;
  std::string frame = "LIDAR_TOP";
  // Sweep reference time, microseconds.
  std::int64_t timestamp = 0;
};

inline constexpr std::size_t kPointRecordBytes = 20;

// Calibration JSON: an array of
//   {"sensor_name": str, "translation": [x,y,z], "rotation": [w,x,y,z],
//    "camera_intrinsic": [[..],[..],[..]] | [] | absent}
// Unknown fields are ignored so nuScenes records can be fed in directly.
std::vector<CalibrationRecord> ParseCalibration(std::string_view json_text);
std::vector<CalibrationRecord> LoadCalibration(
    const std::filesystem::path& path);
std::string CalibrationToJson(std::span<const CalibrationRecord> records);
void WriteCalibration(const std::filesystem::path& path,
                      std::span<const CalibrationRecord> records);

// Ego pose JSON: an array of
//   {"timestamp": int, "translation": [x,y,z], "rotation": [w,x,y,z]}
// with strictly increasing timestamps.
std::vector<EgoPoseRecord> ParseEgoPoses(std::string_view json_text);
std::vector<EgoPoseRecord> LoadEgoPoses(const std::filesystem::path& path);
std::string EgoPosesToJson(std::span<const EgoPoseRecord> poses);
void WriteEgoPoses(const std::filesystem::path& path,
                   std::span<const EgoPoseRecord> poses);

// Point cloud binary: headerless little-endian float32 records
// (x, y, z, intensity, ring), 20 bytes each.
PointCloud DecodePointCloud(std::span<const std::uint8_t> bytes,
                            std::string frame = "LIDAR_TOP",
                            std::int64_t timestamp = 0);
PointCloud LoadPointCloudBin(const std::filesystem::path& path,
                             std::string frame = "LIDAR_TOP",
                             std::int64_t timestamp = 0);
std::vector<std::uint8_t> EncodePointCloud(const PointCloud& cloud);
void WritePointCloudBin(const std::filesystem::path& path,
                        const PointCloud& cloud);

// Returns nullptr when no record carries `sensor_name`.
const CalibrationRecord* FindSensor(std::span<const CalibrationRecord> records,
                                    std::string_view sensor_name);

// File helpers shared with the other modules. Both throw kIoError.
std::string ReadTextFile(const std::filesystem::path& path);
std::vector<std::uint8_t> ReadBinaryFile(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace lidarcam::calib

#endif  // LIDARCAM_CALIB_IO_H_
