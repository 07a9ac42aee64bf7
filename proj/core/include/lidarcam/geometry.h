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

#ifndef LIDARCAM_GEOMETRY_H_
#define LIDARCAM_GEOMETRY_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "lidarcam/calib_io.h"

namespace lidarcam::geometry {

// Camera-frame z at or below this depth counts as behind the camera.
inline constexpr double kDepthEpsilon = 1e-6;

// Proper rigid motion x -> R x + t, with R held as a unit quaternion.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Eigen::Quaterniond& rotation,
                 const Eigen::Vector3d& translation);

  static RigidTransform Identity() { return {}; }
  static RigidTransform FromTranslation(const Eigen::Vector3d& t) {
    return {Eigen::Quaterniond::Identity(), t};
  }
  static RigidTransform FromRotation(const Eigen::Quaterniond& q) {
    return {q, Eigen::Vector3d::Zero()};
  }

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Vector3d Apply(const Eigen::Vector3d& p) const {
    return rotation_ * p + translation_;
  }
  Eigen::Matrix4d ToMatrix() const;

 private:
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

// Applies b first, then a.
RigidTransform Compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform Invert(const RigidTransform& t);

inline RigidTransform operator*(const RigidTransform& a,
                                const RigidTransform& b) {
  return Compose(a, b);
}

RigidTransform FromCalibration(const calib::CalibrationRecord& record);
RigidTransform FromEgoPose(const calib::EgoPoseRecord& pose);

// Pose of the ego vehicle (ego -> global) at time t: linear interpolation of
// translation, shortest-arc slerp of rotation between the bracketing records.
// Throws kTimestampOutOfRange outside the log.
RigidTransform InterpolatePose(std::span<const calib::EgoPoseRecord> poses,
                               std::int64_t t);

// LiDAR frame at t_lidar -> camera frame at t_camera:
//   T_cam<-ego * T_ego(t_camera)<-global * T_global<-ego(t_lidar) * T_ego<-lidar
RigidTransform BuildChain(std::span<const calib::CalibrationRecord> calib,
                          std::span<const calib::EgoPoseRecord> poses,
                          std::int64_t t_lidar, std::int64_t t_camera,
                          std::string_view camera, std::string_view lidar);

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  // Throws kBadIntrinsics when fx/fy are not positive or the image is empty.
  static CameraIntrinsics FromMatrix(const Eigen::Matrix3d& k, int width,
                                     int height);
  void Validate() const;
  // [[fx, 0, cx, 0], [0, fy, cy, 0], [0, 0, 1, 0]]
  Eigen::Matrix<double, 3, 4> ToMatrix3x4() const;
};

enum class ProjectionStatus { kValid, kBehindCamera, kOutOfBounds };

std::string_view ProjectionStatusName(ProjectionStatus status);

struct ProjectedPoint {
  std::size_t source_index = 0;
  double u = 0.0;
  double v = 0.0;
  // Camera-frame z, meters.
  double depth = 0.0;
  ProjectionStatus status = ProjectionStatus::kValid;
};

// u, v are NaN for points behind the camera.
ProjectedPoint ProjectPoint(const Eigen::Vector3d& camera_point,
                            const CameraIntrinsics& k,
                            std::size_t source_index);

std::vector<ProjectedPoint> Project(const calib::PointCloud& cloud,
                                    const RigidTransform& lidar_to_camera,
                                    const CameraIntrinsics& k,
                                    int threads = 1);

struct DepthSample {
  std::size_t source_index = 0;
  double depth = 0.0;
};

// Pixel (i, j) covers [i, i+1) x [j, j+1). Each occupied pixel holds the
// nearest Valid point; equal depths go to the smaller source index.
class DepthImage {
 public:
  DepthImage(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  const std::optional<DepthSample>& at(int x, int y) const {
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }
  // Keeps the sample if it beats the current occupant.
  void Offer(int x, int y, const DepthSample& sample);
  void MergeFrom(const DepthImage& other);
  std::size_t OccupiedCount() const;

 private:
  int width_;
  int height_;
  std::vector<std::optional<DepthSample>> pixels_;
};

DepthImage Rasterize(std::span<const ProjectedPoint> projected, int width,
                     int height, int threads = 1);

}  // namespace lidarcam::geometry

#endif  // LIDARCAM_GEOMETRY_H_
