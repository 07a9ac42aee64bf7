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

#include "lidarcam/geometry.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lidarcam/error.h"
#include "lidarcam/parallel.h"

namespace lidarcam::geometry {

RigidTransform::RigidTransform(const Eigen::Quaterniond& rotation,
                               const Eigen::Vector3d& translation)
    : rotation_(rotation.normalized()), translation_(translation) {}

Eigen::Matrix4d RigidTransform::ToMatrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_.toRotationMatrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform Compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation() * b.rotation(),
          a.rotation() * b.translation() + a.translation()};
}

RigidTransform Invert(const RigidTransform& t) {
  const Eigen::Quaterniond inverse = t.rotation().conjugate();
  return {inverse, -(inverse * t.translation())};
}

RigidTransform FromCalibration(const calib::CalibrationRecord& record) {
  return {record.rotation, record.translation};
}

RigidTransform FromEgoPose(const calib::EgoPoseRecord& pose) {
  return {pose.rotation, pose.translation};
}

RigidTransform InterpolatePose(std::span<const calib::EgoPoseRecord> poses,
                               std::int64_t t) {
  if (poses.empty() || t < poses.front().timestamp ||
      t > poses.back().timestamp) {
    std::ostringstream msg;
    msg << "timestamp " << t << " outside pose log";
    if (!poses.empty()) {
      msg << " [" << poses.front().timestamp << ", " << poses.back().timestamp
          << "]";
    } else {
      msg << " (empty)";
    }
    throw Error(ErrorCode::kTimestampOutOfRange, msg.str());
  }
  const auto after = std::lower_bound(
      poses.begin(), poses.end(), t,
      [](const calib::EgoPoseRecord& p, std::int64_t time) {
        return p.timestamp < time;
      });
  if (after->timestamp == t) return FromEgoPose(*after);
  const auto before = std::prev(after);
  const double factor = static_cast<double>(t - before->timestamp) /
                        static_cast<double>(after->timestamp - before->timestamp);
  const Eigen::Vector3d origin =
      before->translation + (after->translation - before->translation) * factor;
  // Eigen's slerp flips the sign of the second quaternion when needed, so
  // this is always the shortest arc.
  const Eigen::Quaterniond rotation =
      before->rotation.slerp(factor, after->rotation);
  return {rotation, origin};
}

RigidTransform BuildChain(std::span<const calib::CalibrationRecord> calib,
                          std::span<const calib::EgoPoseRecord> poses,
                          std::int64_t t_lidar, std::int64_t t_camera,
                          std::string_view camera, std::string_view lidar) {
  const auto* camera_record = calib::FindSensor(calib, camera);
  if (camera_record == nullptr) {
    throw Error(ErrorCode::kUnknownSensor,
                "no calibration for sensor '" + std::string(camera) + "'");
  }
  const auto* lidar_record = calib::FindSensor(calib, lidar);
  if (lidar_record == nullptr) {
    throw Error(ErrorCode::kUnknownSensor,
                "no calibration for sensor '" + std::string(lidar) + "'");
  }
  const RigidTransform camera_from_ego =
      Invert(FromCalibration(*camera_record));
  const RigidTransform ego_camera_from_global =
      Invert(InterpolatePose(poses, t_camera));
  const RigidTransform global_from_ego_lidar = InterpolatePose(poses, t_lidar);
  const RigidTransform ego_from_lidar = FromCalibration(*lidar_record);
  return camera_from_ego * ego_camera_from_global * global_from_ego_lidar *
         ego_from_lidar;
}

CameraIntrinsics CameraIntrinsics::FromMatrix(const Eigen::Matrix3d& k,
                                              int width, int height) {
  CameraIntrinsics intrinsics{k(0, 0), k(1, 1), k(0, 2), k(1, 2), width,
                              height};
  intrinsics.Validate();
  return intrinsics;
}

void CameraIntrinsics::Validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) ||
      !std::isfinite(fy) || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw Error(ErrorCode::kBadIntrinsics,
                "focal lengths must be positive and all entries finite");
  }
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kBadIntrinsics, "image size must be at least 1x1");
  }
}

Eigen::Matrix<double, 3, 4> CameraIntrinsics::ToMatrix3x4() const {
  Eigen::Matrix<double, 3, 4> k = Eigen::Matrix<double, 3, 4>::Zero();
  k(0, 0) = fx;
  k(0, 2) = cx;
  k(1, 1) = fy;
  k(1, 2) = cy;
  k(2, 2) = 1.0;
  return k;
}

std::string_view ProjectionStatusName(ProjectionStatus status) {
  switch (status) {
    case ProjectionStatus::kValid: return "valid";
    case ProjectionStatus::kBehindCamera: return "behind_camera";
    case ProjectionStatus::kOutOfBounds: return "out_of_bounds";
  }
  return "unknown";
}

ProjectedPoint ProjectPoint(const Eigen::Vector3d& camera_point,
                            const CameraIntrinsics& k,
                            std::size_t source_index) {
  ProjectedPoint out;
  out.source_index = source_index;
  out.depth = camera_point.z();
  if (!(camera_point.z() > kDepthEpsilon)) {
    out.u = std::numeric_limits<double>::quiet_NaN();
    out.v = std::numeric_limits<double>::quiet_NaN();
    out.status = ProjectionStatus::kBehindCamera;
    return out;
  }
  out.u = k.fx * camera_point.x() / camera_point.z() + k.cx;
  out.v = k.fy * camera_point.y() / camera_point.z() + k.cy;
  const bool inside = out.u >= 0.0 && out.u < k.width && out.v >= 0.0 &&
                      out.v < k.height;
  out.status = inside ? ProjectionStatus::kValid : ProjectionStatus::kOutOfBounds;
  return out;
}

std::vector<ProjectedPoint> Project(const calib::PointCloud& cloud,
                                    const RigidTransform& lidar_to_camera,
                                    const CameraIntrinsics& k, int threads) {
  std::vector<ProjectedPoint> out(cloud.points.size());
  ParallelForBlocks(
      cloud.points.size(), 4096, threads,
      [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          const auto& p = cloud.points[i];
          const Eigen::Vector3d camera_point =
              lidar_to_camera.Apply(Eigen::Vector3d(p.x, p.y, p.z));
          out[i] = ProjectPoint(camera_point, k, i);
        }
      });
  return out;
}

DepthImage::DepthImage(int width, int height)
    : width_(width),
      height_(height),
      pixels_(static_cast<std::size_t>(std::max(width, 0)) *
              static_cast<std::size_t>(std::max(height, 0))) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "depth image needs at least one pixel");
  }
}

void DepthImage::Offer(int x, int y, const DepthSample& sample) {
  auto& slot = pixels_[static_cast<std::size_t>(y) * width_ + x];
  if (!slot || sample.depth < slot->depth ||
      (sample.depth == slot->depth && sample.source_index < slot->source_index)) {
    slot = sample;
  }
}

void DepthImage::MergeFrom(const DepthImage& other) {
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (const auto& s = other.at(x, y)) Offer(x, y, *s);
    }
  }
}

std::size_t DepthImage::OccupiedCount() const {
  return static_cast<std::size_t>(
      std::count_if(pixels_.begin(), pixels_.end(),
                    [](const auto& p) { return p.has_value(); }));
}

DepthImage Rasterize(std::span<const ProjectedPoint> projected, int width,
                     int height, int threads) {
  // Only points landing in rows [row_begin, row_end) are offered.
  auto rasterize_rows = [&](DepthImage& image, int row_begin, int row_end) {
    for (const ProjectedPoint& p : projected) {
      if (p.status != ProjectionStatus::kValid) continue;
      const int x = static_cast<int>(std::floor(p.u));
      const int y = static_cast<int>(std::floor(p.v));
      if (x < 0 || x >= width || y < row_begin || y >= row_end) continue;
      image.Offer(x, y, {p.source_index, p.depth});
    }
  };

  DepthImage image(width, height);
  const int workers = std::max(threads, 1);
  if (workers == 1 || projected.size() < 2 * 4096) {
    rasterize_rows(image, 0, height);
    return image;
  }
  // Each band owns its rows outright; (depth, index) is a total order, so
  // the winner per pixel does not depend on the banding.
  constexpr std::size_t kRowsPerBand = 32;
  ParallelForBlocks(static_cast<std::size_t>(height), kRowsPerBand, workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                      rasterize_rows(image, static_cast<int>(begin),
                                     static_cast<int>(end));
                    });
  return image;
}

}  // namespace lidarcam::geometry
