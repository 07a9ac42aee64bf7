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

#ifndef LIDARCAM_TIMING_SIM_H_
#define LIDARCAM_TIMING_SIM_H_

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "lidarcam/calib_io.h"
#include "lidarcam/geometry.h"
#include "lidarcam/image.h"

namespace lidarcam::sim {

inline constexpr double kMicrosPerSecond = 1e6;
// Published worst-case distance at 40 km/h; reported, never asserted.
inline constexpr double kReferenceWorstCaseMeters = 7.3;
inline constexpr double kFortyKmhInMetersPerSecond = 40.0 / 3.6;

struct SensorSchedule {
  double lidar_hz = 20.0;
  double camera_hz = 12.0;
  // One full LiDAR rotation, seconds.
  double lidar_sweep_duration = 0.05;
  // Delay between the nominal camera trigger and the actual exposure.
  double camera_timestamp_bias = 0.0;
  double duration = 1.0;

  void Validate() const;
};

struct ScheduleTimes {
  std::vector<std::int64_t> sweep_starts;
  std::vector<std::int64_t> exposures;
};

// Sweep starts at k / lidar_hz, exposures at j / camera_hz + bias; both keep
// only times in [0, duration) and are rounded to microseconds.
ScheduleTimes GenerateSchedule(const SensorSchedule& schedule);

enum class Matching {
  // Each sweep pairs with the exposure closest to its start (ties: earlier).
  kNearestExposure,
  // Each sweep pairs with the first exposure at or after its start.
  kSweepStartToExposure,
};

// speed * max |t_point - t_exposure| over every sweep of one schedule
// hyperperiod, with point times spanning the whole sweep.
double WorstCaseDisplacement(const SensorSchedule& schedule, double speed,
                             Matching matching = Matching::kNearestExposure);

// Worst-case time gap in seconds (the factor multiplying speed above).
double WorstCaseTimeGap(const SensorSchedule& schedule,
                        Matching matching = Matching::kNearestExposure);

enum class TrajectoryKind { kConstantVelocity, kPiecewiseLinear };

struct EgoTrajectory {
  TrajectoryKind kind = TrajectoryKind::kConstantVelocity;
  double speed = 0.0;
  Eigen::Vector3d heading = Eigen::Vector3d::UnitX();
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  // Piecewise-linear only; clamped to the end poses outside their range.
  std::vector<calib::EgoPoseRecord> waypoints;

  void Validate() const;
  // Ego -> global at time t (microseconds). Constant-velocity motion keeps
  // the body x axis along `heading`.
  geometry::RigidTransform PoseAt(std::int64_t t) const;
};

// Axis-aligned in the world frame.
struct Box {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_size = Eigen::Vector3d::Ones();
};

// Points x with normal . x == offset.
struct Plane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;
};

struct SceneObject {
  std::uint8_t category = 0;
  std::variant<Box, Plane> shape;
};

// Ray parameter of the first hit with t > t_min, if any. `direction` need
// not be unit length.
std::optional<double> IntersectRay(const SceneObject& object,
                                   const Eigen::Vector3d& origin,
                                   const Eigen::Vector3d& direction,
                                   double t_min = 0.0);

struct RayHit {
  double t = 0.0;
  std::uint8_t category = 0;
};
std::optional<RayHit> CastRay(const std::vector<SceneObject>& objects,
                              const Eigen::Vector3d& origin,
                              const Eigen::Vector3d& direction, double t_min,
                              double t_max);

// Road, building, truck and barrier categories used by the default scene.
namespace category {
inline constexpr std::uint8_t kNone = 0;
inline constexpr std::uint8_t kRoad = 1;
inline constexpr std::uint8_t kBuilding = 2;
inline constexpr std::uint8_t kTruck = 3;
inline constexpr std::uint8_t kBarrier = 4;
inline constexpr std::uint8_t kWall = 5;
}  // namespace category

// Ground plane, a truck ahead, a building behind it and a row of barriers on
// the right: the arrangement where misaligned points bleed across objects.
std::vector<SceneObject> DefaultStreetScene();
// A single plane parallel to the direction of travel, `distance` meters to
// the left of the ego path.
std::vector<SceneObject> LateralWallScene(double distance);

struct NoiseSpec {
  double extrinsic_rotation_sigma = 0.0;     // radians
  double extrinsic_translation_sigma = 0.0;  // meters
  double timestamp_jitter_sigma = 0.0;       // seconds
  std::uint64_t seed = 0;

  void Validate() const;
};

struct LidarModel {
  int rings = 32;
  double min_elevation = -30.67 * 3.14159265358979323846 / 180.0;
  double max_elevation = 10.67 * 3.14159265358979323846 / 180.0;
  int azimuth_steps = 1080;
  // Azimuth (lidar frame, radians) at which each sweep begins; rotation is
  // counter-clockwise about +z.
  double start_azimuth = 0.0;
  double min_range = 1.0;
  double max_range = 80.0;

  void Validate() const;
};

struct SensorRig {
  calib::CalibrationRecord lidar;
  calib::CalibrationRecord camera;
  int image_width = 640;
  int image_height = 480;

  geometry::CameraIntrinsics Intrinsics() const;
};

// LIDAR_TOP on the roof and a forward-looking CAM_FRONT (fx = fy = 500,
// 640x480).
SensorRig DefaultRig();
// Same camera, rotated to look left (+y of the ego frame).
SensorRig LeftLookingRig();

struct SimulationOptions {
  LidarModel lidar;
  SensorRig rig = DefaultRig();
  std::size_t sweep_index = 0;
  Matching matching = Matching::kNearestExposure;
  std::int64_t pose_log_interval_us = 10000;
  std::int64_t pose_log_margin_us = 1000000;
  int threads = 1;
};

struct GroundTruthPoint {
  double u = 0.0;
  double v = 0.0;
  std::uint8_t category = 0;
};

struct SyntheticScene {
  std::vector<SceneObject> objects;
  calib::PointCloud cloud;
  std::vector<std::int64_t> emission_times;
  // Pixel of every point under the true poses at the true exposure instant.
  std::vector<GroundTruthPoint> ground_truth;
  std::int64_t exposure_time = 0;
  CategoryRaster category_raster;
};

struct SimulationResult {
  SyntheticScene scene;
  // What a downstream consumer sees: noisy extrinsics, the pose log and the
  // recorded (biased, jittered) camera timestamp.
  std::vector<calib::CalibrationRecord> calibration;
  std::vector<calib::EgoPoseRecord> ego_poses;
  std::int64_t lidar_timestamp = 0;
  std::int64_t camera_timestamp = 0;
  geometry::CameraIntrinsics intrinsics;
  std::string lidar_name;
  std::string camera_name;
};

SimulationResult Simulate(const std::vector<SceneObject>& objects,
                          const EgoTrajectory& trajectory,
                          const SensorSchedule& schedule,
                          const NoiseSpec& noise,
                          const SimulationOptions& options = {});

// Ground-truth CSV: point_index,u_true,v_true,category
std::string GroundTruthCsv(const std::vector<GroundTruthPoint>& ground_truth);
std::vector<GroundTruthPoint> ParseGroundTruthCsv(const std::string& text);

}  // namespace lidarcam::sim

#endif  // LIDARCAM_TIMING_SIM_H_
