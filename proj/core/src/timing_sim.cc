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

#include "lidarcam/timing_sim.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "lidarcam/error.h"
#include "lidarcam/format.h"
#include "lidarcam/parallel.h"
#include "lidarcam/random.h"

namespace lidarcam::sim {

namespace {

using geometry::RigidTransform;

constexpr std::uint64_t kCalibrationNoiseStream = 1;
constexpr std::uint64_t kTimestampJitterStream = 2;
// Upper bound on sweeps searched for a common period of the two sensors.
constexpr int kMaxHyperperiodSweeps = 100000;

std::int64_t ToMicros(double seconds) {
  return std::llround(seconds * kMicrosPerSecond);
}

void Require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorCode::kInvalidArgument, message);
}

// Number of sweeps in one common period of the LiDAR and camera schedules.
int HyperperiodSweeps(const SensorSchedule& s) {
  const double ratio = s.camera_hz / s.lidar_hz;
  for (int n = 1; n <= kMaxHyperperiodSweeps; ++n) {
    const double m = n * ratio;
    if (std::abs(m - std::round(m)) <= 1e-9 * std::max(1.0, m)) return n;
  }
  return kMaxHyperperiodSweeps;
}

// Exposure paired with a sweep starting at `start` (seconds), on the
// infinite periodic exposure train j / camera_hz + bias.
double PairedExposure(const SensorSchedule& s, double start,
                      Matching matching) {
  const double period = 1.0 / s.camera_hz;
  const double base =
      std::floor((start - s.camera_timestamp_bias) * s.camera_hz);
  // Distances this close are ties; the earlier exposure wins.
  const double tie = 1e-9 * period;
  double best = std::numeric_limits<double>::quiet_NaN();
  for (int dj = -1; dj <= 2; ++dj) {
    const double e = (base + dj) * period + s.camera_timestamp_bias;
    if (matching == Matching::kNearestExposure) {
      if (std::isnan(best) ||
          std::abs(e - start) < std::abs(best - start) - tie) {
        best = e;
      }
    } else if (e >= start - tie && (std::isnan(best) || e < best)) {
      best = e;
    }
  }
  return best;
}

std::size_t PairedExposureIndex(const std::vector<std::int64_t>& exposures,
                                std::int64_t start, Matching matching) {
  std::size_t best = exposures.size();
  for (std::size_t j = 0; j < exposures.size(); ++j) {
    if (matching == Matching::kNearestExposure) {
      if (best == exposures.size() ||
          std::llabs(exposures[j] - start) < std::llabs(exposures[best] - start)) {
        best = j;
      }
    } else if (exposures[j] >= start) {
      return j;
    }
  }
  return best;
}

// Camera -> ego rotation from the camera axes (x right, y down, z forward)
// expressed in ego coordinates.
Eigen::Quaterniond CameraRotation(const Eigen::Vector3d& x_axis,
                                  const Eigen::Vector3d& y_axis,
                                  const Eigen::Vector3d& z_axis) {
  Eigen::Matrix3d r;
  r.col(0) = x_axis;
  r.col(1) = y_axis;
  r.col(2) = z_axis;
  return Eigen::Quaterniond(r).normalized();
}

Eigen::Matrix3d PinholeMatrix(double f, double cx, double cy) {
  Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
  k(0, 0) = f;
  k(1, 1) = f;
  k(0, 2) = cx;
  k(1, 2) = cy;
  return k;
}

calib::CalibrationRecord Perturb(const calib::CalibrationRecord& record,
                                 const NoiseSpec& noise,
                                 std::uint64_t sensor_slot) {
  calib::CalibrationRecord out = record;
  const CounterRng rng(noise.seed, kCalibrationNoiseStream);
  const std::uint64_t base = sensor_slot * 6;
  if (noise.extrinsic_rotation_sigma > 0.0) {
    const Eigen::Vector3d rotvec(rng.Gaussian(base), rng.Gaussian(base + 1),
                                 rng.Gaussian(base + 2));
    const Eigen::Vector3d scaled = rotvec * noise.extrinsic_rotation_sigma;
    const double angle = scaled.norm();
    if (angle > 0.0) {
      out.rotation =
          (Eigen::Quaterniond(Eigen::AngleAxisd(angle, scaled / angle)) *
           record.rotation)
              .normalized();
    }
  }
  if (noise.extrinsic_translation_sigma > 0.0) {
    out.translation += noise.extrinsic_translation_sigma *
                       Eigen::Vector3d(rng.Gaussian(base + 3),
                                       rng.Gaussian(base + 4),
                                       rng.Gaussian(base + 5));
  }
  return out;
}

struct RayResult {
  bool hit = false;
  calib::LidarPoint point;
  std::uint8_t category = 0;
  std::int64_t emission_time = 0;
};

}  // namespace

void SensorSchedule::Validate() const {
  Require(std::isfinite(lidar_hz) && lidar_hz > 0.0, "lidar_hz must be > 0");
  Require(std::isfinite(camera_hz) && camera_hz > 0.0,
          "camera_hz must be > 0");
  Require(std::isfinite(lidar_sweep_duration) && lidar_sweep_duration >= 0.0 &&
              lidar_sweep_duration <= 1.0 / lidar_hz + 1e-12,
          "lidar_sweep_duration must lie in [0, 1 / lidar_hz]");
  Require(std::isfinite(camera_timestamp_bias),
          "camera_timestamp_bias must be finite");
  Require(std::isfinite(duration) && duration > 0.0, "duration must be > 0");
}

ScheduleTimes GenerateSchedule(const SensorSchedule& s) {
  s.Validate();
  ScheduleTimes times;
  for (std::int64_t k = 0;; ++k) {
    const double t = static_cast<double>(k) / s.lidar_hz;
    if (t >= s.duration) break;
    times.sweep_starts.push_back(ToMicros(t));
  }
  for (std::int64_t j = 0;; ++j) {
    const double t = static_cast<double>(j) / s.camera_hz + s.camera_timestamp_bias;
    if (t >= s.duration) break;
    if (t < 0.0) continue;
    times.exposures.push_back(ToMicros(t));
  }
  return times;
}

double WorstCaseTimeGap(const SensorSchedule& s, Matching matching) {
  s.Validate();
  const int sweeps = HyperperiodSweeps(s);
  double worst = 0.0;
  for (int k = 0; k < sweeps; ++k) {
    const double start = static_cast<double>(k) / s.lidar_hz;
    const double exposure = PairedExposure(s, start, matching);
    const double gap =
        std::max(std::abs(start - exposure),
                 std::abs(start + s.lidar_sweep_duration - exposure));
    worst = std::max(worst, gap);
  }
  return worst;
}

double WorstCaseDisplacement(const SensorSchedule& s, double speed,
                             Matching matching) {
  Require(std::isfinite(speed) && speed >= 0.0, "speed must be >= 0");
  return speed * WorstCaseTimeGap(s, matching);
}

void EgoTrajectory::Validate() const {
  Require(std::isfinite(speed) && speed >= 0.0, "speed must be >= 0");
  if (kind == TrajectoryKind::kConstantVelocity) {
    Require(heading.allFinite() && std::abs(heading.norm() - 1.0) <= 1e-9,
            "heading must be a unit vector");
  } else {
    Require(!waypoints.empty(), "piecewise-linear trajectory needs waypoints");
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
      Require(waypoints[i].timestamp > waypoints[i - 1].timestamp,
              "waypoint timestamps must increase");
    }
  }
}

RigidTransform EgoTrajectory::PoseAt(std::int64_t t) const {
  if (kind == TrajectoryKind::kConstantVelocity) {
    const double seconds = static_cast<double>(t) / kMicrosPerSecond;
    const Eigen::Quaterniond yaw =
        Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitX(), heading);
    return {yaw, origin + heading * (speed * seconds)};
  }
  const std::int64_t clamped = std::clamp(t, waypoints.front().timestamp,
                                          waypoints.back().timestamp);
  return geometry::InterpolatePose(waypoints, clamped);
}

std::optional<double> IntersectRay(const SceneObject& object,
                                   const Eigen::Vector3d& origin,
                                   const Eigen::Vector3d& direction,
                                   double t_min) {
  if (const auto* plane = std::get_if<Plane>(&object.shape)) {
    const double denom = plane->normal.dot(direction);
    if (denom == 0.0) return std::nullopt;
    const double t = (plane->offset - plane->normal.dot(origin)) / denom;
    if (t > t_min) return t;
    return std::nullopt;
  }
  // Slab test.
  const auto& box = std::get<Box>(object.shape);
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double lo = box.center[axis] - box.half_size[axis];
    const double hi = box.center[axis] + box.half_size[axis];
    if (direction[axis] == 0.0) {
      if (origin[axis] < lo || origin[axis] > hi) return std::nullopt;
      continue;
    }
    double t0 = (lo - origin[axis]) / direction[axis];
    double t1 = (hi - origin[axis]) / direction[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_near > t_min) return t_near;
  if (t_far > t_min) return t_far;
  return std::nullopt;
}

std::optional<RayHit> CastRay(const std::vector<SceneObject>& objects,
                              const Eigen::Vector3d& origin,
                              const Eigen::Vector3d& direction, double t_min,
                              double t_max) {
  std::optional<RayHit> best;
  for (const auto& object : objects) {
    const auto t = IntersectRay(object, origin, direction, t_min);
    if (t && *t <= t_max && (!best || *t < best->t)) {
      best = RayHit{*t, object.category};
    }
  }
  return best;
}

std::vector<SceneObject> DefaultStreetScene() {
  std::vector<SceneObject> objects;
  objects.push_back({category::kRoad, Plane{Eigen::Vector3d::UnitZ(), 0.0}});
  objects.push_back({category::kTruck, Box{{16.0, 0.0, 1.75}, {4.0, 1.25, 1.75}}});
  objects.push_back(
      {category::kBuilding, Box{{35.0, 0.0, 6.0}, {5.0, 15.0, 6.0}}});
  for (int i = 0; i < 6; ++i) {
    objects.push_back({category::kBarrier,
                       Box{{8.0 + 4.0 * i, -4.75, 0.5}, {0.9, 0.25, 0.5}}});
  }
  return objects;
}

std::vector<SceneObject> LateralWallScene(double distance) {
  return {{category::kWall, Plane{Eigen::Vector3d::UnitY(), distance}}};
}

void NoiseSpec::Validate() const {
  Require(std::isfinite(extrinsic_rotation_sigma) &&
              extrinsic_rotation_sigma >= 0.0,
          "extrinsic_rotation_sigma must be >= 0");
  Require(std::isfinite(extrinsic_translation_sigma) &&
              extrinsic_translation_sigma >= 0.0,
          "extrinsic_translation_sigma must be >= 0");
  Require(std::isfinite(timestamp_jitter_sigma) && timestamp_jitter_sigma >= 0.0,
          "timestamp_jitter_sigma must be >= 0");
}

void LidarModel::Validate() const {
  Require(rings >= 1 && azimuth_steps >= 1, "lidar needs rings and azimuths");
  Require(std::isfinite(min_elevation) && std::isfinite(max_elevation) &&
              min_elevation <= max_elevation,
          "bad lidar elevation range");
  Require(std::isfinite(min_range) && std::isfinite(max_range) &&
              min_range >= 0.0 && min_range < max_range,
          "bad lidar range");
}

geometry::CameraIntrinsics SensorRig::Intrinsics() const {
  if (!camera.camera_intrinsic) {
    throw Error(ErrorCode::kBadIntrinsics,
                "camera '" + camera.sensor_name + "' has no intrinsic matrix");
  }
  return geometry::CameraIntrinsics::FromMatrix(*camera.camera_intrinsic,
                                                image_width, image_height);
}

SensorRig DefaultRig() {
  SensorRig rig;
  rig.lidar.sensor_name = "LIDAR_TOP";
  rig.lidar.translation = {0.94, 0.0, 1.84};
  rig.camera.sensor_name = "CAM_FRONT";
  rig.camera.translation = {1.70, 0.0, 1.51};
  rig.camera.rotation = CameraRotation(-Eigen::Vector3d::UnitY(),
                                       -Eigen::Vector3d::UnitZ(),
                                       Eigen::Vector3d::UnitX());
  rig.camera.camera_intrinsic = PinholeMatrix(500.0, 320.0, 240.0);
  return rig;
}

SensorRig LeftLookingRig() {
  SensorRig rig = DefaultRig();
  rig.camera.sensor_name = "CAM_LEFT";
  rig.camera.translation = {1.0, 0.0, 1.5};
  rig.camera.rotation = CameraRotation(Eigen::Vector3d::UnitX(),
                                       -Eigen::Vector3d::UnitZ(),
                                       Eigen::Vector3d::UnitY());
  return rig;
}

SimulationResult Simulate(const std::vector<SceneObject>& objects,
                          const EgoTrajectory& trajectory,
                          const SensorSchedule& schedule,
                          const NoiseSpec& noise,
                          const SimulationOptions& options) {
  if (objects.empty()) {
    throw Error(ErrorCode::kEmptyScene, "scene has no objects");
  }
  trajectory.Validate();
  noise.Validate();
  options.lidar.Validate();
  Require(options.pose_log_interval_us > 0, "pose log interval must be > 0");
  Require(options.pose_log_margin_us >= 0, "pose log margin must be >= 0");
  const geometry::CameraIntrinsics intrinsics = options.rig.Intrinsics();

  const ScheduleTimes times = GenerateSchedule(schedule);
  Require(options.sweep_index < times.sweep_starts.size(),
          "sweep_index beyond the schedule");
  Require(!times.exposures.empty(), "schedule contains no camera exposure");
  const std::int64_t t_lidar = times.sweep_starts[options.sweep_index];
  const std::size_t exposure_index =
      PairedExposureIndex(times.exposures, t_lidar, options.matching);
  Require(exposure_index < times.exposures.size(),
          "no camera exposure pairs with the selected sweep");
  const std::int64_t t_exposure = times.exposures[exposure_index];

  SimulationResult result;
  result.intrinsics = intrinsics;
  result.lidar_name = options.rig.lidar.sensor_name;
  result.camera_name = options.rig.camera.sensor_name;
  result.lidar_timestamp = t_lidar;
  const std::int64_t jitter =
      noise.timestamp_jitter_sigma > 0.0
          ? ToMicros(noise.timestamp_jitter_sigma *
                     CounterRng(noise.seed, kTimestampJitterStream).Gaussian(0))
          : 0;
  result.camera_timestamp =
      t_exposure - ToMicros(schedule.camera_timestamp_bias) + jitter;

  SyntheticScene& scene = result.scene;
  scene.objects = objects;
  scene.exposure_time = t_exposure;

  const RigidTransform ego_from_lidar =
      geometry::FromCalibration(options.rig.lidar);
  const RigidTransform ego_from_camera =
      geometry::FromCalibration(options.rig.camera);
  const RigidTransform camera_from_world =
      geometry::Invert(trajectory.PoseAt(t_exposure) * ego_from_camera);

  // Ray-cast one sweep; every azimuth column carries its own emission time.
  const LidarModel& lidar = options.lidar;
  const auto rings = static_cast<std::size_t>(lidar.rings);
  const auto steps = static_cast<std::size_t>(lidar.azimuth_steps);
  std::vector<RayResult> rays(rings * steps);
  ParallelForBlocks(steps, 16, options.threads, [&](std::size_t, std::size_t begin,
                                                    std::size_t end) {
    for (std::size_t a = begin; a < end; ++a) {
      const double fraction = static_cast<double>(a) / static_cast<double>(steps);
      const std::int64_t emission =
          t_lidar + ToMicros(schedule.lidar_sweep_duration * fraction);
      const RigidTransform world_from_lidar =
          trajectory.PoseAt(emission) * ego_from_lidar;
      const double azimuth = lidar.start_azimuth + 2.0 * std::numbers::pi * fraction;
      for (std::size_t r = 0; r < rings; ++r) {
        const double elevation =
            rings == 1 ? lidar.min_elevation
                       : lidar.min_elevation +
                             (lidar.max_elevation - lidar.min_elevation) *
                                 static_cast<double>(r) /
                                 static_cast<double>(rings - 1);
        const Eigen::Vector3d dir(std::cos(elevation) * std::cos(azimuth),
                                  std::cos(elevation) * std::sin(azimuth),
                                  std::sin(elevation));
        const auto hit =
            CastRay(objects, world_from_lidar.translation(),
                    world_from_lidar.rotation() * dir, lidar.min_range,
                    lidar.max_range);
        RayResult& out = rays[a * rings + r];
        if (!hit) continue;
        out.hit = true;
        out.category = hit->category;
        out.emission_time = emission;
        const Eigen::Vector3d local = dir * hit->t;
        out.point.x = static_cast<float>(local.x());
        out.point.y = static_cast<float>(local.y());
        out.point.z = static_cast<float>(local.z());
        out.point.intensity =
            static_cast<float>(255.0 * std::exp(-hit->t / 40.0));
        out.point.ring = static_cast<std::uint16_t>(r);
      }
    }
  });

  scene.cloud.frame = options.rig.lidar.sensor_name;
  scene.cloud.timestamp = t_lidar;
  for (const RayResult& ray : rays) {
    if (!ray.hit) continue;
    scene.cloud.points.push_back(ray.point);
    scene.emission_times.push_back(ray.emission_time);
    scene.ground_truth.push_back({0.0, 0.0, ray.category});
  }

  // Ground truth re-projects the stored (float) coordinates so it shares the
  // exact projection path downstream consumers use.
  const std::size_t n = scene.cloud.points.size();
  ParallelForBlocks(n, 4096, options.threads, [&](std::size_t, std::size_t begin,
                                                  std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const RigidTransform camera_from_lidar =
          camera_from_world * trajectory.PoseAt(scene.emission_times[i]) *
          ego_from_lidar;
      const auto& p = scene.cloud.points[i];
      const auto projected = geometry::ProjectPoint(
          camera_from_lidar.Apply(Eigen::Vector3d(p.x, p.y, p.z)), intrinsics, i);
      scene.ground_truth[i].u = projected.u;
      scene.ground_truth[i].v = projected.v;
    }
  });

  // What the camera actually saw at the true exposure instant.
  scene.category_raster = CategoryRaster(intrinsics.width, intrinsics.height);
  const RigidTransform world_from_camera = geometry::Invert(camera_from_world);
  ParallelForBlocks(
      static_cast<std::size_t>(intrinsics.height), 8, options.threads,
      [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t y = begin; y < end; ++y) {
          for (int x = 0; x < intrinsics.width; ++x) {
            const Eigen::Vector3d ray_camera(
                (x + 0.5 - intrinsics.cx) / intrinsics.fx,
                (static_cast<double>(y) + 0.5 - intrinsics.cy) / intrinsics.fy,
                1.0);
            const auto hit =
                CastRay(objects, world_from_camera.translation(),
                        world_from_camera.rotation() * ray_camera, 1e-6,
                        std::numeric_limits<double>::infinity());
            scene.category_raster.labels[y * static_cast<std::size_t>(
                                                 intrinsics.width) +
                                         static_cast<std::size_t>(x)] =
                hit ? hit->category : category::kNone;
          }
        }
      });

  result.calibration = {Perturb(options.rig.lidar, noise, 0),
                        Perturb(options.rig.camera, noise, 1)};

  const std::int64_t interval = options.pose_log_interval_us;
  const std::int64_t lo =
      std::min({std::int64_t{0}, t_lidar, result.camera_timestamp}) -
      options.pose_log_margin_us;
  const std::int64_t hi =
      std::max({ToMicros(schedule.duration),
                t_lidar + ToMicros(schedule.lidar_sweep_duration),
                result.camera_timestamp, t_exposure}) +
      options.pose_log_margin_us;
  auto floor_div = [](std::int64_t a, std::int64_t b) {
    return a / b - ((a % b != 0) && ((a < 0) != (b < 0)));
  };
  for (std::int64_t k = floor_div(lo, interval);
       k * interval <= hi + interval - 1; ++k) {
    const std::int64_t t = k * interval;
    const RigidTransform pose = trajectory.PoseAt(t);
    result.ego_poses.push_back({t, pose.translation(), pose.rotation()});
  }
  return result;
}

std::string GroundTruthCsv(const std::vector<GroundTruthPoint>& ground_truth) {
  std::string out = "point_index,u_true,v_true,category\n";
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    const auto& g = ground_truth[i];
    out += std::to_string(i);
    out += ',';
    out += FormatDouble(g.u);
    out += ',';
    out += FormatDouble(g.v);
    out += ',';
    out += std::to_string(g.category);
    out += '\n';
  }
  return out;
}

std::vector<GroundTruthPoint> ParseGroundTruthCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "point_index,u_true,v_true,category") {
    throw Error(ErrorCode::kMalformedFile, "ground-truth CSV header mismatch");
  }
  std::vector<GroundTruthPoint> rows;
  std::int64_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::string_view fields[4];
    std::size_t start = 0;
    int count = 0;
    for (std::size_t i = 0; i <= line.size() && count < 4; ++i) {
      if (i == line.size() || line[i] == ',') {
        fields[count++] = std::string_view(line).substr(start, i - start);
        start = i + 1;
      }
    }
    if (count != 4 || start <= line.size()) {
      throw Error(ErrorCode::kMalformedFile, "expected 4 fields", row);
    }
    const auto index = ParseInt<std::int64_t>(fields[0]);
    const auto u = ParseDouble(fields[1]);
    const auto v = ParseDouble(fields[2]);
    const auto cat = ParseInt<int>(fields[3]);
    if (!index || !u || !v || !cat || *cat < 0 || *cat > 255) {
      throw Error(ErrorCode::kMalformedFile, "unparsable ground-truth row", row);
    }
    if (*index != row) {
      throw Error(ErrorCode::kIndexMismatch,
                  "ground-truth rows must be numbered 0..N-1 in order", row);
    }
    rows.push_back({*u, *v, static_cast<std::uint8_t>(*cat)});
    ++row;
  }
  return rows;
}

}  // namespace lidarcam::sim
