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

#include "cli/commands.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "cli/cli.h"
#include "lidarcam/analysis.h"
#include "lidarcam/calib_io.h"
#include "lidarcam/deform_fusion.h"
#include "lidarcam/error.h"
#include "lidarcam/format.h"
#include "lidarcam/geometry.h"
#include "lidarcam/image.h"
#include "lidarcam/parallel.h"
#include "lidarcam/random.h"
#include "lidarcam/timing_sim.h"

namespace lidarcam::cli {

namespace {

int Threads(const RunConfig& config) {
  return config.threads > 0 ? config.threads : DefaultThreadCount();
}

void RequirePath(const std::filesystem::path& path, const char* key) {
  if (path.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("config key '") + key + "' is required");
  }
}

std::filesystem::path PrepareOut(const RunConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(config.out, ec);
  if (ec) {
    throw Error(ErrorCode::kIoError, "cannot create output directory " +
                                         config.out.string() + ": " +
                                         ec.message());
  }
  return config.out;
}

// Prints "key=value" lines and mirrors them into a summary file.
class Summary {
 public:
  void Add(const std::string& key, const std::string& value) {
    text_ += key + "=" + value + "\n";
  }
  void Add(const std::string& key, double value) { Add(key, FormatDouble(value)); }
  void Add(const std::string& key, std::size_t value) {
    Add(key, std::to_string(value));
  }
  void Emit(std::ostream& out, const std::filesystem::path& file) const {
    out << text_;
    calib::WriteFileBytes(file, text_);
  }

 private:
  std::string text_;
};

struct LoadedProjection {
  calib::PointCloud cloud;
  geometry::CameraIntrinsics intrinsics;
  std::vector<geometry::ProjectedPoint> projected;
};

LoadedProjection LoadAndProject(const RunConfig& config) {
  RequirePath(config.calibration, "calibration");
  RequirePath(config.poses, "poses");
  RequirePath(config.pointcloud, "pointcloud");
  const auto calibration = calib::LoadCalibration(config.calibration);
  const auto poses = calib::LoadEgoPoses(config.poses);
  LoadedProjection loaded;
  loaded.cloud = calib::LoadPointCloudBin(config.pointcloud, config.lidar_sensor,
                                          config.lidar_timestamp);
  const auto* camera = calib::FindSensor(calibration, config.camera_sensor);
  if (camera == nullptr) {
    throw Error(ErrorCode::kUnknownSensor,
                "no calibration record for " + config.camera_sensor);
  }
  if (!camera->camera_intrinsic) {
    throw Error(ErrorCode::kBadIntrinsics,
                config.camera_sensor + " has no camera_intrinsic");
  }
  loaded.intrinsics = geometry::CameraIntrinsics::FromMatrix(
      *camera->camera_intrinsic, config.image_width, config.image_height);
  const auto chain = geometry::BuildChain(
      calibration, poses, config.lidar_timestamp, config.camera_timestamp,
      config.camera_sensor, config.lidar_sensor);
  loaded.projected = geometry::Project(loaded.cloud, chain, loaded.intrinsics,
                                       Threads(config));
  return loaded;
}

std::string ProjectedCsv(const std::vector<geometry::ProjectedPoint>& points) {
  std::string csv = "index,u,v,depth,status\n";
  for (const auto& p : points) {
    csv += std::to_string(p.source_index) + "," + FormatDouble(p.u) + "," +
           FormatDouble(p.v) + "," + FormatDouble(p.depth) + "," +
           std::string(geometry::ProjectionStatusName(p.status)) + "\n";
  }
  return csv;
}

// Millimeters, saturating at 65535; 0 marks empty pixels.
std::string DepthPgm(const geometry::DepthImage& depth) {
  std::vector<std::uint16_t> values(
      static_cast<std::size_t>(depth.width()) * depth.height(), 0);
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const auto& sample = depth.at(x, y);
      if (!sample) continue;
      const double mm = std::round(sample->depth * 1000.0);
      values[static_cast<std::size_t>(y) * depth.width() + x] =
          static_cast<std::uint16_t>(std::clamp(mm, 1.0, 65535.0));
    }
  }
  return EncodePgm16(depth.width(), depth.height(), values);
}

std::size_t CountStatus(const std::vector<geometry::ProjectedPoint>& points,
                        geometry::ProjectionStatus status) {
  return static_cast<std::size_t>(
      std::count_if(points.begin(), points.end(),
                    [status](const auto& p) { return p.status == status; }));
}

sim::Matching ParseMatching(const std::string& name) {
  return name == "sweep_start" ? sim::Matching::kSweepStartToExposure
                               : sim::Matching::kNearestExposure;
}

sim::SensorSchedule Schedule(const RunConfig& config) {
  sim::SensorSchedule schedule;
  schedule.lidar_hz = config.lidar_hz;
  schedule.camera_hz = config.camera_hz;
  schedule.lidar_sweep_duration = config.sweep_duration;
  schedule.camera_timestamp_bias = config.camera_bias;
  schedule.duration = config.duration;
  schedule.Validate();
  return schedule;
}

}  // namespace

int RunProject(const RunConfig& config, std::ostream& out) {
  const auto loaded = LoadAndProject(config);
  const auto dir = PrepareOut(config);
  const auto depth =
      geometry::Rasterize(loaded.projected, loaded.intrinsics.width,
                          loaded.intrinsics.height, Threads(config));
  calib::WriteFileBytes(dir / "projected.csv", ProjectedCsv(loaded.projected));
  calib::WriteFileBytes(dir / "depth.pgm", DepthPgm(depth));

  Summary summary;
  summary.Add("points", loaded.projected.size());
  summary.Add("valid",
              CountStatus(loaded.projected, geometry::ProjectionStatus::kValid));
  summary.Add("behind_camera", CountStatus(loaded.projected,
                                           geometry::ProjectionStatus::kBehindCamera));
  summary.Add("out_of_bounds", CountStatus(loaded.projected,
                                           geometry::ProjectionStatus::kOutOfBounds));
  summary.Add("occupied_pixels", depth.OccupiedCount());
  summary.Emit(out, dir / "project_summary.txt");
  return kExitOk;
}

int RunSimulate(const RunConfig& config, std::ostream& out) {
  const auto schedule = Schedule(config);
  const auto matching = ParseMatching(config.matching);

  sim::EgoTrajectory trajectory;
  trajectory.speed = config.speed;
  const double yaw = config.heading_yaw_deg * std::numbers::pi / 180.0;
  trajectory.heading = Eigen::Vector3d(std::cos(yaw), std::sin(yaw), 0.0);

  sim::NoiseSpec noise;
  noise.extrinsic_rotation_sigma = config.rotation_sigma;
  noise.extrinsic_translation_sigma = config.translation_sigma;
  noise.timestamp_jitter_sigma = config.jitter_sigma;
  noise.seed = DeriveSeed(config.seed, kSimulationSeedStream);

  sim::SimulationOptions options;
  options.rig = config.rig == "left" ? sim::LeftLookingRig() : sim::DefaultRig();
  options.rig.image_width = config.image_width;
  options.rig.image_height = config.image_height;
  options.sweep_index = config.sweep_index;
  options.matching = matching;
  options.threads = Threads(config);

  const auto objects = config.scene == "wall"
                           ? sim::LateralWallScene(config.wall_distance)
                           : sim::DefaultStreetScene();
  const auto result = sim::Simulate(objects, trajectory, schedule, noise, options);

  const auto dir = PrepareOut(config);
  calib::WriteCalibration(dir / "calibration.json", result.calibration);
  calib::WriteEgoPoses(dir / "ego_poses.json", result.ego_poses);
  calib::WritePointCloudBin(dir / "sweep.bin", result.scene.cloud);
  calib::WriteFileBytes(dir / "ground_truth.csv",
                        sim::GroundTruthCsv(result.scene.ground_truth));
  WriteCategoryRaster(dir / "category.pgm", result.scene.category_raster);

  std::ostringstream cfg;
  cfg << "# Inputs for `lidarcam project` and `lidarcam analyze`.\n"
      << "calibration = calibration.json\n"
      << "poses = ego_poses.json\n"
      << "pointcloud = sweep.bin\n"
      << "ground_truth = ground_truth.csv\n"
      << "category_raster = category.pgm\n"
      << "camera_sensor = " << result.camera_name << "\n"
      << "lidar_sensor = " << result.lidar_name << "\n"
      << "lidar_timestamp = " << result.lidar_timestamp << "\n"
      << "camera_timestamp = " << result.camera_timestamp << "\n"
      << "image_width = " << result.intrinsics.width << "\n"
      << "image_height = " << result.intrinsics.height << "\n";
  calib::WriteFileBytes(dir / "project.cfg", cfg.str());

  Summary summary;
  summary.Add("points", result.scene.cloud.points.size());
  summary.Add("lidar_timestamp", std::to_string(result.lidar_timestamp));
  summary.Add("camera_timestamp", std::to_string(result.camera_timestamp));
  summary.Add("exposure_timestamp", std::to_string(result.scene.exposure_time));
  summary.Add("worst_case_time_gap_s", sim::WorstCaseTimeGap(schedule, matching));
  summary.Add("worst_case_displacement_m",
              sim::WorstCaseDisplacement(schedule, config.speed, matching));
  summary.Add("published_worst_case_m", sim::kReferenceWorstCaseMeters);
  summary.Emit(out, dir / "simulate_summary.txt");
  return kExitOk;
}

int RunAnalyze(const RunConfig& config, std::ostream& out) {
  RequirePath(config.ground_truth, "ground_truth");
  const auto loaded = LoadAndProject(config);
  const auto ground_truth =
      sim::ParseGroundTruthCsv(calib::ReadTextFile(config.ground_truth));
  std::optional<CategoryRaster> raster;
  if (!config.category_raster.empty()) {
    raster = LoadCategoryRaster(config.category_raster);
  }
  const auto report = analysis::Compare(loaded.projected, ground_truth,
                                        raster ? &*raster : nullptr);
  const auto bins = analysis::ErrorHistogram(report, config.histogram_bin_width);

  const auto dir = PrepareOut(config);
  calib::WriteFileBytes(dir / "report.csv", analysis::ReportCsv(report));
  calib::WriteFileBytes(dir / "histogram.csv", analysis::HistogramCsv(bins));

  const auto palette = analysis::DefaultPalette();
  const RgbImage backdrop =
      raster ? analysis::RenderCategories(*raster, palette)
             : RgbImage(loaded.intrinsics.width, loaded.intrinsics.height);
  std::vector<std::uint8_t> categories(ground_truth.size());
  std::transform(ground_truth.begin(), ground_truth.end(), categories.begin(),
                 [](const auto& g) { return g.category; });
  analysis::RenderOverlay(backdrop, loaded.projected, categories, palette,
                          dir / "overlay.ppm");

  Summary summary;
  summary.Add("scored", report.points.size());
  summary.Add("behind_camera", report.behind_camera);
  summary.Add("out_of_bounds", report.out_of_bounds);
  summary.Add("unscored", report.unscored);
  if (report.aggregates) {
    const auto& a = *report.aggregates;
    summary.Add("mean_px", a.mean);
    summary.Add("median_px", a.median);
    summary.Add("p95_px", a.p95);
    summary.Add("max_px", a.max);
    summary.Add("mean_u_err_px", a.mean_u_err);
    summary.Add("mean_v_err_px", a.mean_v_err);
    if (a.cross_category_fraction) {
      summary.Add("cross_category_fraction", *a.cross_category_fraction);
    }
  }
  summary.Emit(out, dir / "analysis_summary.txt");
  return kExitOk;
}

int RunFuseDemo(const RunConfig& config, std::ostream& out) {
  const std::uint64_t seed = DeriveSeed(config.seed, kFusionSeedStream);
  const auto grid = fusion::SmoothRandomGrid(config.grid_size, config.grid_size,
                                             config.channels, seed);
  fusion::ToyTrainingOptions options;
  options.true_shift = {config.shift_x, config.shift_y};
  options.max_offset = config.max_offset;
  options.hidden_units = config.hidden_units;
  options.steps = config.steps;
  options.learning_rate = config.learning_rate;
  options.seed = seed;
  options.threads = Threads(config);
  const auto result = fusion::TrainToy(grid, options);

  const auto dir = PrepareOut(config);
  calib::WriteFileBytes(dir / "loss_trace.csv",
                        fusion::LossTraceCsv(result.loss_trace));
  fusion::SaveCheckpoint(dir / "offset_net.bin", result.network);

  const double dx = result.mean_offset.dx - config.shift_x;
  const double dy = result.mean_offset.dy - config.shift_y;
  Summary summary;
  summary.Add("true_shift", FormatDouble(config.shift_x) + "," +
                                FormatDouble(config.shift_y));
  summary.Add("recovered_offset", FormatDouble(result.mean_offset.dx) + "," +
                                      FormatDouble(result.mean_offset.dy));
  summary.Add("recovery_error_px", std::hypot(dx, dy));
  summary.Add("initial_loss", result.loss_trace.front());
  summary.Add("final_loss", result.loss_trace.back());
  summary.Emit(out, dir / "fuse_summary.txt");
  return kExitOk;
}

int RunGradcheck(const RunConfig& config, std::ostream& out) {
  fusion::GradcheckOptions options;
  options.instances = config.gradcheck_instances;
  options.step = config.gradcheck_step;
  options.seed = DeriveSeed(config.seed, kGradcheckSeedStream);
  options.threads = Threads(config);
  options.corrupt_gradient = config.gradcheck_corrupt;
  const auto report = fusion::RunGradcheck(options);
  const bool pass = report.max_relative_error < 1e-4;
  out << "max_relative_error=" << FormatDouble(report.max_relative_error) << "\n"
      << "parameters_checked=" << report.parameters_checked << "\n"
      << "threshold=" << FormatDouble(1e-4) << "\n"
      << "result=" << (pass ? "pass" : "fail") << "\n";
  return pass ? kExitOk : kExitCheckFailed;
}

}  // namespace lidarcam::cli
