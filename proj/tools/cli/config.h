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

#ifndef LIDARCAM_TOOLS_CLI_CONFIG_H_
#define LIDARCAM_TOOLS_CLI_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lidarcam::cli {

// Every key a config file may set.
struct RunConfig {
  // Inputs; relative paths resolve against the config file's directory.
  std::filesystem::path calibration;
  std::filesystem::path poses;
  std::filesystem::path pointcloud;
  std::filesystem::path ground_truth;
  std::filesystem::path category_raster;
  std::filesystem::path out = "out";

  std::string camera_sensor = "CAM_FRONT";
  std::string lidar_sensor = "LIDAR_TOP";
  std::int64_t lidar_timestamp = 0;
  std::int64_t camera_timestamp = 0;
  int image_width = 640;
  int image_height = 480;

  double lidar_hz = 20.0;
  double camera_hz = 12.0;
  double sweep_duration = 0.05;
  double camera_bias = 0.0;
  double duration = 1.0;
  std::size_t sweep_index = 0;
  std::string matching = "nearest";

  double speed = 40.0 / 3.6;
  double heading_yaw_deg = 0.0;
  std::string scene = "street";
  double wall_distance = 10.0;
  std::string rig = "front";

  double rotation_sigma = 0.0;
  double translation_sigma = 0.0;
  double jitter_sigma = 0.0;

  double histogram_bin_width = 1.0;

  int grid_size = 16;
  int channels = 4;
  double shift_x = 1.5;
  double shift_y = -0.8;
  double max_offset = 4.0;
  int hidden_units = 16;
  int steps = 500;
  double learning_rate = 0.05;

  int gradcheck_instances = 20;
  double gradcheck_step = 1e-5;
  bool gradcheck_corrupt = false;

  std::uint64_t seed = 0;
  // 0 picks the hardware concurrency.
  int threads = 0;
};

// Seed streams fanned out from RunConfig::seed via DeriveSeed.
inline constexpr std::uint64_t kSimulationSeedStream = 1;
inline constexpr std::uint64_t kFusionSeedStream = 2;
inline constexpr std::uint64_t kGradcheckSeedStream = 3;

// Parses "key = value" lines ('#' starts a comment). Throws
// Error(kInvalidArgument) on unknown keys, duplicates or bad values.
std::map<std::string, std::string> ParseKeyValues(std::string_view text);

// Applies key/value pairs over `config`. Path values are resolved against
// `base_dir` when relative.
void ApplyKeyValues(const std::map<std::string, std::string>& values,
                    const std::filesystem::path& base_dir, RunConfig& config);

// Range checks that do not depend on the subcommand.
void Validate(const RunConfig& config);

std::vector<std::string> KnownKeys();

}  // namespace lidarcam::cli

#endif  // LIDARCAM_TOOLS_CLI_CONFIG_H_
