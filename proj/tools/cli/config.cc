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

#include "cli/config.h"

#include <cmath>
#include <functional>

#include "lidarcam/error.h"
#include "lidarcam/format.h"

namespace lidarcam::cli {

namespace {

using Setter = std::function<void(const std::string& value,
                                  const std::filesystem::path& base_dir,
                                  RunConfig& config)>;

[[noreturn]] void Bad(const std::string& key, const std::string& value,
                      const char* expected) {
  throw Error(ErrorCode::kInvalidArgument,
              "config key '" + key + "': '" + value + "' is not " + expected);
}

Setter Double(double RunConfig::*field, const std::string& key) {
  return [field, key](const std::string& v, const std::filesystem::path&,
                      RunConfig& c) {
    const auto parsed = ParseDouble(v);
    if (!parsed || !std::isfinite(*parsed)) Bad(key, v, "a finite number");
    c.*field = *parsed;
  };
}

template <typename Int>
Setter Integer(Int RunConfig::*field, const std::string& key) {
  return [field, key](const std::string& v, const std::filesystem::path&,
                      RunConfig& c) {
    const auto parsed = ParseInt<Int>(v);
    if (!parsed) Bad(key, v, "an integer");
    c.*field = *parsed;
  };
}

Setter Text(std::string RunConfig::*field) {
  return [field](const std::string& v, const std::filesystem::path&,
                 RunConfig& c) { c.*field = v; };
}

Setter Path(std::filesystem::path RunConfig::*field) {
  return [field](const std::string& v, const std::filesystem::path& base,
                 RunConfig& c) {
    const std::filesystem::path p(v);
    c.*field = (p.is_relative() && !base.empty()) ? base / p : p;
  };
}

Setter Bool(bool RunConfig::*field, const std::string& key) {
  return [field, key](const std::string& v, const std::filesystem::path&,
                      RunConfig& c) {
    if (v == "true" || v == "1") {
      c.*field = true;
    } else if (v == "false" || v == "0") {
      c.*field = false;
    } else {
      Bad(key, v, "a boolean");
    }
  };
}

const std::map<std::string, Setter>& Setters() {
  static const std::map<std::string, Setter> setters = [] {
    std::map<std::string, Setter> s;
    s["calibration"] = Path(&RunConfig::calibration);
    s["poses"] = Path(&RunConfig::poses);
    s["pointcloud"] = Path(&RunConfig::pointcloud);
    s["ground_truth"] = Path(&RunConfig::ground_truth);
    s["category_raster"] = Path(&RunConfig::category_raster);
    s["out"] = Path(&RunConfig::out);
    s["camera_sensor"] = Text(&RunConfig::camera_sensor);
    s["lidar_sensor"] = Text(&RunConfig::lidar_sensor);
    s["lidar_timestamp"] = Integer(&RunConfig::lidar_timestamp, "lidar_timestamp");
    s["camera_timestamp"] = Integer(&RunConfig::camera_timestamp, "camera_timestamp");
    s["image_width"] = Integer(&RunConfig::image_width, "image_width");
    s["image_height"] = Integer(&RunConfig::image_height, "image_height");
    s["lidar_hz"] = Double(&RunConfig::lidar_hz, "lidar_hz");
    s["camera_hz"] = Double(&RunConfig::camera_hz, "camera_hz");
    s["sweep_duration"] = Double(&RunConfig::sweep_duration, "sweep_duration");
    s["camera_bias"] = Double(&RunConfig::camera_bias, "camera_bias");
    s["duration"] = Double(&RunConfig::duration, "duration");
    s["sweep_index"] = Integer(&RunConfig::sweep_index, "sweep_index");
    s["matching"] = Text(&RunConfig::matching);
    s["speed"] = Double(&RunConfig::speed, "speed");
    s["heading_yaw_deg"] = Double(&RunConfig::heading_yaw_deg, "heading_yaw_deg");
    s["scene"] = Text(&RunConfig::scene);
    s["wall_distance"] = Double(&RunConfig::wall_distance, "wall_distance");
    s["rig"] = Text(&RunConfig::rig);
    s["rotation_sigma"] = Double(&RunConfig::rotation_sigma, "rotation_sigma");
    s["translation_sigma"] = Double(&RunConfig::translation_sigma, "translation_sigma");
    s["jitter_sigma"] = Double(&RunConfig::jitter_sigma, "jitter_sigma");
    s["histogram_bin_width"] =
        Double(&RunConfig::histogram_bin_width, "histogram_bin_width");
    s["grid_size"] = Integer(&RunConfig::grid_size, "grid_size");
    s["channels"] = Integer(&RunConfig::channels, "channels");
    s["shift_x"] = Double(&RunConfig::shift_x, "shift_x");
    s["shift_y"] = Double(&RunConfig::shift_y, "shift_y");
    s["max_offset"] = Double(&RunConfig::max_offset, "max_offset");
    s["hidden_units"] = Integer(&RunConfig::hidden_units, "hidden_units");
    s["steps"] = Integer(&RunConfig::steps, "steps");
    s["learning_rate"] = Double(&RunConfig::learning_rate, "learning_rate");
    s["gradcheck_instances"] =
        Integer(&RunConfig::gradcheck_instances, "gradcheck_instances");
    s["gradcheck_step"] = Double(&RunConfig::gradcheck_step, "gradcheck_step");
    s["gradcheck_corrupt"] = Bool(&RunConfig::gradcheck_corrupt, "gradcheck_corrupt");
    s["seed"] = Integer(&RunConfig::seed, "seed");
    s["threads"] = Integer(&RunConfig::threads, "threads");
    return s;
  }();
  return setters;
}

std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::map<std::string, std::string> ParseKeyValues(std::string_view text) {
  std::map<std::string, std::string> values;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kInvalidArgument,
                  "config line " + std::to_string(line_no) + " lacks '='");
    }
    const std::string key(Trim(line.substr(0, eq)));
    const std::string value(Trim(line.substr(eq + 1)));
    if (!Setters().contains(key)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "unknown config key '" + key + "' on line " +
                      std::to_string(line_no));
    }
    if (!values.emplace(key, value).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate config key '" + key + "'");
    }
  }
  return values;
}

void ApplyKeyValues(const std::map<std::string, std::string>& values,
                    const std::filesystem::path& base_dir, RunConfig& config) {
  for (const auto& [key, value] : values) {
    const auto it = Setters().find(key);
    if (it == Setters().end()) {
      throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
    }
    it->second(value, base_dir, config);
  }
}

void Validate(const RunConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
  };
  require(c.image_width >= 1 && c.image_height >= 1, "image size must be >= 1");
  require(c.lidar_hz > 0.0, "lidar_hz must be > 0");
  require(c.camera_hz > 0.0, "camera_hz must be > 0");
  require(c.sweep_duration >= 0.0 && c.sweep_duration <= 1.0 / c.lidar_hz + 1e-12,
          "sweep_duration must lie in [0, 1 / lidar_hz]");
  require(c.duration > 0.0, "duration must be > 0");
  require(c.matching == "nearest" || c.matching == "sweep_start",
          "matching must be 'nearest' or 'sweep_start'");
  require(c.speed >= 0.0, "speed must be >= 0");
  require(c.scene == "street" || c.scene == "wall",
          "scene must be 'street' or 'wall'");
  require(c.wall_distance > 0.0, "wall_distance must be > 0");
  require(c.rig == "front" || c.rig == "left", "rig must be 'front' or 'left'");
  require(c.rotation_sigma >= 0.0 && c.translation_sigma >= 0.0 &&
              c.jitter_sigma >= 0.0,
          "noise sigmas must be >= 0");
  require(c.histogram_bin_width > 0.0, "histogram_bin_width must be > 0");
  require(c.grid_size >= 2 && c.grid_size <= 4096, "grid_size must be in [2, 4096]");
  require(c.channels >= 1 && c.channels <= 1024, "channels must be in [1, 1024]");
  require(c.max_offset >= 0.0, "max_offset must be >= 0");
  require(c.hidden_units >= 1 && c.hidden_units <= 4096,
          "hidden_units must be in [1, 4096]");
  require(c.steps >= 0, "steps must be >= 0");
  require(c.learning_rate > 0.0, "learning_rate must be > 0");
  require(c.gradcheck_instances >= 1, "gradcheck_instances must be >= 1");
  require(c.gradcheck_step > 0.0, "gradcheck_step must be > 0");
  require(c.threads >= 0 && c.threads <= 1024, "threads must be in [0, 1024]");
}

std::vector<std::string> KnownKeys() {
  std::vector<std::string> keys;
  for (const auto& [key, setter] : Setters()) keys.push_back(key);
  return keys;
}

}  // namespace lidarcam::cli
