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

// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exit status is 0 only if all of them pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli/config.h"
#include "fd_oracle.h"
#include "generators.h"
#include "lidarcam/analysis.h"
#include "lidarcam/calib_io.h"
#include "lidarcam/deform_fusion.h"
#include "lidarcam/error.h"
#include "lidarcam/format.h"
#include "lidarcam/geometry.h"
#include "lidarcam/random.h"
#include "lidarcam/timing_sim.h"
#include "oracles.h"
#include "test_util.h"

namespace lidarcam {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

oracle::Mat4 MatrixOf(const geometry::RigidTransform& t) {
  const auto& q = t.rotation();
  const auto& p = t.translation();
  return oracle::PoseMatrix(q.w(), q.x(), q.y(), q.z(), p.x(), p.y(), p.z());
}

double MaxDiff(const geometry::RigidTransform& a, const geometry::RigidTransform& b) {
  return (a.ToMatrix() - b.ToMatrix()).cwiseAbs().maxCoeff();
}

Outcome GeometryOracle() {
  RngStream rng(101, 0);
  double worst_px = 0.0, worst_group = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto t = testing::RandomTransform(rng, 20.0);
    const auto k = testing::RandomIntrinsics(rng);
    // Camera-frame point in front of the camera, mapped back to the source.
    const double z = rng.Uniform(0.5, 60.0);
    const Eigen::Vector3d camera(rng.Uniform(-z, z), rng.Uniform(-z, z), z);
    const Eigen::Vector3d p = geometry::Invert(t).Apply(camera);
    const auto got = geometry::ProjectPoint(t.Apply(p), k, 0);
    const auto expected =
        oracle::DenseProject(oracle::IntrinsicMatrix(k.fx, k.fy, k.cx, k.cy), MatrixOf(t),
                             {p.x(), p.y(), p.z()});
    worst_px = std::max({worst_px, std::abs(got.u - expected.u), std::abs(got.v - expected.v)});

    const auto b = testing::RandomTransform(rng, 20.0);
    const auto c = testing::RandomTransform(rng, 20.0);
    worst_group = std::max(
        {worst_group,
         MaxDiff(geometry::Compose(geometry::Compose(t, b), c),
                 geometry::Compose(t, geometry::Compose(b, c))),
         MaxDiff(geometry::Compose(t, geometry::Invert(t)), geometry::RigidTransform{}),
         MaxDiff(geometry::Invert(geometry::Invert(t)), t)});
  }
  return {worst_px < 1e-9 && worst_group < 1e-9,
          "max projection diff " + Num(worst_px) + " px, max group-law diff " +
              Num(worst_group)};
}

Outcome ChainCancellation() {
  RngStream rng(102, 0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::vector<calib::CalibrationRecord> calib = {
        testing::RandomCalibration(rng, "CAM", true),
        testing::RandomCalibration(rng, "LIDAR", false)};
    const auto reference = oracle::Multiply(oracle::RigidInverse(MatrixOf(
                                                geometry::FromCalibration(calib[0]))),
                                            MatrixOf(geometry::FromCalibration(calib[1])));
    const auto poses = testing::RandomPoseLog(rng, 6, -1000000);
    const std::int64_t t =
        poses.front().timestamp +
        static_cast<std::int64_t>(rng.Bits() % static_cast<std::uint64_t>(
                                                   poses.back().timestamp - poses.front().timestamp));
    auto stationary = testing::RandomPoseLog(rng, 6, -1000000);
    for (auto& p : stationary) {
      p.translation = stationary[0].translation;
      p.rotation = stationary[0].rotation;
    }
    for (const auto& chain :
         {geometry::BuildChain(calib, poses, t, t, "CAM", "LIDAR"),
          geometry::BuildChain(calib, stationary, stationary.front().timestamp,
                               stationary.back().timestamp, "CAM", "LIDAR")}) {
      const Eigen::Matrix4d m = chain.ToMatrix();
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) worst = std::max(worst, std::abs(m(r, c) - reference[r][c]));
      }
    }
  }
  return {worst < 1e-9, "max deviation from T_cam<-ego T_ego<-lidar " + Num(worst) +
                            " over 100 pose logs"};
}

std::vector<geometry::ProjectedPoint> ProjectPublished(const sim::SimulationResult& r) {
  const auto chain = geometry::BuildChain(r.calibration, r.ego_poses, r.lidar_timestamp,
                                          r.camera_timestamp, r.camera_name, r.lidar_name);
  return geometry::Project(r.scene.cloud, chain, r.intrinsics);
}

Outcome ZeroCause() {
  sim::EgoTrajectory still;
  still.speed = 0.0;
  // The forward camera sees about a sixth of a sweep; densify so enough land.
  sim::SimulationOptions options;
  options.lidar.rings = 64;
  options.lidar.azimuth_steps = 2160;
  const auto r = sim::Simulate(sim::DefaultStreetScene(), still, {}, {}, options);
  const auto report = analysis::Compare(ProjectPublished(r), r.scene.ground_truth);
  const double worst = report.aggregates ? report.aggregates->max : INFINITY;
  return {report.points.size() >= 10000 && worst < 1e-6,
          "max error " + Num(worst) + " px over " + std::to_string(report.points.size()) +
              " scored points"};
}

Outcome Parallax() {
  sim::EgoTrajectory trajectory;
  trajectory.speed = sim::kFortyKmhInMetersPerSecond;
  sim::SensorSchedule schedule;
  schedule.camera_timestamp_bias = 0.05;
  schedule.lidar_sweep_duration = 0.0;
  sim::SimulationOptions options;
  options.rig = sim::LeftLookingRig();
  const auto r = sim::Simulate(sim::LateralWallScene(10.0), trajectory, schedule, {}, options);
  const auto projected = ProjectPublished(r);
  const auto report = analysis::Compare(projected, r.scene.ground_truth);
  if (!report.aggregates) return {false, "no scored points"};

  // Exact two-pose oracle: the same stored point seen from the ego pose at
  // the sweep and at the true exposure.
  const auto& k = r.intrinsics;
  const auto kmat = oracle::IntrinsicMatrix(k.fx, k.fy, k.cx, k.cy);
  const auto ego_from_lidar = MatrixOf(geometry::FromCalibration(options.rig.lidar));
  const auto camera_from_ego =
      oracle::RigidInverse(MatrixOf(geometry::FromCalibration(options.rig.camera)));
  auto pose_at = [&](std::int64_t t) {
    const double x = trajectory.speed * static_cast<double>(t) * 1e-6;
    return oracle::PoseMatrix(1, 0, 0, 0, x, 0, 0);
  };
  const auto world_from_lidar = oracle::Multiply(pose_at(r.lidar_timestamp), ego_from_lidar);
  const auto seen_at_sweep = oracle::Multiply(
      oracle::Multiply(camera_from_ego, oracle::RigidInverse(pose_at(r.lidar_timestamp))),
      world_from_lidar);
  const auto seen_at_exposure = oracle::Multiply(
      oracle::Multiply(camera_from_ego, oracle::RigidInverse(pose_at(r.scene.exposure_time))),
      world_from_lidar);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : report.points) {
    const auto& p = r.scene.cloud.points[e.index];
    const std::array<double, 3> xyz{p.x, p.y, p.z};
    const auto a = oracle::DenseProject(kmat, seen_at_sweep, xyz);
    const auto b = oracle::DenseProject(kmat, seen_at_exposure, xyz);
    sum += std::hypot(a.u - b.u, a.v - b.v);
    ++n;
  }
  const double exact = sum / static_cast<double>(n);
  const double measured = report.aggregates->mean;
  const double small_angle = 500.0 * trajectory.speed * 0.05 / 10.0;
  const double rel = std::abs(measured - exact) / exact;
  return {rel < 0.02 && std::abs(measured - small_angle) / small_angle < 0.02,
          "mean " + Num(measured) + " px vs two-pose oracle " + Num(exact) +
              " px (rel " + Num(rel) + "), small-angle " + Num(small_angle) + " px"};
}

std::map<std::string, std::string> Summary(const std::string& out) {
  std::map<std::string, std::string> values;
  std::istringstream in(out);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) values[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return values;
}

Outcome WorstCase() {
  const auto dir = testing::ScratchDir("acceptance_worst_case");
  const auto run = testing::Run({"simulate", "--out", (dir / "a").string()});
  const auto still =
      testing::Run({"simulate", "--out", (dir / "b").string(), "--set", "speed=0"});
  auto summary = Summary(run.out);
  if (run.code != 0 || !summary.contains("worst_case_displacement_m") ||
      !summary.contains("published_worst_case_m")) {
    return {false, "simulate did not print the summary lines"};
  }
  const double printed = ParseDouble(summary["worst_case_displacement_m"]).value_or(NAN);
  const double v = sim::kFortyKmhInMetersPerSecond;
  const double enumerated = v * oracle::WorstGapTicks(3, 5, 3, true) / 60.0;
  const double doubled = sim::WorstCaseDisplacement({}, 2 * v);
  const bool linear = std::abs(doubled - 2 * printed) <= 1e-12 * doubled;
  const bool zero = Summary(still.out)["worst_case_displacement_m"] == "0" &&
                    sim::WorstCaseDisplacement({}, 0.0) == 0.0;
  return {std::abs(printed - enumerated) <= 1e-12 * enumerated && linear && zero,
          "worst_case_displacement_m=" + summary["worst_case_displacement_m"] +
              " (enumerated " + Num(enumerated) + "), published_worst_case_m=" +
              summary["published_worst_case_m"] + " (reported, not asserted)"};
}

Outcome Gradcheck() {
  double worst = 0.0;
  std::size_t total = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::size_t checked = 0;
    worst = std::max(worst, testing::FdMaxRelativeError(testing::MakeFdInstance(seed), 1e-5,
                                                        1e-4, &checked));
    total += checked;
  }
  const auto library = fusion::RunGradcheck({});
  return {worst < 1e-4 && library.max_relative_error < 1e-4,
          "max relative error " + Num(worst) + " over " + std::to_string(total) +
              " parameters (built-in check " + Num(library.max_relative_error) + ")"};
}

Outcome ToyRecovery() {
  const auto grid = fusion::SmoothRandomGrid(
      16, 16, 4, DeriveSeed(0, cli::kFusionSeedStream));
  fusion::ToyTrainingOptions options;
  options.seed = DeriveSeed(0, cli::kFusionSeedStream);
  const auto result = fusion::TrainToy(grid, options);
  const double ratio = result.loss_trace.back() / result.loss_trace.front();
  const double miss = std::hypot(result.mean_offset.dx - 1.5, result.mean_offset.dy + 0.8);
  return {ratio < 0.1 && miss < 0.5,
          "final/initial loss " + Num(ratio) + ", recovered (" +
              Num(result.mean_offset.dx) + ", " + Num(result.mean_offset.dy) +
              "), miss " + Num(miss) + " px"};
}

Outcome BilinearExactness() {
  RngStream rng(108, 0);
  double worst = 0.0;
  bool lattice_exact = true;
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 3 + static_cast<int>(rng.Bits() % 20);
    const int w = 3 + static_cast<int>(rng.Bits() % 20);
    const double a = rng.Uniform(-5, 5), b = rng.Uniform(-5, 5), c = rng.Uniform(-5, 5);
    fusion::FeatureGrid grid(h, w, 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) grid.at(y, x, 0) = a + b * x + c * y;
    }
    std::vector<fusion::PixelCoord> coords;
    for (int i = 0; i < 100; ++i) coords.push_back({rng.Uniform(0, w - 1), rng.Uniform(0, h - 1)});
    const auto values = fusion::BilinearSample(grid, coords);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      worst = std::max(worst, std::abs(values[i] - (a + b * coords[i].x + c * coords[i].y)));
    }
    std::vector<fusion::PixelCoord> nodes;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) nodes.push_back({double(x), double(y)});
    }
    const auto at_nodes = fusion::BilinearSample(grid, nodes);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      lattice_exact &= at_nodes[i] == grid.at(static_cast<int>(nodes[i].y),
                                              static_cast<int>(nodes[i].x), 0);
    }
  }
  return {worst <= 1e-12 && lattice_exact,
          "max affine error " + Num(worst) + " at 1000 coordinates, lattice " +
              (lattice_exact ? "exact" : "inexact")};
}

std::string Mutate(std::string s, RngStream& rng) {
  const int ops = 1 + static_cast<int>(rng.Bits() % 4);
  for (int op = 0; op < ops; ++op) {
    const std::size_t pos = s.empty() ? 0 : rng.Bits() % s.size();
    switch (rng.Bits() % 5) {
      case 0:
        if (!s.empty()) s[pos] = static_cast<char>(rng.Bits());
        break;
      case 1:
        s.insert(s.begin() + static_cast<std::ptrdiff_t>(pos), static_cast<char>(rng.Bits()));
        break;
      case 2:
        if (!s.empty()) s.erase(pos, 1 + rng.Bits() % 8);
        break;
      case 3:
        s.resize(pos);
        break;
      default: {
        static const char* tokens[] = {"{", "}", "[", "]", ",", ":", "\"", "1e999",
                                       "-0", "null", "true", "NaN", "1.5", "[]"};
        s.insert(pos, tokens[rng.Bits() % 14]);
      }
    }
  }
  return s;
}

Outcome ParserRobustness() {
  RngStream rng(109, 0);
  std::vector<calib::CalibrationRecord> calibration = {
      testing::RandomCalibration(rng, "LIDAR_TOP", false),
      testing::RandomCalibration(rng, "CAM_FRONT", true)};
  const auto poses = testing::RandomPoseLog(rng, 3, 0);
  calib::PointCloud cloud;
  for (int i = 0; i < 6; ++i) {
    cloud.points.push_back({static_cast<float>(rng.Uniform(-50, 50)),
                            static_cast<float>(rng.Uniform(-50, 50)),
                            static_cast<float>(rng.Uniform(-3, 10)),
                            static_cast<float>(i * 10), static_cast<std::uint16_t>(i)});
  }
  const std::string calib_json = calib::CalibrationToJson(calibration);
  const std::string poses_json = calib::EgoPosesToJson(poses);
  const auto cloud_bytes = calib::EncodePointCloud(cloud);
  const std::string cloud_text(cloud_bytes.begin(), cloud_bytes.end());

  std::size_t structured = 0, accepted = 0, unstructured = 0;
  auto attempt = [&](auto&& fn) {
    try {
      fn();
      ++accepted;
    } catch (const Error&) {
      ++structured;
    } catch (...) {
      ++unstructured;
    }
  };
  constexpr int kMutations = 100000;
  for (int i = 0; i < kMutations; ++i) {
    const std::string c = Mutate(calib_json, rng);
    attempt([&] { calib::ParseCalibration(c); });
    const std::string p = Mutate(poses_json, rng);
    attempt([&] { calib::ParseEgoPoses(p); });
    const std::string b = Mutate(cloud_text, rng);
    attempt([&] {
      calib::DecodePointCloud(std::span<const std::uint8_t>(
          reinterpret_cast<const std::uint8_t*>(b.data()), b.size()));
    });
  }

  const bool round_trip =
      calib::CalibrationToJson(calib::ParseCalibration(calib_json)) == calib_json &&
      calib::EgoPosesToJson(calib::ParseEgoPoses(poses_json)) == poses_json &&
      calib::EncodePointCloud(calib::DecodePointCloud(cloud_bytes)) == cloud_bytes;
  return {unstructured == 0 && round_trip,
          std::to_string(3 * kMutations) + " mutated inputs: " + std::to_string(structured) +
              " structured errors, " + std::to_string(accepted) + " accepted, " +
              std::to_string(unstructured) + " other failures; round trips " +
              (round_trip ? "byte-exact" : "differ")};
}

// Every regular file under `dir`, relative path -> contents.
std::map<std::string, std::string> Tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      files[std::filesystem::relative(entry.path(), dir).string()] =
          testing::Slurp(entry.path());
    }
  }
  return files;
}

Outcome Determinism() {
  const auto root = testing::ScratchDir("acceptance_determinism");
  struct Job {
    std::string name;
    std::vector<std::string> args;
  };
  // simulate runs first: project and analyze read its outputs.
  const std::string sim_cfg = (root / "sim_t1_r0" / "project.cfg").string();
  const std::vector<Job> jobs = {
      {"simulate", {"simulate", "--seed", "7", "--set", "rotation_sigma=0.002", "--set",
                    "translation_sigma=0.01", "--set", "jitter_sigma=0.003"}},
      {"project", {"project", "--config", sim_cfg}},
      {"analyze", {"analyze", "--config", sim_cfg}},
      {"fuse-demo", {"fuse-demo", "--seed", "7", "--set", "steps=200"}},
      {"gradcheck", {"gradcheck", "--seed", "7", "--set", "gradcheck_instances=5"}},
  };
  std::vector<std::string> failures;
  std::size_t compared = 0;
  for (const auto& job : jobs) {
    std::map<std::string, std::string> first;
    std::string first_out;
    for (const char* threads : {"1", "8"}) {
      for (int rerun = 0; rerun < 2; ++rerun) {
        const std::string tag = std::string(job.name == "simulate" ? "sim" : job.name) +
                                "_t" + threads + "_r" + std::to_string(rerun);
        auto args = job.args;
        args.insert(args.end(), {"--threads", threads, "--out", (root / tag).string()});
        const auto run = testing::Run(args);
        if (run.code != 0) {
          failures.push_back(job.name + " exited " + std::to_string(run.code) + ": " + run.err);
          continue;
        }
        std::filesystem::create_directories(root / tag);
        auto files = Tree(root / tag);
        files["<stdout>"] = run.out;
        if (first.empty()) {
          first = files;
        } else if (files != first) {
          failures.push_back(job.name + " differs at threads=" + threads);
        }
        compared += files.size();
      }
    }
  }
  std::string detail = std::to_string(jobs.size()) + " subcommands x (2 runs x threads 1/8), " +
                       std::to_string(compared) + " outputs compared";
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace lidarcam

int main() {
  using lidarcam::Criterion;
  const std::vector<Criterion> criteria = {
      {"geometry oracle equivalence", 1.0, lidarcam::GeometryOracle},
      {"chain cancellation", 1.0, lidarcam::ChainCancellation},
      {"zero-cause alignment", 5.0, lidarcam::ZeroCause},
      {"parallax quantification", 5.0, lidarcam::Parallax},
      {"worst-case displacement report", 1.0, lidarcam::WorstCase},
      {"gradient check", 10.0, lidarcam::Gradcheck},
      {"deformable recovery", 30.0, lidarcam::ToyRecovery},
      {"bilinear exactness", 1.0, lidarcam::BilinearExactness},
      {"parser robustness", 60.0, lidarcam::ParserRobustness},
      {"determinism", 60.0, lidarcam::Determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    lidarcam::Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds < c.budget_seconds;
    const bool pass = outcome.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("[%s] %2zu. %s: %s (%.3f s, budget %.0f s%s)\n", pass ? "PASS" : "FAIL", i + 1,
                c.name, outcome.detail.c_str(), seconds, c.budget_seconds,
                in_time ? "" : ", over budget");
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
