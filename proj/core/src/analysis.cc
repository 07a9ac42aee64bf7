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

#include "lidarcam/analysis.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lidarcam/error.h"
#include "lidarcam/format.h"

namespace lidarcam::analysis {

using geometry::ProjectionStatus;

MisalignmentReport Compare(std::span<const geometry::ProjectedPoint> projected,
                           std::span<const sim::GroundTruthPoint> ground_truth,
                           const CategoryRaster* raster) {
  if (projected.size() != ground_truth.size()) {
    throw Error(ErrorCode::kIndexMismatch,
                std::to_string(projected.size()) + " projected points vs " +
                    std::to_string(ground_truth.size()) + " ground-truth rows");
  }
  MisalignmentReport report;
  for (std::size_t i = 0; i < projected.size(); ++i) {
    const auto& p = projected[i];
    if (p.source_index != i) {
      throw Error(ErrorCode::kIndexMismatch,
                  "projected point carries source index " +
                      std::to_string(p.source_index),
                  static_cast<std::int64_t>(i));
    }
    if (p.status == ProjectionStatus::kBehindCamera) {
      ++report.behind_camera;
      continue;
    }
    if (p.status == ProjectionStatus::kOutOfBounds) {
      ++report.out_of_bounds;
      continue;
    }
    const auto& g = ground_truth[i];
    if (!std::isfinite(g.u) || !std::isfinite(g.v)) {
      ++report.unscored;
      continue;
    }
    PointError e;
    e.index = i;
    e.u_err = p.u - g.u;
    e.v_err = p.v - g.v;
    e.err = std::hypot(e.u_err, e.v_err);
    e.category = g.category;
    if (raster != nullptr) {
      const int x = static_cast<int>(std::floor(p.u));
      const int y = static_cast<int>(std::floor(p.v));
      if (x < 0 || y < 0 || x >= raster->width || y >= raster->height) {
        throw Error(ErrorCode::kIndexMismatch,
                    "category raster does not cover the projected image",
                    static_cast<std::int64_t>(i));
      }
      e.cross_category = raster->at(x, y) != g.category;
    }
    report.points.push_back(e);
  }
  report.aggregates = ComputeAggregates(report.points, raster != nullptr);
  return report;
}

std::optional<ErrorAggregates> ComputeAggregates(std::span<const PointError> points,
                                                 bool with_categories) {
  if (points.empty()) return std::nullopt;
  const auto n = static_cast<double>(points.size());
  ErrorAggregates a;
  double sum = 0.0, sum_u = 0.0, sum_v = 0.0;
  std::size_t crossed = 0;
  std::vector<double> sorted;
  sorted.reserve(points.size());
  for (const auto& p : points) {
    sum += p.err;
    sum_u += p.u_err;
    sum_v += p.v_err;
    crossed += p.cross_category ? 1 : 0;
    sorted.push_back(p.err);
  }
  std::sort(sorted.begin(), sorted.end());
  a.mean = sum / n;
  a.mean_u_err = sum_u / n;
  a.mean_v_err = sum_v / n;
  const std::size_t mid = sorted.size() / 2;
  a.median = sorted.size() % 2 == 1 ? sorted[mid]
                                    : 0.5 * (sorted[mid - 1] + sorted[mid]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * n));
  a.p95 = sorted[std::max<std::size_t>(rank, 1) - 1];
  a.max = sorted.back();
  if (with_categories) a.cross_category_fraction = static_cast<double>(crossed) / n;
  return a;
}

std::string ReportCsv(const MisalignmentReport& report) {
  std::string out = "index,u_err,v_err,err,category,cross_category\n";
  for (const auto& p : report.points) {
    out += std::to_string(p.index);
    out += ',';
    out += FormatDouble(p.u_err);
    out += ',';
    out += FormatDouble(p.v_err);
    out += ',';
    out += FormatDouble(p.err);
    out += ',';
    out += std::to_string(p.category);
    out += p.cross_category ? ",1\n" : ",0\n";
  }
  return out;
}

std::vector<HistogramBin> ErrorHistogram(const MisalignmentReport& report,
                                         double bin_width) {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) {
    throw Error(ErrorCode::kInvalidArgument, "bin width must be positive");
  }
  std::vector<HistogramBin> bins;
  for (const auto& p : report.points) {
    const auto k = static_cast<std::size_t>(std::floor(p.err / bin_width));
    if (k >= bins.size()) {
      const std::size_t old = bins.size();
      bins.resize(k + 1);
      for (std::size_t j = old; j <= k; ++j) bins[j].low = static_cast<double>(j) * bin_width;
    }
    ++bins[k].count;
  }
  return bins;
}

std::string HistogramCsv(std::span<const HistogramBin> bins) {
  std::string out = "bin_low,count\n";
  for (const auto& b : bins) {
    out += FormatDouble(b.low);
    out += ',';
    out += std::to_string(b.count);
    out += '\n';
  }
  return out;
}

Palette DefaultPalette() {
  Palette p;
  p.fill({255, 255, 255});
  p[sim::category::kNone] = {0, 0, 0};
  p[sim::category::kRoad] = {128, 64, 128};
  p[sim::category::kBuilding] = {70, 130, 180};
  p[sim::category::kTruck] = {255, 140, 0};
  p[sim::category::kBarrier] = {220, 20, 60};
  p[sim::category::kWall] = {60, 180, 75};
  return p;
}

RgbImage RenderCategories(const CategoryRaster& raster, const Palette& palette) {
  RgbImage image(raster.width, raster.height);
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      const Rgb c = palette[raster.at(x, y)];
      image.set(x, y, {static_cast<std::uint8_t>(c[0] / 3),
                       static_cast<std::uint8_t>(c[1] / 3),
                       static_cast<std::uint8_t>(c[2] / 3)});
    }
  }
  return image;
}

RgbImage DrawOverlay(const RgbImage& image,
                     std::span<const geometry::ProjectedPoint> points,
                     std::span<const std::uint8_t> categories,
                     const Palette& palette) {
  if (categories.size() != points.size()) {
    throw Error(ErrorCode::kIndexMismatch,
                "one category per projected point required");
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].status == ProjectionStatus::kValid) order.push_back(i);
  }
  // Far to near; the nearest (then lowest index) is painted last.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].depth != points[b].depth) return points[a].depth > points[b].depth;
    return a > b;
  });
  RgbImage out = image;
  for (std::size_t i : order) {
    const int px = static_cast<int>(std::floor(points[i].u));
    const int py = static_cast<int>(std::floor(points[i].v));
    const Rgb color = palette[categories[i]];
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const int x = px + dx, y = py + dy;
        if (x >= 0 && y >= 0 && x < out.width && y < out.height) out.set(x, y, color);
      }
    }
  }
  return out;
}

void RenderOverlay(const RgbImage& image,
                   std::span<const geometry::ProjectedPoint> points,
                   std::span<const std::uint8_t> categories,
                   const Palette& palette, const std::filesystem::path& out) {
  WritePpm(out, DrawOverlay(image, points, categories, palette));
}

}  // namespace lidarcam::analysis
