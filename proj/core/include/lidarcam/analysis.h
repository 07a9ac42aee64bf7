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

#ifndef LIDARCAM_ANALYSIS_H_
#define LIDARCAM_ANALYSIS_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lidarcam/geometry.h"
#include "lidarcam/image.h"
#include "lidarcam/timing_sim.h"

namespace lidarcam::analysis {

struct PointError {
  std::size_t index = 0;
  double u_err = 0.0;  // projected - ground truth
  double v_err = 0.0;
  double err = 0.0;    // euclidean, pixels
  std::uint8_t category = 0;
  // The projected pixel shows a different category than the point's own.
  bool cross_category = false;
};

struct ErrorAggregates {
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;  // nearest rank
  double max = 0.0;
  double mean_u_err = 0.0;
  double mean_v_err = 0.0;
  // Present only when a category raster was supplied.
  std::optional<double> cross_category_fraction;
};

struct MisalignmentReport {
  std::vector<PointError> points;
  // Absent when no point was scored.
  std::optional<ErrorAggregates> aggregates;
  std::size_t behind_camera = 0;
  std::size_t out_of_bounds = 0;
  // Valid projections whose ground-truth pixel is undefined.
  std::size_t unscored = 0;
};

// Scores Valid projections against the index-aligned ground truth.
MisalignmentReport Compare(std::span<const geometry::ProjectedPoint> projected,
                           std::span<const sim::GroundTruthPoint> ground_truth,
                           const CategoryRaster* raster = nullptr);

std::optional<ErrorAggregates> ComputeAggregates(
    std::span<const PointError> points, bool with_categories);

// index,u_err,v_err,err,category,cross_category
std::string ReportCsv(const MisalignmentReport& report);

struct HistogramBin {
  double low = 0.0;
  std::size_t count = 0;
};

// Contiguous bins [k w, (k+1) w) from 0 up to the largest error.
std::vector<HistogramBin> ErrorHistogram(const MisalignmentReport& report,
                                         double bin_width);
// bin_low,count
std::string HistogramCsv(std::span<const HistogramBin> bins);

using Palette = std::array<Rgb, 256>;
Palette DefaultPalette();

// Darkened category colors, used as the backdrop for overlays.
RgbImage RenderCategories(const CategoryRaster& raster, const Palette& palette);

// Paints a 2x2 block at each Valid point's pixel in its category color; on
// overlap the nearest point wins.
RgbImage DrawOverlay(const RgbImage& image,
                     std::span<const geometry::ProjectedPoint> points,
                     std::span<const std::uint8_t> categories,
                     const Palette& palette);

void RenderOverlay(const RgbImage& image,
                   std::span<const geometry::ProjectedPoint> points,
                   std::span<const std::uint8_t> categories,
                   const Palette& palette, const std::filesystem::path& out);

}  // namespace lidarcam::analysis

#endif  // LIDARCAM_ANALYSIS_H_
