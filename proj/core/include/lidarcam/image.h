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

#ifndef LIDARCAM_IMAGE_H_
#define LIDARCAM_IMAGE_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lidarcam {

using Rgb = std::array<std::uint8_t, 3>;

struct RgbImage {
  int width = 0;
  int height = 0;
  // Row-major, 3 bytes per pixel.
  std::vector<std::uint8_t> bytes;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {0, 0, 0});

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
};

// Per-pixel category id as seen by the camera; 0 means nothing was hit.
struct CategoryRaster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;

  CategoryRaster() = default;
  CategoryRaster(int w, int h) : width(w), height(h),
      labels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
};

// Binary PPM (P6, maxval 255).
std::string EncodePpm(const RgbImage& image);
RgbImage DecodePpm(const std::string& bytes);
void WritePpm(const std::filesystem::path& path, const RgbImage& image);

// Binary PGM (P5). 8-bit for maxval < 256, otherwise 16-bit big-endian.
std::string EncodePgm8(int width, int height,
                       const std::vector<std::uint8_t>& values);
std::string EncodePgm16(int width, int height,
                        const std::vector<std::uint16_t>& values);

void WriteCategoryRaster(const std::filesystem::path& path,
                         const CategoryRaster& raster);
CategoryRaster LoadCategoryRaster(const std::filesystem::path& path);

}  // namespace lidarcam

#endif  // LIDARCAM_IMAGE_H_
