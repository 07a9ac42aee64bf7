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

#include <algorithm>
#include <cctype>
#include <string>

#include "lidarcam/calib_io.h"
#include "lidarcam/error.h"
#include "lidarcam/image.h"

namespace lidarcam {

RgbImage::RgbImage(int w, int h, Rgb fill) : width(w), height(h) {
  if (w < 0 || h < 0) {
    throw Error(ErrorCode::kInvalidArgument, "negative image size");
  }
  bytes.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    bytes[i] = fill[0];
    bytes[i + 1] = fill[1];
    bytes[i + 2] = fill[2];
  }
}

Rgb RgbImage::at(int x, int y) const {
  const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
  return {bytes[o], bytes[o + 1], bytes[o + 2]};
}

void RgbImage::set(int x, int y, Rgb c) {
  const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
  bytes[o] = c[0];
  bytes[o + 1] = c[1];
  bytes[o + 2] = c[2];
}

std::string EncodePpm(const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.append(image.bytes.begin(), image.bytes.end());
  return out;
}

namespace {

// Reads the whitespace-separated header fields of a P5/P6 file.
std::size_t ReadNetpbmHeader(const std::string& bytes, const char* magic,
                             int& width, int& height, int& maxval) {
  if (bytes.size() < 2 || bytes.compare(0, 2, magic) != 0) {
    throw Error(ErrorCode::kMalformedFile,
                std::string("missing ") + magic + " magic");
  }
  std::size_t pos = 2;
  int fields[3] = {0, 0, 0};
  for (int& field : fields) {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    }
    if (start == pos || pos - start > 6) {
      throw Error(ErrorCode::kMalformedFile, "bad netpbm header");
    }
    field = std::stoi(bytes.substr(start, pos - start));
  }
  if (pos >= bytes.size()) {
    throw Error(ErrorCode::kMalformedFile, "netpbm header not terminated");
  }
  width = fields[0];
  height = fields[1];
  maxval = fields[2];
  return pos + 1;
}

}  // namespace

RgbImage DecodePpm(const std::string& bytes) {
  int w = 0, h = 0, maxval = 0;
  const std::size_t offset = ReadNetpbmHeader(bytes, "P6", w, h, maxval);
  if (maxval != 255) {
    throw Error(ErrorCode::kMalformedFile, "only maxval 255 is supported");
  }
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - offset != need) {
    throw Error(ErrorCode::kTruncatedFile, "PPM payload size mismatch");
  }
  RgbImage image(w, h);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end(),
            image.bytes.begin());
  return image;
}

void WritePpm(const std::filesystem::path& path, const RgbImage& image) {
  calib::WriteFileBytes(path, EncodePpm(image));
}

std::string EncodePgm8(int width, int height,
                       const std::vector<std::uint8_t>& values) {
  std::string out = "P5\n" + std::to_string(width) + " " +
                    std::to_string(height) + "\n255\n";
  out.append(values.begin(), values.end());
  return out;
}

std::string EncodePgm16(int width, int height,
                        const std::vector<std::uint16_t>& values) {
  std::string out = "P5\n" + std::to_string(width) + " " +
                    std::to_string(height) + "\n65535\n";
  out.reserve(out.size() + values.size() * 2);
  for (std::uint16_t v : values) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  return out;
}

void WriteCategoryRaster(const std::filesystem::path& path,
                         const CategoryRaster& raster) {
  calib::WriteFileBytes(path,
                        EncodePgm8(raster.width, raster.height, raster.labels));
}

CategoryRaster LoadCategoryRaster(const std::filesystem::path& path) {
  const std::string bytes = calib::ReadTextFile(path);
  int w = 0, h = 0, maxval = 0;
  const std::size_t offset = ReadNetpbmHeader(bytes, "P5", w, h, maxval);
  if (maxval != 255) {
    throw Error(ErrorCode::kMalformedFile,
                "category raster must be an 8-bit PGM");
  }
  CategoryRaster raster(w, h);
  if (bytes.size() - offset != raster.labels.size()) {
    throw Error(ErrorCode::kTruncatedFile, "PGM payload size mismatch");
  }
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end(),
            raster.labels.begin());
  return raster;
}

}  // namespace lidarcam
