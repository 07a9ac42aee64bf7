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

#include <string>
#include <vector>

#include "doctest.h"
#include "lidarcam/error.h"
#include "lidarcam/image.h"
#include "test_util.h"

namespace lidarcam {
namespace {

using testing::ErrorOf;

TEST_SUITE("image_io") {

TEST_CASE("PPM round trip") {
  RgbImage image(3, 2);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 3; ++x) {
      image.set(x, y, {static_cast<std::uint8_t>(x * 40), static_cast<std::uint8_t>(y * 90), 7});
    }
  }
  const std::string bytes = EncodePpm(image);
  CHECK(bytes.size() == 11 + 18);
  const auto back = DecodePpm(bytes);
  CHECK(back.width == 3);
  CHECK(back.bytes == image.bytes);
  CHECK(ErrorOf([] { DecodePpm("P5\n1 1\n255\n\x01"); }) == ErrorCode::kMalformedFile);
  CHECK(ErrorOf([] { DecodePpm("P6\n2 2\n255\n\x01"); }) == ErrorCode::kTruncatedFile);
}

TEST_CASE("PGM encodings") {
  CHECK(EncodePgm8(2, 1, {1, 255}) == std::string("P5\n2 1\n255\n\x01\xff", 13));
  CHECK(EncodePgm16(1, 1, {0x1234}) == std::string("P5\n1 1\n65535\n\x12\x34", 15));
}

TEST_CASE("category raster round trip") {
  const auto dir = testing::ScratchDir("image_io");
  CategoryRaster raster(3, 2);
  raster.labels = {0, 1, 2, 3, 4, 5};
  WriteCategoryRaster(dir / "c.pgm", raster);
  const auto back = LoadCategoryRaster(dir / "c.pgm");
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.labels == raster.labels);
  testing::Spit(dir / "bad.pgm", "P5\n3 2\n255\n\x01");
  CHECK(ErrorOf([&] { LoadCategoryRaster(dir / "bad.pgm"); }).has_value());
}

}  // TEST_SUITE

}  // namespace
}  // namespace lidarcam
