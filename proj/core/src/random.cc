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

#include "lidarcam/random.h"

#include <cmath>
#include <numbers>

namespace lidarcam {

std::uint64_t Mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t DeriveSeed(std::uint64_t root, std::uint64_t module_id) {
  return Mix64(root + 0x9E3779B97F4A7C15ULL * (module_id + 1));
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(seed ^ Mix64(stream * 0xD1B54A32D192ED03ULL)) {}

std::uint64_t CounterRng::Bits(std::uint64_t counter) const {
  return Mix64(key_ + (counter + 1) * 0x9E3779B97F4A7C15ULL);
}

double CounterRng::Uniform(std::uint64_t counter) const {
  return static_cast<double>(Bits(counter) >> 11) * 0x1.0p-53;
}

double CounterRng::Uniform(std::uint64_t counter, double lo, double hi) const {
  return lo + (hi - lo) * Uniform(counter);
}

double CounterRng::Gaussian(std::uint64_t counter) const {
  // 1 - U lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - Uniform(2 * counter);
  const double u2 = Uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace lidarcam
