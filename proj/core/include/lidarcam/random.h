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

#ifndef LIDARCAM_RANDOM_H_
#define LIDARCAM_RANDOM_H_

#include <cstdint>

namespace lidarcam {

// Counter-based generator. Every draw is a pure function of
// (seed, stream, counter):
//
//   key  = seed ^ mix64(stream * 0xD1B54A32D192ED03)
//   bits = mix64(key + (counter + 1) * 0x9E3779B97F4A7C15)
//
// where mix64 is the SplitMix64 finalizer. Draws can be taken in any order
// and from any thread without changing results, which is what makes the
// simulator and the training code thread-count invariant.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t Bits(std::uint64_t counter) const;
  // Uniform in [0, 1) with 53 random bits.
  double Uniform(std::uint64_t counter) const;
  double Uniform(std::uint64_t counter, double lo, double hi) const;
  // Standard normal by Box-Muller over the counters 2c and 2c+1.
  double Gaussian(std::uint64_t counter) const;

 private:
  std::uint64_t key_;
};

// Sequential convenience wrapper: hands out consecutive counters.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : rng_(seed, stream) {}

  double Uniform() { return rng_.Uniform(next_++); }
  double Uniform(double lo, double hi) { return rng_.Uniform(next_++, lo, hi); }
  double Gaussian() { return rng_.Gaussian(next_++); }
  std::uint64_t Bits() { return rng_.Bits(next_++); }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

std::uint64_t Mix64(std::uint64_t x);

// Seed splitting rule used by the CLI: one root seed fans out to a
// per-module seed.
std::uint64_t DeriveSeed(std::uint64_t root, std::uint64_t module_id);

}  // namespace lidarcam

#endif  // LIDARCAM_RANDOM_H_
