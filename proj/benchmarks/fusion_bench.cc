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

#include <vector>

#include <benchmark/benchmark.h>

#include "lidarcam/deform_fusion.h"
#include "lidarcam/random.h"

namespace lidarcam::fusion {
namespace {

constexpr int kSize = 64;
constexpr int kChannels = 16;

std::vector<PixelCoord> RandomRefs(std::size_t n) {
  RngStream rng(5, 0);
  std::vector<PixelCoord> refs(n);
  for (auto& p : refs) p = {rng.Uniform(0, kSize - 1), rng.Uniform(0, kSize - 1)};
  return refs;
}

PointFeatureSet RandomPoints(const std::vector<PixelCoord>& refs) {
  RngStream rng(6, 0);
  PointFeatureSet points;
  points.channels = kChannels;
  points.coords = refs;
  points.values.resize(refs.size() * kChannels);
  for (auto& v : points.values) v = rng.Uniform(-1, 1);
  return points;
}

void BM_Bilinear(benchmark::State& state) {
  const auto grid = SmoothRandomGrid(kSize, kSize, kChannels, 1);
  const auto refs = RandomRefs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(BilinearSample(grid, refs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Bilinear)->Arg(1 << 10)->Arg(1 << 14);

void BM_Forward(benchmark::State& state) {
  const auto grid = SmoothRandomGrid(kSize, kSize, kChannels, 1);
  const auto net = OffsetNetwork::Initialize(kChannels, 32, 4.0, 2);
  const auto learner = TwoDLearner::Initialize(kChannels, 3);
  const auto points = RandomPoints(RandomRefs(static_cast<std::size_t>(state.range(0))));
  FusionTape tape;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tape.Forward(net, learner, grid, points));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1 << 10)->Arg(1 << 14);

void BM_Backward(benchmark::State& state) {
  const auto grid = SmoothRandomGrid(kSize, kSize, kChannels, 1);
  const auto net = OffsetNetwork::Initialize(kChannels, 32, 4.0, 2);
  const auto learner = TwoDLearner::Initialize(kChannels, 3);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto points = RandomPoints(RandomRefs(n));
  FusionTape tape;
  tape.Forward(net, learner, grid, points);
  const std::vector<double> grad(n * 2 * kChannels, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(tape.Backward(grad));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Backward)->Arg(1 << 10)->Arg(1 << 14);

}  // namespace
}  // namespace lidarcam::fusion
