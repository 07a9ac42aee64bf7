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

#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "fd_oracle.h"
#include "lidarcam/deform_fusion.h"
#include "lidarcam/error.h"
#include "lidarcam/random.h"
#include "oracles.h"
#include "test_util.h"

namespace lidarcam::fusion {
namespace {

using testing::ErrorOf;

FeatureGrid TwoByTwo() { return FeatureGrid(2, 2, 1, {0, 1, 2, 3}); }

std::vector<PixelCoord> Coords(std::initializer_list<PixelCoord> list) {
  return std::vector<PixelCoord>(list);
}

// Independent forward pass of the offset network for one reference point.
Offset HandOffset(const OffsetNetwork& net, const FeatureGrid& grid, PixelCoord ref) {
  const int d = grid.channels();
  auto sample = [&](double x, double y, int c) {
    x = std::clamp(x, 0.0, grid.width() - 1.0);
    y = std::clamp(y, 0.0, grid.height() - 1.0);
    const int x0 = std::min(static_cast<int>(std::floor(x)), grid.width() - 2);
    const int y0 = std::min(static_cast<int>(std::floor(y)), grid.height() - 2);
    return oracle::Bilinear(grid.at(y0, x0, c), grid.at(y0, x0 + 1, c),
                            grid.at(y0 + 1, x0, c), grid.at(y0 + 1, x0 + 1, c),
                            x - x0, y - y0);
  };
  std::vector<double> input(2 * d, 0.0);
  for (int c = 0; c < d; ++c) {
    input[c] = sample(ref.x, ref.y, c);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) input[d + c] += sample(ref.x + dx, ref.y + dy, c) / 9.0;
    }
  }
  std::vector<double> hidden(net.hidden.outputs);
  for (int o = 0; o < net.hidden.outputs; ++o) {
    double z = net.hidden.bias[o];
    for (int i = 0; i < 2 * d; ++i) z += net.hidden.w(o, i) * input[i];
    hidden[o] = std::tanh(z);
  }
  double out[2];
  for (int o = 0; o < 2; ++o) {
    double z = net.output.bias[o];
    for (int i = 0; i < net.hidden.outputs; ++i) z += net.output.w(o, i) * hidden[i];
    out[o] = net.max_offset * std::tanh(z);
  }
  return {out[0], out[1]};
}

OffsetNetwork RandomNetwork(RngStream& rng, int channels, int hidden, double max_offset,
                            double scale) {
  auto net = OffsetNetwork::Zero(channels, hidden, max_offset);
  for (auto* layer : {&net.hidden, &net.output}) {
    for (double& w : layer->weight) w = rng.Uniform(-scale, scale);
    for (double& b : layer->bias) b = rng.Uniform(-scale, scale);
  }
  return net;
}

TEST_SUITE("deform_fusion") {

TEST_CASE("bilinear examples") {
  const auto grid = TwoByTwo();
  CHECK(BilinearSample(grid, Coords({{0.5, 0.5}}))[0] == 1.5);
  CHECK(BilinearSample(grid, Coords({{1, 0}}))[0] == 1.0);
  CHECK(BilinearSample(grid, Coords({{1, 1}}))[0] == 3.0);
  CHECK(BilinearSample(grid, Coords({{-5, 0.5}}))[0] == 1.0);
  CHECK(BilinearSample(grid, Coords({{-5, 0.5}}))[0] ==
        BilinearSample(grid, Coords({{0, 0.5}}))[0]);
  CHECK(BilinearSample(grid, Coords({{9, 9}}))[0] == 3.0);
  CHECK(BilinearSample(grid, Coords({{0.25, 0.75}}))[0] ==
        doctest::Approx(oracle::Bilinear(0, 1, 2, 3, 0.25, 0.75)));
  CHECK(ErrorOf([&] { BilinearSample(grid, Coords({{NAN, 0}})); }) ==
        ErrorCode::kNonFiniteValue);
}

TEST_CASE("bilinear reproduces affine fields") {
  RngStream rng(31, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 2 + static_cast<int>(rng.Bits() % 12);
    const int w = 2 + static_cast<int>(rng.Bits() % 12);
    const double a = rng.Uniform(-3, 3), b = rng.Uniform(-3, 3), c = rng.Uniform(-3, 3);
    FeatureGrid grid(h, w, 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) grid.at(y, x, 0) = a + b * x + c * y;
    }
    std::vector<PixelCoord> coords;
    for (int i = 0; i < 50; ++i) coords.push_back({rng.Uniform(0, w - 1), rng.Uniform(0, h - 1)});
    for (int y = 0; y < h; ++y) coords.push_back({double(w - 1), double(y)});
    const auto values = BilinearSample(grid, coords);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      CHECK(std::abs(values[i] - (a + b * coords[i].x + c * coords[i].y)) < 1e-12);
    }
  }
}

TEST_CASE("bilinear is exact at lattice points and thread invariant") {
  RngStream rng(32, 0);
  FeatureGrid grid(7, 9, 3);
  for (double& v : grid.mutable_values()) v = rng.Uniform(-10, 10);
  std::vector<PixelCoord> coords;
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 9; ++x) coords.push_back({double(x), double(y)});
  }
  const auto values = BilinearSample(grid, coords);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      CHECK(values[i * 3 + c] ==
            grid.at(static_cast<int>(coords[i].y), static_cast<int>(coords[i].x), c));
    }
  }
  for (int i = 0; i < 500; ++i) coords.push_back({rng.Uniform(-2, 11), rng.Uniform(-2, 9)});
  CHECK(BilinearSample(grid, coords, 1) == BilinearSample(grid, coords, 5));
}

TEST_CASE("predict_offsets") {
  RngStream rng(33, 0);
  FeatureGrid grid(4, 4, 2);
  for (double& v : grid.mutable_values()) v = rng.Uniform(-1, 1);
  const auto refs = Coords({{1.5, 1.5}, {0.2, 2.7}, {-3, 8}});

  SUBCASE("zero weights") {
    for (const auto& o : PredictOffsets(OffsetNetwork::Zero(2, 6, 4.0), grid, refs)) {
      CHECK(o.dx == 0.0);
      CHECK(o.dy == 0.0);
    }
  }
  SUBCASE("zero max_offset") {
    RngStream wrng(1, 0);
    const auto net = RandomNetwork(wrng, 2, 6, 0.0, 3.0);
    for (const auto& o : PredictOffsets(net, grid, refs)) {
      CHECK(o.dx == 0.0);
      CHECK(o.dy == 0.0);
    }
  }
  SUBCASE("matches an independent forward pass") {
    RngStream wrng(1, 0);
    const auto net = RandomNetwork(wrng, 2, 6, 4.0, 1.0);
    const auto got = PredictOffsets(net, grid, refs);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto expected = HandOffset(net, grid, refs[i]);
      CHECK(std::abs(got[i].dx - expected.dx) < 1e-12);
      CHECK(std::abs(got[i].dy - expected.dy) < 1e-12);
    }
    CHECK((got[0].dx != 0.0 || got[0].dy != 0.0));
  }
  SUBCASE("input width must be twice the channel count") {
    CHECK(ErrorOf([&] { PredictOffsets(OffsetNetwork::Zero(3, 4, 1.0), grid, refs); }) ==
          ErrorCode::kShapeMismatch);
  }
}

TEST_CASE("initialization") {
  const auto net = OffsetNetwork::Initialize(4, 16, 4.0, 1);
  const double bound = 1.0 / std::sqrt(8.0);
  for (double w : net.hidden.weight) CHECK(std::abs(w) <= bound);
  for (double w : net.output.weight) CHECK(w == 0.0);
  const auto again = OffsetNetwork::Initialize(4, 16, 4.0, 1);
  CHECK(again.hidden.weight == net.hidden.weight);
  CHECK(OffsetNetwork::Initialize(4, 16, 4.0, 2).hidden.weight != net.hidden.weight);
}

TEST_CASE("offsets stay within max_offset") {
  RngStream rng(34, 0);
  FeatureGrid grid(5, 5, 2);
  std::vector<PixelCoord> refs;
  for (int i = 0; i < 10; ++i) refs.push_back({rng.Uniform(-2, 7), rng.Uniform(-2, 7)});
  std::size_t checked = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    for (double& v : grid.mutable_values()) v = rng.Uniform(-100, 100);
    const double max_offset = rng.Uniform(0, 10);
    const auto net = RandomNetwork(rng, 2, 3, max_offset, 50.0);
    for (const auto& o : PredictOffsets(net, grid, refs)) {
      if (std::abs(o.dx) > max_offset || std::abs(o.dy) > max_offset) {
        FAIL("offset exceeds max_offset");
      }
      ++checked;
    }
  }
  CHECK(checked == 100000);
}

TEST_CASE("sample_adaptive") {
  RngStream rng(35, 0);
  FeatureGrid grid(8, 8, 3);
  for (double& v : grid.mutable_values()) v = rng.Uniform(-1, 1);
  std::vector<PixelCoord> refs;
  for (int i = 0; i < 40; ++i) refs.push_back({rng.Uniform(0, 7), rng.Uniform(0, 7)});
  refs.push_back({3, 4});

  const auto zero = SampleAdaptive(grid, OffsetNetwork::Zero(3, 4, 2.0), refs);
  CHECK(zero.values == BilinearSample(grid, refs));
  CHECK(zero.channels == 3);
  for (int c = 0; c < 3; ++c) CHECK(zero.row(40)[c] == grid.at(4, 3, c));

  const auto net = RandomNetwork(rng, 3, 4, 2.0, 1.0);
  const auto moved = SampleAdaptive(grid, net, refs);
  const auto offsets = PredictOffsets(net, grid, refs);
  std::vector<PixelCoord> displaced;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    displaced.push_back({refs[i].x + offsets[i].dx, refs[i].y + offsets[i].dy});
    CHECK(moved.coords[i].x == displaced[i].x);
  }
  CHECK(moved.values == BilinearSample(grid, displaced));
}

TEST_CASE("integer shift between grid copies is undone by sampling") {
  const int h = 8, w = 10;
  FeatureGrid original(h, w, 2), shifted(h, w, 2);
  auto field = [](double x, double y, int c) {
    return std::sin(0.7 * x + c) * std::cos(0.3 * y) + 0.1 * x * y;
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 2; ++c) {
        original.at(y, x, c) = field(x, y, c);
        shifted.at(y, x, c) = field(x - 1.0, y, c);
      }
    }
  }
  RngStream rng(36, 0);
  std::vector<PixelCoord> refs, moved;
  for (int i = 0; i < 100; ++i) {
    refs.push_back({rng.Uniform(0, w - 2), rng.Uniform(0, h - 1)});
    moved.push_back({refs.back().x + 1.0, refs.back().y});
  }
  const auto a = BilinearSample(original, refs);
  const auto b = BilinearSample(shifted, moved);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-9);
}

TEST_CASE("fuse") {
  PointFeatureSet image{2, {1, 2}, {{0, 0}}};
  PointFeatureSet point{2, {3, 4}, {{0, 0}}};
  CHECK(Fuse(point, image, TwoDLearner::Zero(2)).values ==
        std::vector<double>{1, 2, 0, 0});
  const auto identity = Fuse(point, image, TwoDLearner::Identity(2));
  CHECK(identity.values == std::vector<double>{1, 2, 3, 4});
  CHECK(identity.channels == 4);

  PointFeatureSet wide{3, {1, 2, 3}, {{0, 0}}};
  CHECK(ErrorOf([&] { Fuse(point, wide, TwoDLearner::Zero(2)); }) ==
        ErrorCode::kShapeMismatch);
  CHECK(ErrorOf([&] { Fuse(point, image, TwoDLearner::Zero(3)); }) ==
        ErrorCode::kShapeMismatch);
  PointFeatureSet two{2, {1, 2, 3, 4}, {{0, 0}, {1, 1}}};
  CHECK(ErrorOf([&] { Fuse(point, two, TwoDLearner::Zero(2)); }) ==
        ErrorCode::kShapeMismatch);
}

TEST_CASE("fuse channel slices") {
  RngStream rng(37, 0);
  const int d = 5, n = 30;
  PointFeatureSet image{d, {}, {}}, point{d, {}, {}};
  for (int i = 0; i < n; ++i) {
    image.coords.push_back({0, 0});
    point.coords.push_back({0, 0});
    for (int c = 0; c < d; ++c) {
      image.values.push_back(rng.Uniform(-1, 1));
      point.values.push_back(rng.Uniform(-1, 1));
    }
  }
  const auto learner = TwoDLearner::Initialize(d, 4);
  const auto fused = Fuse(point, image, learner, 3);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c) {
      CHECK(fused.values[i * 2 * d + c] == image.values[i * d + c]);
      double z = learner.layer.bias[c];
      for (int k = 0; k < d; ++k) z += learner.layer.w(c, k) * point.values[i * d + k];
      CHECK(std::abs(fused.values[i * 2 * d + d + c] - std::tanh(z)) < 1e-15);
    }
  }
}

TEST_CASE("backward basics") {
  FusionTape tape;
  CHECK_FALSE(tape.has_forward_state());
  CHECK(ErrorOf([&] { tape.Backward(std::vector<double>{}); }) ==
        ErrorCode::kNoForwardState);

  auto inst = testing::MakeFdInstance(5);
  tape.Forward(inst.net, inst.learner, inst.grid, inst.points);
  CHECK(tape.has_forward_state());
  const auto zero = tape.Backward(std::vector<double>(inst.upstream.size(), 0.0));
  auto all_zero = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  CHECK(all_zero(zero.grid));
  CHECK(all_zero(zero.point_features));
  CHECK(all_zero(zero.offset_net.hidden.weight));
  CHECK(all_zero(zero.offset_net.output.bias));
  CHECK(all_zero(zero.learner.layer.weight));
  CHECK(ErrorOf([&] { tape.Backward(std::vector<double>(3, 0.0)); }) ==
        ErrorCode::kShapeMismatch);
}

TEST_CASE("grid gradient at a lattice sample hits one node") {
  FeatureGrid grid(5, 5, 2);
  RngStream rng(38, 0);
  for (double& v : grid.mutable_values()) v = rng.Uniform(-1, 1);
  PointFeatureSet points{2, {0.3, -0.2}, {{2, 3}}};
  FusionTape tape;
  tape.Forward(OffsetNetwork::Zero(2, 3, 1.0), TwoDLearner::Zero(2), grid, points);
  const auto grads = tape.Backward(std::vector<double>{1.0, 1.0, 0.0, 0.0});
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      for (int c = 0; c < 2; ++c) {
        CHECK(grads.grid[grid.Index(y, x, c)] == ((x == 2 && y == 3) ? 1.0 : 0.0));
      }
    }
  }
}

TEST_CASE("analytic gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::size_t checked = 0;
    const double err = testing::FdMaxRelativeError(testing::MakeFdInstance(seed), 1e-5,
                                                   1e-4, &checked);
    CAPTURE(seed);
    CHECK(err < 1e-4);
    CHECK(checked > 100);
  }
}

TEST_CASE("backward is thread invariant") {
  auto inst = testing::MakeFdInstance(9, 3, 5, 200);
  FusionTape a, b;
  a.Forward(inst.net, inst.learner, inst.grid, inst.points, 1);
  b.Forward(inst.net, inst.learner, inst.grid, inst.points, 6);
  CHECK(a.output().values == b.output().values);
  const auto ga = a.Backward(inst.upstream, 1);
  const auto gb = b.Backward(inst.upstream, 6);
  CHECK(ga.grid == gb.grid);
  CHECK(ga.point_features == gb.point_features);
  CHECK(ga.offset_net.hidden.weight == gb.offset_net.hidden.weight);
  CHECK(ga.offset_net.output.weight == gb.offset_net.output.weight);
  CHECK(ga.learner.layer.weight == gb.learner.layer.weight);
}

TEST_CASE("RunGradcheck") {
  const auto report = RunGradcheck({});
  CHECK(report.max_relative_error < 1e-4);
  CHECK(report.parameters_checked > 1000);
  GradcheckOptions corrupt;
  corrupt.corrupt_gradient = true;
  CHECK(RunGradcheck(corrupt).max_relative_error > 1e-4);
  CHECK(GradientRelativeError(0.0, 0.0) == 0.0);
  CHECK(GradientRelativeError(1e-6, 0.0) == doctest::Approx(1e-2));
  CHECK(GradientRelativeError(2.0, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("toy training with zero shift is a no-op") {
  const auto grid = SmoothRandomGrid(16, 16, 4, 3);
  ToyTrainingOptions options;
  options.true_shift = {0.0, 0.0};
  options.steps = 20;
  const auto result = TrainToy(grid, options);
  CHECK(result.loss_trace.size() == 21);
  CHECK(result.loss_trace.front() == 0.0);
  CHECK(result.loss_trace.back() == 0.0);
  CHECK(result.mean_offset.dx == 0.0);
  CHECK(result.mean_offset.dy == 0.0);
  const auto initial = OffsetNetwork::Initialize(4, 16, 4.0, 1);
  CHECK(result.network.hidden.weight == initial.hidden.weight);
}

TEST_CASE("toy training recovers the shift") {
  const auto grid = SmoothRandomGrid(16, 16, 4, 1);
  const auto result = TrainToy(grid, {});
  CHECK(result.loss_trace.size() == 501);
  CHECK(result.loss_trace.back() < 0.1 * result.loss_trace.front());
  CHECK(std::hypot(result.mean_offset.dx - 1.5, result.mean_offset.dy + 0.8) < 0.5);
}

TEST_CASE("toy training is thread invariant") {
  const auto grid = SmoothRandomGrid(16, 16, 4, 2);
  ToyTrainingOptions options;
  options.steps = 30;
  const auto one = TrainToy(grid, options);
  options.threads = 4;
  const auto four = TrainToy(grid, options);
  CHECK(one.loss_trace == four.loss_trace);
  CHECK(EncodeCheckpoint(one.network) == EncodeCheckpoint(four.network));
}

TEST_CASE("toy training errors") {
  const auto grid = SmoothRandomGrid(16, 16, 4, 1);
  ToyTrainingOptions options;
  options.learning_rate = 1e6;
  CHECK(ErrorOf([&] { TrainToy(grid, options); }) == ErrorCode::kDivergedLoss);
  options = {};
  options.true_shift = {5.0, 0.0};
  CHECK(ErrorOf([&] { TrainToy(grid, options); }) == ErrorCode::kInvalidArgument);
  CHECK(ErrorOf([&] { TrainToy(FeatureGrid(8, 8, 1), {}); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("feature grid validation") {
  FeatureGrid grid(2, 2, 1);
  grid.at(1, 1, 0) = NAN;
  CHECK(ErrorOf([&] { grid.Validate(); }) == ErrorCode::kNonFiniteValue);
  CHECK(ErrorOf([] { FeatureGrid(2, 2, 1, std::vector<double>(3)); }) ==
        ErrorCode::kShapeMismatch);
  CHECK(ErrorOf([] { FeatureGrid(2, 2, 0); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("checkpoint round trip") {
  RngStream rng(39, 0);
  const auto net = RandomNetwork(rng, 3, 7, 2.5, 1.0);
  const auto bytes = EncodeCheckpoint(net);
  CHECK(std::memcmp(bytes.data(), "LCON", 4) == 0);
  const std::size_t params = net.hidden.ParameterCount() + net.output.ParameterCount();
  CHECK(bytes.size() == 4 + 4 + 4 + 2 * 8 + 4 + 4 * params);
  const auto back = DecodeCheckpoint(bytes);
  CHECK(back.max_offset == 2.5);
  CHECK(back.hidden.inputs == 6);
  CHECK(back.hidden.outputs == 7);
  for (std::size_t k = 0; k < net.hidden.weight.size(); ++k) {
    CHECK(back.hidden.weight[k] == static_cast<double>(static_cast<float>(net.hidden.weight[k])));
  }
  CHECK(EncodeCheckpoint(back) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK(ErrorOf([&] { DecodeCheckpoint(bad); }) == ErrorCode::kMalformedFile);
  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 1);
  CHECK(ErrorOf([&] { DecodeCheckpoint(cut); }) == ErrorCode::kTruncatedFile);
  auto longer = bytes;
  longer.push_back(0);
  CHECK(ErrorOf([&] { DecodeCheckpoint(longer); }) == ErrorCode::kMalformedFile);
}

TEST_CASE("loss trace CSV") {
  CHECK(LossTraceCsv(std::vector<double>{0.5, 0.25}) == "step,loss\n0,0.5\n1,0.25\n");
}

}  // TEST_SUITE

}  // namespace
}  // namespace lidarcam::fusion
