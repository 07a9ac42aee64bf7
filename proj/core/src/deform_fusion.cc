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

#include "lidarcam/deform_fusion.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

#include "lidarcam/calib_io.h"
#include "lidarcam/error.h"
#include "lidarcam/format.h"
#include "lidarcam/parallel.h"
#include "lidarcam/random.h"

namespace lidarcam::fusion {

namespace {

constexpr std::size_t kPointBlock = 32;
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[4] = {'L', 'C', 'O', 'N'};

// Interpolation cell along one axis.
struct AxisCell {
  int lo = 0;
  int hi = 0;
  double frac = 0.0;
  // False when the coordinate was clamped: the sample does not move with it.
  bool differentiable = false;
};

AxisCell MakeAxisCell(double coord, int size) {
  if (size == 1) return {0, 0, 0.0, false};
  const double last = static_cast<double>(size - 1);
  AxisCell cell;
  cell.differentiable = coord >= 0.0 && coord <= last;
  const double c = std::clamp(coord, 0.0, last);
  cell.lo = std::min(static_cast<int>(std::floor(c)), size - 2);
  cell.hi = cell.lo + 1;
  cell.frac = c - cell.lo;
  return cell;
}

struct Stencil {
  AxisCell x;
  AxisCell y;
};

Stencil MakeStencil(const FeatureGrid& grid, PixelCoord p) {
  return {MakeAxisCell(p.x, grid.width()), MakeAxisCell(p.y, grid.height())};
}

void SampleInto(const FeatureGrid& grid, const Stencil& s, double* out) {
  const double wx1 = s.x.frac, wx0 = 1.0 - wx1;
  const double wy1 = s.y.frac, wy0 = 1.0 - wy1;
  for (int c = 0; c < grid.channels(); ++c) {
    const double top = wx0 * grid.at(s.y.lo, s.x.lo, c) + wx1 * grid.at(s.y.lo, s.x.hi, c);
    const double bottom =
        wx0 * grid.at(s.y.hi, s.x.lo, c) + wx1 * grid.at(s.y.hi, s.x.hi, c);
    out[c] = wy0 * top + wy1 * bottom;
  }
}

// Adds upstream[c] spread over the four stencil nodes into grid_grad.
void ScatterGrid(const FeatureGrid& grid, const Stencil& s,
                 const double* upstream, double scale, double* grid_grad) {
  const double wx1 = s.x.frac, wx0 = 1.0 - wx1;
  const double wy1 = s.y.frac, wy0 = 1.0 - wy1;
  for (int c = 0; c < grid.channels(); ++c) {
    const double g = upstream[c] * scale;
    grid_grad[grid.Index(s.y.lo, s.x.lo, c)] += wy0 * wx0 * g;
    grid_grad[grid.Index(s.y.lo, s.x.hi, c)] += wy0 * wx1 * g;
    grid_grad[grid.Index(s.y.hi, s.x.lo, c)] += wy1 * wx0 * g;
    grid_grad[grid.Index(s.y.hi, s.x.hi, c)] += wy1 * wx1 * g;
  }
}

// d(sum_c upstream[c] * sample_c) / d(x, y).
PixelCoord CoordGradient(const FeatureGrid& grid, const Stencil& s,
                         const double* upstream) {
  PixelCoord g;
  const double fx = s.x.frac, fy = s.y.frac;
  for (int c = 0; c < grid.channels(); ++c) {
    const double f00 = grid.at(s.y.lo, s.x.lo, c);
    const double f01 = grid.at(s.y.lo, s.x.hi, c);
    const double f10 = grid.at(s.y.hi, s.x.lo, c);
    const double f11 = grid.at(s.y.hi, s.x.hi, c);
    if (s.x.differentiable) {
      g.x += upstream[c] * ((1.0 - fy) * (f01 - f00) + fy * (f11 - f10));
    }
    if (s.y.differentiable) {
      g.y += upstream[c] * ((1.0 - fx) * (f10 - f00) + fx * (f11 - f01));
    }
  }
  return g;
}

constexpr int kNeighborhood = 9;
constexpr int kNeighborDx[kNeighborhood] = {-1, 0, 1, -1, 0, 1, -1, 0, 1};
constexpr int kNeighborDy[kNeighborhood] = {-1, -1, -1, 0, 0, 0, 1, 1, 1};

// Fills the 2D-wide network input for one reference point.
void NetworkInput(const FeatureGrid& grid, PixelCoord ref, double* input) {
  const int d = grid.channels();
  SampleInto(grid, MakeStencil(grid, ref), input);
  std::vector<double> tmp(d);
  double* mean = input + d;
  std::fill(mean, mean + d, 0.0);
  for (int k = 0; k < kNeighborhood; ++k) {
    const PixelCoord p{ref.x + kNeighborDx[k], ref.y + kNeighborDy[k]};
    SampleInto(grid, MakeStencil(grid, p), tmp.data());
    for (int c = 0; c < d; ++c) mean[c] += tmp[c];
  }
  for (int c = 0; c < d; ++c) mean[c] /= kNeighborhood;
}

void DenseForward(const DenseLayer& layer, const double* in, double* out) {
  for (int o = 0; o < layer.outputs; ++o) {
    double acc = layer.bias[o];
    for (int i = 0; i < layer.inputs; ++i) acc += layer.w(o, i) * in[i];
    out[o] = acc;
  }
}

// Accumulates parameter gradients and writes dL/d(input).
void DenseBackward(const DenseLayer& layer, const double* in,
                   const double* grad_out, DenseLayer& grad,
                   double* grad_in) {
  if (grad_in != nullptr) std::fill(grad_in, grad_in + layer.inputs, 0.0);
  for (int o = 0; o < layer.outputs; ++o) {
    const double g = grad_out[o];
    grad.bias[o] += g;
    for (int i = 0; i < layer.inputs; ++i) {
      grad.w(o, i) += g * in[i];
      if (grad_in != nullptr) grad_in[i] += layer.w(o, i) * g;
    }
  }
}

struct NetworkPass {
  std::vector<double> hidden;
  double squashed[2] = {0.0, 0.0};
  Offset offset;
};

NetworkPass RunNetwork(const OffsetNetwork& net, const double* input) {
  NetworkPass pass;
  pass.hidden.resize(net.hidden.outputs);
  DenseForward(net.hidden, input, pass.hidden.data());
  for (double& h : pass.hidden) h = std::tanh(h);
  double z[2];
  DenseForward(net.output, pass.hidden.data(), z);
  pass.squashed[0] = std::tanh(z[0]);
  pass.squashed[1] = std::tanh(z[1]);
  pass.offset = {net.max_offset * pass.squashed[0],
                 net.max_offset * pass.squashed[1]};
  return pass;
}

void CheckNetworkShape(const OffsetNetwork& net, const FeatureGrid& grid) {
  net.Validate();
  if (net.input_width() != 2 * grid.channels()) {
    throw Error(ErrorCode::kShapeMismatch,
                "offset network expects " + std::to_string(net.input_width()) +
                    " inputs but the grid provides 2 x " +
                    std::to_string(grid.channels()));
  }
}

void RequireFiniteCoords(std::span<const PixelCoord> coords) {
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!std::isfinite(coords[i].x) || !std::isfinite(coords[i].y)) {
      throw Error(ErrorCode::kNonFiniteValue, "non-finite sample coordinate",
                  static_cast<std::int64_t>(i));
    }
  }
}

void UniformFill(std::vector<double>& values, double bound, RngStream& rng) {
  for (double& v : values) v = rng.Uniform(-bound, bound);
}

void AddInto(DenseLayer& acc, const DenseLayer& part) {
  for (std::size_t i = 0; i < acc.weight.size(); ++i) acc.weight[i] += part.weight[i];
  for (std::size_t i = 0; i < acc.bias.size(); ++i) acc.bias[i] += part.bias[i];
}

FusionGradients ZeroGradients(const OffsetNetwork& net, const TwoDLearner& learner,
                              const FeatureGrid& grid, std::size_t points) {
  FusionGradients g;
  g.offset_net = OffsetNetwork::Zero(grid.channels(), net.hidden.outputs, 0.0);
  g.learner.layer = DenseLayer(learner.layer.inputs, learner.layer.outputs);
  g.learner.activation = learner.activation;
  g.grid.assign(grid.values().size(), 0.0);
  g.point_features.assign(points * static_cast<std::size_t>(grid.channels()), 0.0);
  return g;
}

void WriteU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void WriteF32(std::vector<std::uint8_t>& out, double v) {
  WriteU32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t U32() {
    if (pos_ + 4 > bytes_.size()) {
      throw Error(ErrorCode::kTruncatedFile, "checkpoint ends early");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  double F32() {
    const float f = std::bit_cast<float>(U32());
    if (!std::isfinite(f)) {
      throw Error(ErrorCode::kNonFiniteValue, "non-finite checkpoint value");
    }
    return f;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

FeatureGrid::FeatureGrid(int height, int width, int channels, int layer)
    : FeatureGrid(height, width, channels,
                  std::vector<double>(static_cast<std::size_t>(std::max(height, 0)) *
                                          std::max(width, 0) * std::max(channels, 0),
                                      0.0),
                  layer) {}

FeatureGrid::FeatureGrid(int height, int width, int channels,
                         std::vector<double> values, int layer)
    : height_(height), width_(width), channels_(channels), layer_(layer),
      values_(std::move(values)) {
  if (height < 1 || width < 1 || channels < 1) {
    throw Error(ErrorCode::kShapeMismatch,
                "feature grid needs H, W, D >= 1");
  }
  if (values_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw Error(ErrorCode::kShapeMismatch,
                "feature grid value count does not match H x W x D");
  }
}

void FeatureGrid::Validate() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw Error(ErrorCode::kNonFiniteValue, "non-finite grid value",
                  static_cast<std::int64_t>(i));
    }
  }
}

OffsetNetwork OffsetNetwork::Zero(int channels, int hidden_units,
                                  double max_offset) {
  OffsetNetwork net;
  net.hidden = DenseLayer(2 * channels, hidden_units);
  net.output = DenseLayer(hidden_units, 2);
  net.max_offset = max_offset;
  return net;
}

OffsetNetwork OffsetNetwork::Initialize(int channels, int hidden_units,
                                        double max_offset, std::uint64_t seed) {
  OffsetNetwork net = Zero(channels, hidden_units, max_offset);
  RngStream rng(seed, 0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(net.hidden.inputs));
  UniformFill(net.hidden.weight, bound, rng);
  UniformFill(net.hidden.bias, bound, rng);
  return net;
}

void OffsetNetwork::Validate() const {
  if (hidden.inputs < 2 || hidden.outputs < 1 || output.inputs != hidden.outputs ||
      output.outputs != 2 ||
      hidden.weight.size() != static_cast<std::size_t>(hidden.inputs) * hidden.outputs ||
      hidden.bias.size() != static_cast<std::size_t>(hidden.outputs) ||
      output.weight.size() != static_cast<std::size_t>(output.inputs) * 2 ||
      output.bias.size() != 2) {
    throw Error(ErrorCode::kShapeMismatch, "inconsistent offset network layers");
  }
  if (!std::isfinite(max_offset) || max_offset < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "max_offset must be finite and >= 0");
  }
}

TwoDLearner TwoDLearner::Identity(int channels) {
  TwoDLearner learner = Zero(channels);
  for (int i = 0; i < channels; ++i) learner.layer.w(i, i) = 1.0;
  learner.activation = Activation::kIdentity;
  return learner;
}

TwoDLearner TwoDLearner::Zero(int channels) {
  TwoDLearner learner;
  learner.layer = DenseLayer(channels, channels);
  return learner;
}

TwoDLearner TwoDLearner::Initialize(int channels, std::uint64_t seed) {
  TwoDLearner learner = Zero(channels);
  RngStream rng(seed, 1);
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  UniformFill(learner.layer.weight, bound, rng);
  UniformFill(learner.layer.bias, bound, rng);
  return learner;
}

void TwoDLearner::Validate() const {
  if (layer.inputs < 1 || layer.inputs != layer.outputs ||
      layer.weight.size() != static_cast<std::size_t>(layer.inputs) * layer.outputs ||
      layer.bias.size() != static_cast<std::size_t>(layer.outputs)) {
    throw Error(ErrorCode::kShapeMismatch, "2D learner must be a square D x D layer");
  }
}

std::vector<double> BilinearSample(const FeatureGrid& grid,
                                   std::span<const PixelCoord> coords,
                                   int threads) {
  RequireFiniteCoords(coords);
  const auto d = static_cast<std::size_t>(grid.channels());
  std::vector<double> out(coords.size() * d);
  ParallelForBlocks(coords.size(), 1024, threads,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                      for (std::size_t i = begin; i < end; ++i) {
                        SampleInto(grid, MakeStencil(grid, coords[i]),
                                   out.data() + i * d);
                      }
                    });
  return out;
}

std::vector<Offset> PredictOffsets(const OffsetNetwork& net,
                                   const FeatureGrid& grid,
                                   std::span<const PixelCoord> refs,
                                   int threads) {
  CheckNetworkShape(net, grid);
  RequireFiniteCoords(refs);
  std::vector<Offset> offsets(refs.size());
  ParallelForBlocks(refs.size(), 256, threads,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                      std::vector<double> input(net.input_width());
                      for (std::size_t i = begin; i < end; ++i) {
                        NetworkInput(grid, refs[i], input.data());
                        offsets[i] = RunNetwork(net, input.data()).offset;
                      }
                    });
  return offsets;
}

PointFeatureSet SampleAdaptive(const FeatureGrid& grid, const OffsetNetwork& net,
                               std::span<const PixelCoord> refs, int threads) {
  const auto offsets = PredictOffsets(net, grid, refs, threads);
  PointFeatureSet out;
  out.channels = grid.channels();
  out.coords.resize(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    out.coords[i] = {refs[i].x + offsets[i].dx, refs[i].y + offsets[i].dy};
  }
  out.values = BilinearSample(grid, out.coords, threads);
  return out;
}

PointFeatureSet Fuse(const PointFeatureSet& point_features,
                     const PointFeatureSet& image_features,
                     const TwoDLearner& learner, int threads) {
  learner.Validate();
  const int d = point_features.channels;
  if (d != image_features.channels || point_features.size() != image_features.size() ||
      learner.layer.inputs != d ||
      point_features.values.size() != point_features.size() * d ||
      image_features.values.size() != image_features.size() * d) {
    throw Error(ErrorCode::kShapeMismatch,
                "fusion inputs must share N and D with the learner");
  }
  PointFeatureSet out;
  out.channels = 2 * d;
  out.coords = point_features.coords;
  out.values.resize(point_features.size() * 2 * d);
  const auto ud = static_cast<std::size_t>(d);
  ParallelForBlocks(point_features.size(), 1024, threads,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                      for (std::size_t i = begin; i < end; ++i) {
                        double* row = out.values.data() + i * 2 * ud;
                        std::copy_n(image_features.values.data() + i * ud, ud, row);
                        DenseForward(learner.layer,
                                     point_features.values.data() + i * ud, row + ud);
                        if (learner.activation == Activation::kTanh) {
                          for (std::size_t c = 0; c < ud; ++c) {
                            row[ud + c] = std::tanh(row[ud + c]);
                          }
                        }
                      }
                    });
  return out;
}

const PointFeatureSet& FusionTape::Forward(const OffsetNetwork& net,
                                           const TwoDLearner& learner,
                                           const FeatureGrid& grid,
                                           const PointFeatureSet& point_features,
                                           int threads) {
  CheckNetworkShape(net, grid);
  learner.Validate();
  const int d = grid.channels();
  if (point_features.channels != d || learner.layer.inputs != d ||
      point_features.values.size() != point_features.size() * d) {
    throw Error(ErrorCode::kShapeMismatch,
                "point features, learner and grid must share D");
  }
  RequireFiniteCoords(point_features.coords);

  recorded_ = false;
  net_ = net;
  learner_ = learner;
  grid_ = grid;
  points_ = point_features;

  const std::size_t n = point_features.size();
  const auto ud = static_cast<std::size_t>(d);
  const auto in_width = static_cast<std::size_t>(net.input_width());
  const auto hidden_units = static_cast<std::size_t>(net.hidden.outputs);
  net_input_.assign(n * in_width, 0.0);
  hidden_.assign(n * hidden_units, 0.0);
  squashed_.assign(n * 2, 0.0);
  offsets_.assign(n, Offset{});

  PointFeatureSet image;
  image.channels = d;
  image.coords.resize(n);
  ParallelForBlocks(n, kPointBlock, threads,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                      for (std::size_t i = begin; i < end; ++i) {
                        double* input = net_input_.data() + i * in_width;
                        NetworkInput(grid_, points_.coords[i], input);
                        const NetworkPass pass = RunNetwork(net_, input);
                        std::copy(pass.hidden.begin(), pass.hidden.end(),
                                  hidden_.begin() + static_cast<std::ptrdiff_t>(i * hidden_units));
                        squashed_[2 * i] = pass.squashed[0];
                        squashed_[2 * i + 1] = pass.squashed[1];
                        offsets_[i] = pass.offset;
                        image.coords[i] = {points_.coords[i].x + pass.offset.dx,
                                           points_.coords[i].y + pass.offset.dy};
                      }
                    });
  image.values = BilinearSample(grid_, image.coords, threads);
  output_ = Fuse(points_, image, learner_, threads);
  learner_out_.resize(n * ud);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(output_.values.data() + i * 2 * ud + ud, ud,
                learner_out_.data() + i * ud);
  }
  recorded_ = true;
  return output_;
}

FusionGradients FusionTape::Backward(std::span<const double> output_grad,
                                     int threads) const {
  if (!recorded_) {
    throw Error(ErrorCode::kNoForwardState,
                "Backward called before any Forward pass");
  }
  const std::size_t n = points_.size();
  const int d = grid_.channels();
  const auto ud = static_cast<std::size_t>(d);
  if (output_grad.size() != n * 2 * ud) {
    throw Error(ErrorCode::kShapeMismatch,
                "output gradient must be N x 2D");
  }
  const auto in_width = static_cast<std::size_t>(net_.input_width());
  const auto hidden_units = static_cast<std::size_t>(net_.hidden.outputs);

  // Per-block partial sums merged in block order: identical for any thread
  // count.
  const std::size_t blocks = BlockCount(n, kPointBlock);
  std::vector<FusionGradients> partial(
      blocks, ZeroGradients(net_, learner_, grid_, 0));
  FusionGradients total = ZeroGradients(net_, learner_, grid_, n);

  ParallelForBlocks(n, kPointBlock, threads, [&](std::size_t b, std::size_t begin,
                                                 std::size_t end) {
    FusionGradients& g = partial[b];
    std::vector<double> pre_grad(ud), d_hidden(hidden_units),
        d_input(in_width);
    for (std::size_t i = begin; i < end; ++i) {
      const double* g_image = output_grad.data() + i * 2 * ud;
      const double* g_learner = g_image + ud;

      // Learner branch.
      const double* out = learner_out_.data() + i * ud;
      for (std::size_t c = 0; c < ud; ++c) {
        const double slope = learner_.activation == Activation::kTanh
                                 ? 1.0 - out[c] * out[c]
                                 : 1.0;
        pre_grad[c] = g_learner[c] * slope;
      }
      DenseBackward(learner_.layer, points_.values.data() + i * ud,
                    pre_grad.data(), g.learner.layer,
                    total.point_features.data() + i * ud);

      // Sampling at the displaced position.
      const PixelCoord ref = points_.coords[i];
      const PixelCoord displaced{ref.x + offsets_[i].dx, ref.y + offsets_[i].dy};
      const Stencil s = MakeStencil(grid_, displaced);
      ScatterGrid(grid_, s, g_image, 1.0, g.grid.data());
      const PixelCoord d_coord = CoordGradient(grid_, s, g_image);

      // Offset head: offset = max_offset * tanh(z).
      double dz[2];
      const double* t = squashed_.data() + 2 * i;
      dz[0] = d_coord.x * net_.max_offset * (1.0 - t[0] * t[0]);
      dz[1] = d_coord.y * net_.max_offset * (1.0 - t[1] * t[1]);
      const double* h = hidden_.data() + i * hidden_units;
      DenseBackward(net_.output, h, dz, g.offset_net.output, d_hidden.data());
      for (std::size_t k = 0; k < hidden_units; ++k) {
        d_hidden[k] *= 1.0 - h[k] * h[k];
      }
      const double* input = net_input_.data() + i * in_width;
      DenseBackward(net_.hidden, input, d_hidden.data(), g.offset_net.hidden,
                    d_input.data());

      // Network input: center sample and 3x3 neighborhood mean.
      ScatterGrid(grid_, MakeStencil(grid_, ref), d_input.data(), 1.0,
                  g.grid.data());
      for (int k = 0; k < kNeighborhood; ++k) {
        const PixelCoord p{ref.x + kNeighborDx[k], ref.y + kNeighborDy[k]};
        ScatterGrid(grid_, MakeStencil(grid_, p), d_input.data() + ud,
                    1.0 / kNeighborhood, g.grid.data());
      }
    }
  });

  for (const FusionGradients& g : partial) {
    AddInto(total.offset_net.hidden, g.offset_net.hidden);
    AddInto(total.offset_net.output, g.offset_net.output);
    AddInto(total.learner.layer, g.learner.layer);
    for (std::size_t k = 0; k < total.grid.size(); ++k) total.grid[k] += g.grid[k];
  }
  return total;
}

FeatureGrid SmoothRandomGrid(int height, int width, int channels,
                             std::uint64_t seed) {
  FeatureGrid grid(height, width, channels);
  RngStream rng(seed, 2);
  constexpr int kWaves = 3;
  for (int c = 0; c < channels; ++c) {
    double fx[kWaves], fy[kWaves], phase[kWaves], amp[kWaves];
    for (int k = 0; k < kWaves; ++k) {
      const double angle = rng.Uniform(0.0, 2.0 * std::numbers::pi);
      const double freq = rng.Uniform(0.15, 0.35);
      fx[k] = freq * std::cos(angle);
      fy[k] = freq * std::sin(angle);
      phase[k] = rng.Uniform(0.0, 2.0 * std::numbers::pi);
      amp[k] = rng.Uniform(0.5, 1.0);
    }
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double v = 0.0;
        for (int k = 0; k < kWaves; ++k) {
          v += amp[k] * std::sin(fx[k] * x + fy[k] * y + phase[k]);
        }
        grid.at(y, x, c) = v;
      }
    }
  }
  return grid;
}

double ShiftRecoveryLoss(const FeatureGrid& grid, const OffsetNetwork& net,
                         std::span<const PixelCoord> refs,
                         std::span<const double> targets) {
  const auto sampled = SampleAdaptive(grid, net, refs);
  if (sampled.values.size() != targets.size()) {
    throw Error(ErrorCode::kShapeMismatch, "target size mismatch");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const double diff = sampled.values[k] - targets[k];
    sum += diff * diff;
  }
  return targets.empty() ? 0.0 : sum / static_cast<double>(targets.size());
}

ToyTrainingResult TrainToy(const FeatureGrid& grid,
                           const ToyTrainingOptions& options) {
  grid.Validate();
  if (!(options.max_offset >= 0.0) || !std::isfinite(options.max_offset) ||
      std::abs(options.true_shift.dx) > options.max_offset ||
      std::abs(options.true_shift.dy) > options.max_offset) {
    throw Error(ErrorCode::kInvalidArgument,
                "true shift must lie within max_offset");
  }
  if (options.steps < 0 || !std::isfinite(options.learning_rate) ||
      options.learning_rate <= 0.0 || options.hidden_units < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "steps >= 0, learning_rate > 0 and hidden_units >= 1 required");
  }
  const auto [lo, hi] = std::minmax_element(grid.values().begin(), grid.values().end());
  if (*lo == *hi) {
    throw Error(ErrorCode::kInvalidArgument,
                "grid is constant; a shift cannot be recovered");
  }

  // Interior lattice references: samples within max_offset never clamp.
  const int margin = static_cast<int>(std::ceil(options.max_offset)) + 1;
  const bool interior = 2 * margin < grid.width() && 2 * margin < grid.height();
  const int x0 = interior ? margin : 0, x1 = interior ? grid.width() - 1 - margin : grid.width() - 1;
  const int y0 = interior ? margin : 0, y1 = interior ? grid.height() - 1 - margin : grid.height() - 1;
  ToyTrainingResult result;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) result.refs.push_back({double(x), double(y)});
  }
  std::vector<PixelCoord> shifted(result.refs.size());
  for (std::size_t i = 0; i < shifted.size(); ++i) {
    shifted[i] = {result.refs[i].x + options.true_shift.dx,
                  result.refs[i].y + options.true_shift.dy};
  }
  const std::vector<double> targets = BilinearSample(grid, shifted, options.threads);

  const int d = grid.channels();
  OffsetNetwork net = OffsetNetwork::Initialize(d, options.hidden_units,
                                                options.max_offset, options.seed);
  // The learner branch is idle here: zero features, zero upstream gradient.
  const TwoDLearner learner = TwoDLearner::Zero(d);
  PointFeatureSet points;
  points.channels = d;
  points.coords = result.refs;
  points.values.assign(result.refs.size() * d, 0.0);

  const std::size_t n = result.refs.size();
  const auto ud = static_cast<std::size_t>(d);
  const double norm = 1.0 / static_cast<double>(n * ud);
  std::vector<double> output_grad(n * 2 * ud, 0.0);
  FusionTape tape;

  auto check_finite = [&](const OffsetNetwork& candidate) {
    for (const auto* layer : {&candidate.hidden, &candidate.output}) {
      for (double w : layer->weight) {
        if (!std::isfinite(w)) return false;
      }
      for (double b : layer->bias) {
        if (!std::isfinite(b)) return false;
      }
    }
    return true;
  };

  for (int step = 0; step <= options.steps; ++step) {
    const PointFeatureSet& out = tape.Forward(net, learner, grid, points, options.threads);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < ud; ++c) {
        const double diff = out.values[i * 2 * ud + c] - targets[i * ud + c];
        loss += diff * diff;
        output_grad[i * 2 * ud + c] = 2.0 * diff * norm;
      }
    }
    loss *= norm;
    result.loss_trace.push_back(loss);
    if (!std::isfinite(loss) || !check_finite(net)) {
      throw Error(ErrorCode::kDivergedLoss,
                  "loss became non-finite at step " + std::to_string(step));
    }
    if (options.max_offset > 0.0) {
      for (std::size_t i = 0; i < n; ++i) {
        const Offset o = tape.offsets()[i];
        if (std::abs(o.dx) == options.max_offset ||
            std::abs(o.dy) == options.max_offset) {
          throw Error(ErrorCode::kDivergedLoss,
                      "offset head saturated at step " + std::to_string(step) +
                          "; its gradient vanished");
        }
      }
    }
    if (step == options.steps) break;

    const FusionGradients grads = tape.Backward(output_grad, options.threads);
    for (std::size_t k = 0; k < net.hidden.weight.size(); ++k) {
      net.hidden.weight[k] -= options.learning_rate * grads.offset_net.hidden.weight[k];
    }
    for (std::size_t k = 0; k < net.hidden.bias.size(); ++k) {
      net.hidden.bias[k] -= options.learning_rate * grads.offset_net.hidden.bias[k];
    }
    for (std::size_t k = 0; k < net.output.weight.size(); ++k) {
      net.output.weight[k] -= options.learning_rate * grads.offset_net.output.weight[k];
    }
    for (std::size_t k = 0; k < net.output.bias.size(); ++k) {
      net.output.bias[k] -= options.learning_rate * grads.offset_net.output.bias[k];
    }
  }

  Offset mean;
  for (const Offset& o : tape.offsets()) {
    mean.dx += o.dx;
    mean.dy += o.dy;
  }
  if (n > 0) {
    mean.dx /= static_cast<double>(n);
    mean.dy /= static_cast<double>(n);
  }
  result.mean_offset = mean;
  result.network = std::move(net);
  return result;
}

double GradientRelativeError(double analytic, double numeric) {
  const double scale =
      std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
  return std::abs(analytic - numeric) / scale;
}

std::vector<std::uint8_t> EncodeCheckpoint(const OffsetNetwork& net) {
  net.Validate();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  WriteU32(out, kCheckpointVersion);
  WriteU32(out, 2);
  for (const auto* layer : {&net.hidden, &net.output}) {
    WriteU32(out, static_cast<std::uint32_t>(layer->outputs));
    WriteU32(out, static_cast<std::uint32_t>(layer->inputs));
  }
  WriteF32(out, net.max_offset);
  for (const auto* layer : {&net.hidden, &net.output}) {
    for (double w : layer->weight) WriteF32(out, w);
    for (double b : layer->bias) WriteF32(out, b);
  }
  return out;
}

OffsetNetwork DecodeCheckpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw Error(ErrorCode::kMalformedFile, "not an offset network checkpoint");
  }
  ByteReader reader(bytes.subspan(4));
  if (reader.U32() != kCheckpointVersion) {
    throw Error(ErrorCode::kMalformedFile, "unsupported checkpoint version");
  }
  if (reader.U32() != 2) {
    throw Error(ErrorCode::kMalformedFile, "checkpoint must hold two layers");
  }
  std::uint32_t shape[2][2];
  for (auto& s : shape) {
    s[0] = reader.U32();
    s[1] = reader.U32();
    if (s[0] == 0 || s[1] == 0 || s[0] > 65536 || s[1] > 65536) {
      throw Error(ErrorCode::kMalformedFile, "implausible layer shape");
    }
  }
  OffsetNetwork net;
  net.hidden = DenseLayer(static_cast<int>(shape[0][1]), static_cast<int>(shape[0][0]));
  net.output = DenseLayer(static_cast<int>(shape[1][1]), static_cast<int>(shape[1][0]));
  net.max_offset = reader.F32();
  for (auto* layer : {&net.hidden, &net.output}) {
    for (double& w : layer->weight) w = reader.F32();
    for (double& b : layer->bias) b = reader.F32();
  }
  if (!reader.done()) {
    throw Error(ErrorCode::kMalformedFile, "trailing bytes after checkpoint");
  }
  net.Validate();
  return net;
}

void SaveCheckpoint(const std::filesystem::path& path, const OffsetNetwork& net) {
  const auto bytes = EncodeCheckpoint(net);
  calib::WriteFileBytes(path, std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                               bytes.size()));
}

OffsetNetwork LoadCheckpoint(const std::filesystem::path& path) {
  return DecodeCheckpoint(calib::ReadBinaryFile(path));
}

std::string LossTraceCsv(std::span<const double> losses) {
  std::string out = "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += FormatDouble(losses[i]);
    out += '\n';
  }
  return out;
}

}  // namespace lidarcam::fusion
