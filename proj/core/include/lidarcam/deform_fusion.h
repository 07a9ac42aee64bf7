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

#ifndef LIDARCAM_DEFORM_FUSION_H_
#define LIDARCAM_DEFORM_FUSION_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lidarcam::fusion {

// Continuous pixel position; lattice node (x, y) is the center of pixel
// column x, row y.
struct PixelCoord {
  double x = 0.0;
  double y = 0.0;
};

struct Offset {
  double dx = 0.0;
  double dy = 0.0;
};

// H x W x D image features, channel-fastest.
class FeatureGrid {
 public:
  FeatureGrid(int height, int width, int channels, int layer = 0);
  FeatureGrid(int height, int width, int channels, std::vector<double> values,
              int layer = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  int layer() const { return layer_; }

  double at(int y, int x, int c) const { return values_[Index(y, x, c)]; }
  double& at(int y, int x, int c) { return values_[Index(y, x, c)]; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }

  std::size_t Index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  // Throws kNonFiniteValue on NaN/Inf entries.
  void Validate() const;

 private:
  int height_;
  int width_;
  int channels_;
  int layer_;
  std::vector<double> values_;
};

// N rows of `channels` features, each tied to a pixel position.
struct PointFeatureSet {
  int channels = 0;
  std::vector<double> values;
  std::vector<PixelCoord> coords;

  std::size_t size() const { return coords.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * channels, channels);
  }
};

// y = W x + b with W stored row-major (outputs x inputs).
struct DenseLayer {
  int inputs = 0;
  int outputs = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(int in, int out)
      : inputs(in), outputs(out),
        weight(static_cast<std::size_t>(in) * out, 0.0), bias(out, 0.0) {}

  double& w(int o, int i) { return weight[static_cast<std::size_t>(o) * inputs + i]; }
  double w(int o, int i) const { return weight[static_cast<std::size_t>(o) * inputs + i]; }
  std::size_t ParameterCount() const { return weight.size() + bias.size(); }
};

enum class Activation { kTanh, kIdentity };

// Maps [feature at the reference point, mean over its 3x3 neighborhood]
// (2 D inputs) through tanh hidden units to an offset bounded by
// max_offset * tanh(.).
struct OffsetNetwork {
  DenseLayer hidden;
  DenseLayer output;
  double max_offset = 8.0;

  // All weights zero: predicts (0, 0) everywhere.
  static OffsetNetwork Zero(int channels, int hidden_units, double max_offset);
  // Hidden layer uniform in +-1/sqrt(fan_in); output layer zero so the first
  // prediction is exactly the reference point.
  static OffsetNetwork Initialize(int channels, int hidden_units,
                                  double max_offset, std::uint64_t seed);
  int input_width() const { return hidden.inputs; }
  void Validate() const;
};

// Per-point D -> D map applied to 3D features before fusion.
struct TwoDLearner {
  DenseLayer layer;
  Activation activation = Activation::kTanh;

  static TwoDLearner Identity(int channels);
  static TwoDLearner Zero(int channels);
  static TwoDLearner Initialize(int channels, std::uint64_t seed);
  void Validate() const;
};

// Bilinear interpolation over the pixel-center lattice. Coordinates outside
// [0, W-1] x [0, H-1] are clamped to the border first.
std::vector<double> BilinearSample(const FeatureGrid& grid,
                                   std::span<const PixelCoord> coords,
                                   int threads = 1);

std::vector<Offset> PredictOffsets(const OffsetNetwork& net,
                                   const FeatureGrid& grid,
                                   std::span<const PixelCoord> refs,
                                   int threads = 1);

// Samples the grid at refs + predicted offsets. Returned coords are the
// displaced sampling positions.
PointFeatureSet SampleAdaptive(const FeatureGrid& grid, const OffsetNetwork& net,
                               std::span<const PixelCoord> refs,
                               int threads = 1);

// [image features | learner(point features)], 2 D channels.
PointFeatureSet Fuse(const PointFeatureSet& point_features,
                     const PointFeatureSet& image_features,
                     const TwoDLearner& learner, int threads = 1);

struct FusionGradients {
  OffsetNetwork offset_net;  // same shapes; max_offset unused
  TwoDLearner learner;
  std::vector<double> grid;            // H x W x D
  std::vector<double> point_features;  // N x D
};

// Records one forward pass of offsets -> adaptive sampling -> fusion and
// back-propagates output gradients through it.
//
// At lattice lines the bilinear derivative uses the cell to the right/below
// (the one floor() selects); the last row/column uses the cell before it.
// Clamped coordinates have zero derivative.
class FusionTape {
 public:
  FusionTape() = default;

  // `point_features` carries the 3D features; its coords are the reference
  // points.
  const PointFeatureSet& Forward(const OffsetNetwork& net,
                                 const TwoDLearner& learner,
                                 const FeatureGrid& grid,
                                 const PointFeatureSet& point_features,
                                 int threads = 1);

  // `output_grad` is dLoss/dOutput, N x 2D. Throws kNoForwardState before
  // the first Forward.
  FusionGradients Backward(std::span<const double> output_grad,
                           int threads = 1) const;

  bool has_forward_state() const { return recorded_; }
  const PointFeatureSet& output() const { return output_; }
  const std::vector<Offset>& offsets() const { return offsets_; }

 private:
  bool recorded_ = false;
  OffsetNetwork net_;
  TwoDLearner learner_;
  FeatureGrid grid_{1, 1, 1};
  PointFeatureSet points_;
  // Per-point intermediates.
  std::vector<double> net_input_;    // N x 2D
  std::vector<double> hidden_;       // N x hidden (post-tanh)
  std::vector<double> squashed_;     // N x 2, tanh of the output layer
  std::vector<Offset> offsets_;
  std::vector<double> learner_out_;  // N x D
  PointFeatureSet output_;
};

// Toy shift-recovery: learn offsets that undo a known translation between
// a grid and its shifted copy.
struct ToyTrainingOptions {
  Offset true_shift{1.5, -0.8};
  double max_offset = 4.0;
  int hidden_units = 16;
  int steps = 500;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct ToyTrainingResult {
  OffsetNetwork network;
  std::vector<double> loss_trace;  // loss before each step, then final
  Offset mean_offset;              // mean prediction over refs after training
  std::vector<PixelCoord> refs;
};

// Smooth multi-frequency sinusoid field, deterministic in `seed`.
FeatureGrid SmoothRandomGrid(int height, int width, int channels,
                             std::uint64_t seed);

// Full-batch gradient descent on the MSE between SampleAdaptive(grid) at
// interior lattice refs and the grid shifted by true_shift at the same refs.
// Throws kDivergedLoss when the loss or a weight turns non-finite, or when
// the offset head saturates to exactly +-max_offset (its derivative has
// underflowed to zero and training can no longer move it).
ToyTrainingResult TrainToy(const FeatureGrid& grid,
                           const ToyTrainingOptions& options);

// Mean squared error of the adaptive samples against `targets`.
double ShiftRecoveryLoss(const FeatureGrid& grid, const OffsetNetwork& net,
                         std::span<const PixelCoord> refs,
                         std::span<const double> targets);

struct GradcheckOptions {
  int instances = 20;
  int height = 6;
  int width = 6;
  int channels = 3;
  int hidden_units = 5;
  int points = 4;
  double step = 1e-5;
  double max_offset = 1.0;
  // Sample positions closer than this to a lattice line are redrawn.
  double lattice_margin = 1e-3;
  std::uint64_t seed = 7;
  int threads = 1;
  // Test hook: perturbs the analytic gradient so the check must fail.
  bool corrupt_gradient = false;
};

struct GradcheckReport {
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
};

// |a - n| / max(|a|, |n|, kGradcheckFloor)
inline constexpr double kGradcheckFloor = 1e-4;
double GradientRelativeError(double analytic, double numeric);

GradcheckReport RunGradcheck(const GradcheckOptions& options);

// Offset network checkpoint: "LCON", u32 version, u32 layer count, per layer
// (u32 outputs, u32 inputs), f32 max_offset, then each layer's weights and
// biases as f32. All little-endian.
std::vector<std::uint8_t> EncodeCheckpoint(const OffsetNetwork& net);
OffsetNetwork DecodeCheckpoint(std::span<const std::uint8_t> bytes);
void SaveCheckpoint(const std::filesystem::path& path, const OffsetNetwork& net);
OffsetNetwork LoadCheckpoint(const std::filesystem::path& path);

// "step,loss" rows.
std::string LossTraceCsv(std::span<const double> losses);

}  // namespace lidarcam::fusion

#endif  // LIDARCAM_DEFORM_FUSION_H_
