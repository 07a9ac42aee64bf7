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
#include <cmath>
#include <functional>

#include "lidarcam/deform_fusion.h"
#include "lidarcam/error.h"
#include "lidarcam/parallel.h"
#include "lidarcam/random.h"

namespace lidarcam::fusion {

namespace {

struct Instance {
  FeatureGrid grid{1, 1, 1};
  OffsetNetwork net;
  TwoDLearner learner;
  PointFeatureSet points;
  std::vector<double> output_grad;
};

bool NearLattice(double v, double margin) {
  const double frac = v - std::floor(v);
  return frac < margin || frac > 1.0 - margin;
}

bool Interior(double v, int size, double margin) {
  return v > margin && v < size - 1 - margin;
}

Instance MakeInstance(const GradcheckOptions& o, std::uint64_t index) {
  RngStream rng(o.seed, 100 + index);
  Instance inst;
  inst.grid = FeatureGrid(o.height, o.width, o.channels);
  for (double& v : inst.grid.mutable_values()) v = rng.Uniform(-1.0, 1.0);

  inst.net = OffsetNetwork::Zero(o.channels, o.hidden_units, o.max_offset);
  const double b1 = 1.0 / std::sqrt(2.0 * o.channels);
  for (double& w : inst.net.hidden.weight) w = rng.Uniform(-b1, b1);
  for (double& b : inst.net.hidden.bias) b = rng.Uniform(-b1, b1);
  const double b2 = 1.0 / std::sqrt(static_cast<double>(o.hidden_units));
  for (double& w : inst.net.output.weight) w = rng.Uniform(-b2, b2);
  for (double& b : inst.net.output.bias) b = rng.Uniform(-0.5, 0.5);
  inst.learner = TwoDLearner::Initialize(o.channels, rng.Bits());

  inst.points.channels = o.channels;
  const double m = o.lattice_margin;
  for (int p = 0; p < o.points; ++p) {
    // Redraw until the reference, its 3x3 neighbors and the displaced sample
    // all sit strictly inside cells, away from the non-differentiable set.
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) {
        throw Error(ErrorCode::kInvalidArgument,
                    "gradcheck could not place a reference point; grid too small");
      }
      const PixelCoord ref{rng.Uniform(1.0 + m, o.width - 2.0 - m),
                           rng.Uniform(1.0 + m, o.height - 2.0 - m)};
      if (NearLattice(ref.x, m) || NearLattice(ref.y, m)) continue;
      const Offset off = PredictOffsets(inst.net, inst.grid,
                                        std::span<const PixelCoord>(&ref, 1))[0];
      const PixelCoord s{ref.x + off.dx, ref.y + off.dy};
      if (!Interior(s.x, o.width, m) || !Interior(s.y, o.height, m) ||
          NearLattice(s.x, m) || NearLattice(s.y, m)) {
        continue;
      }
      inst.points.coords.push_back(ref);
      break;
    }
  }
  inst.points.values.resize(static_cast<std::size_t>(o.points) * o.channels);
  for (double& v : inst.points.values) v = rng.Uniform(-1.0, 1.0);
  inst.output_grad.resize(static_cast<std::size_t>(o.points) * 2 * o.channels);
  for (double& g : inst.output_grad) g = rng.Uniform(-1.0, 1.0);
  return inst;
}

double ScalarLoss(const Instance& inst) {
  FusionTape tape;
  const auto& out = tape.Forward(inst.net, inst.learner, inst.grid, inst.points);
  double sum = 0.0;
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    sum += inst.output_grad[k] * out.values[k];
  }
  return sum;
}

}  // namespace

GradcheckReport RunGradcheck(const GradcheckOptions& o) {
  if (o.instances < 1 || o.points < 1 || o.width < 4 || o.height < 4 ||
      o.channels < 1 || o.hidden_units < 1 || !(o.step > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "bad gradcheck options");
  }
  std::vector<GradcheckReport> reports(static_cast<std::size_t>(o.instances));
  ParallelForBlocks(reports.size(), 1, o.threads, [&](std::size_t k, std::size_t,
                                                      std::size_t) {
    Instance inst = MakeInstance(o, k);
    FusionTape tape;
    tape.Forward(inst.net, inst.learner, inst.grid, inst.points);
    const FusionGradients grads = tape.Backward(inst.output_grad);

    GradcheckReport& report = reports[k];
    auto check = [&](double& param, double analytic) {
      if (o.corrupt_gradient) analytic = analytic * 1.01 + 1e-3;
      const double saved = param;
      param = saved + o.step;
      const double plus = ScalarLoss(inst);
      param = saved - o.step;
      const double minus = ScalarLoss(inst);
      param = saved;
      const double numeric = (plus - minus) / (2.0 * o.step);
      report.max_relative_error =
          std::max(report.max_relative_error, GradientRelativeError(analytic, numeric));
      ++report.parameters_checked;
    };
    auto check_all = [&](std::vector<double>& params, const std::vector<double>& analytic) {
      for (std::size_t i = 0; i < params.size(); ++i) check(params[i], analytic[i]);
    };
    check_all(inst.net.hidden.weight, grads.offset_net.hidden.weight);
    check_all(inst.net.hidden.bias, grads.offset_net.hidden.bias);
    check_all(inst.net.output.weight, grads.offset_net.output.weight);
    check_all(inst.net.output.bias, grads.offset_net.output.bias);
    check_all(inst.learner.layer.weight, grads.learner.layer.weight);
    check_all(inst.learner.layer.bias, grads.learner.layer.bias);
    check_all(inst.grid.mutable_values(), grads.grid);
    check_all(inst.points.values, grads.point_features);
  });

  GradcheckReport total;
  for (const auto& r : reports) {
    total.max_relative_error = std::max(total.max_relative_error, r.max_relative_error);
    total.parameters_checked += r.parameters_checked;
  }
  return total;
}

}  // namespace lidarcam::fusion
