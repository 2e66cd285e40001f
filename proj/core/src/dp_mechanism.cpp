/*
 * Copyright 2026 The dpfl Authors
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
#include "dpfl/dp_mechanism.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dpfl/error.hpp"
#include "dpfl/tensor_nn.hpp"

namespace dpfl {

void DpConfig::validate() const {
  Require(sigma >= 0.0 && std::isfinite(sigma), ErrorCode::kInvalidArgument,
          "sigma must be finite and >= 0");
  Require(delta > 0.0 && delta < 1.0, ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
  if (schedule.kind == ClipSchedule::Kind::kConstant) {
    Require(schedule.start > 0.0, ErrorCode::kInvalidArgument, "clip bound C must be > 0");
  } else {
    Require(schedule.end > 0.0 && schedule.start >= schedule.end, ErrorCode::kInvalidArgument,
            "linear decay needs C_start >= C_end > 0");
  }
}

std::string_view PlacementName(Placement p) {
  switch (p) {
    case Placement::kNone: return "none";
    case Placement::kPerExample: return "per-example";
    case Placement::kPerClient: return "per-client";
  }
  return "unknown";
}

GradientUpdate ClipPerLayer(const GradientUpdate& grad, double clip) {
  Require(clip > 0.0, ErrorCode::kInvalidArgument, "clip bound must be positive");
  std::vector<std::vector<double>> layers = grad.layers();
  for (std::size_t m = 0; m < layers.size(); ++m) {
    const double norm = grad.layer_norms()[m];
    const double factor = std::max(1.0, norm / clip);
    if (factor == 1.0) continue;
    for (double& v : layers[m]) v /= factor;
    // Rounding can leave the rescaled norm a few ulps above the bound; shrink
    // until it is within, so that clipping a clipped update is a no-op.
    while (L2Norm(layers[m]) > clip)
      for (double& v : layers[m]) v *= 1.0 - 0x1p-52;
  }
  return GradientUpdate(std::move(layers));
}

GradientUpdate AddGaussianNoise(const GradientUpdate& grad, double stddev,
                                const NoiseStream& stream) {
  Require(stddev >= 0.0, ErrorCode::kInvalidArgument, "noise stddev must be >= 0");
  if (stddev == 0.0) return grad;
  std::vector<std::vector<double>> layers = grad.layers();
  for (std::size_t m = 0; m < layers.size(); ++m) {
    Generator gen = stream.derive(m).generator();
    for (double& v : layers[m]) v += stddev * gen.normal();
  }
  return GradientUpdate(std::move(layers));
}

GradientUpdate SanitizePerExampleBatch(std::span<const GradientUpdate> clipped, double clip,
                                       double sigma, const NoiseStream& stream) {
  Require(!clipped.empty(), ErrorCode::kEmptyInput, "empty per-example batch");
  Require(clip > 0.0 && sigma >= 0.0, ErrorCode::kInvalidArgument,
          "need C > 0 and sigma >= 0");
  std::vector<GradientUpdate> noisy;
  noisy.reserve(clipped.size());
  for (std::size_t j = 0; j < clipped.size(); ++j) {
    Require(clipped[j].congruent_with(clipped.front()), ErrorCode::kShapeMismatch,
            "per-example gradients have different shapes");
    for (double n : clipped[j].layer_norms()) {
      Require(n <= clip * (1.0 + 1e-9), ErrorCode::kInvalidArgument,
              "per-example gradient " + std::to_string(j) + " is not clipped to C");
    }
    noisy.push_back(AddGaussianNoise(clipped[j], sigma * clip, stream.derive(j)));
  }
  return MeanUpdate(noisy);
}

GradientUpdate SanitizeClientUpdate(const GradientUpdate& update, double clip, double sigma,
                                    const NoiseStream& stream) {
  Require(sigma >= 0.0, ErrorCode::kInvalidArgument, "sigma must be >= 0");
  return AddGaussianNoise(ClipPerLayer(update, clip), sigma * clip, stream);
}

double ClipBoundAt(const ClipSchedule& schedule, std::size_t t, std::size_t rounds) {
  Require(t < rounds, ErrorCode::kOutOfRange,
          "round " + std::to_string(t) + " outside [0, " + std::to_string(rounds) + ")");
  if (schedule.kind == ClipSchedule::Kind::kConstant || rounds == 1) return schedule.start;
  return schedule.start + (schedule.end - schedule.start) * static_cast<double>(t) /
                              static_cast<double>(rounds - 1);
}

double MedianClipBound(std::span<const double> norms) {
  Require(!norms.empty(), ErrorCode::kEmptyInput, "median of an empty list");
  std::vector<double> sorted(norms.begin(), norms.end());
  for (double v : sorted)
    Require(v >= 0.0, ErrorCode::kInvalidArgument, "norms must be non-negative");
  const std::size_t mid = sorted.size() / 2;
  std::nth_element(sorted.begin(), sorted.begin() + mid, sorted.end());
  const double upper = sorted[mid];
  if (sorted.size() % 2 == 1) return upper;
  const double lower = *std::max_element(sorted.begin(), sorted.begin() + mid);
  return 0.5 * (lower + upper);
}

double CalibrateSigma(double epsilon, double delta) {
  Require(epsilon > 0.0 && epsilon < 1.0, ErrorCode::kInvalidArgument,
          "the Gaussian-mechanism bound holds only for 0 < epsilon < 1");
  Require(delta > 0.0 && delta < 1.0, ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
  return std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

}  // namespace dpfl
