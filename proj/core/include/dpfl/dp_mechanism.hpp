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
#ifndef DPFL_DP_MECHANISM_HPP_
#define DPFL_DP_MECHANISM_HPP_

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "dpfl/random.hpp"
#include "dpfl/tensor_nn.hpp"

namespace dpfl {

enum class Placement {
  kNone,        // non-private federated learning
  kPerExample,  // Fed-CDP: every per-example gradient, every local iteration
  kPerClient,   // Fed-SDP: every client's round update, once per round
};

// Fed-SDP only: where the per-client noise is injected. The training math is
// identical; the choice decides whether a client-side (type-1) observer sees
// clean or sanitized updates.
enum class SdpNoiseSide { kServer, kClient };

struct ClipSchedule {
  enum class Kind { kConstant, kLinearDecay };
  Kind kind = Kind::kConstant;
  double start = 4.0;  // C for kConstant
  double end = 4.0;

  static ClipSchedule Constant(double c) { return {Kind::kConstant, c, c}; }
  static ClipSchedule LinearDecay(double c_start, double c_end) {
    return {Kind::kLinearDecay, c_start, c_end};
  }
};

struct DpConfig {
  Placement placement = Placement::kNone;
  ClipSchedule schedule = ClipSchedule::Constant(4.0);
  double sigma = 6.0;
  double delta = 1e-5;
  SdpNoiseSide sdp_noise_side = SdpNoiseSide::kServer;

  // Throws kInvalidArgument when an invariant is violated.
  void validate() const;
};

std::string_view PlacementName(Placement p);

// Scales every layer m by 1 / max(1, ||g_m|| / C). Layers already within the
// bound are returned bitwise unchanged.
GradientUpdate ClipPerLayer(const GradientUpdate& grad, double clip);

// g + N(0, stddev^2) per coordinate; layer m draws from stream.derive(m).
// stddev == 0 returns g unchanged without consuming randomness.
GradientUpdate AddGaussianNoise(const GradientUpdate& grad, double stddev,
                                const NoiseStream& stream);

// (1/B) * sum_j (clipped_j + N(0, sigma^2 C^2)). Example j's noise comes from
// stream.derive(j) (then per layer m), so the stream passed in should already
// be specific to (round, client, iteration).
GradientUpdate SanitizePerExampleBatch(std::span<const GradientUpdate> clipped, double clip,
                                       double sigma, const NoiseStream& stream);

// ClipPerLayer(update, C) + N(0, sigma^2 C^2).
GradientUpdate SanitizeClientUpdate(const GradientUpdate& update, double clip, double sigma,
                                    const NoiseStream& stream);

// constant -> C; linear decay -> C_start + (C_end - C_start) * t / (T - 1).
double ClipBoundAt(const ClipSchedule& schedule, std::size_t t, std::size_t rounds);

// Median of the norms: middle value, or the mean of the two middle values.
double MedianClipBound(std::span<const double> norms);

// Lower bound on the Gaussian-mechanism noise multiplier,
// sqrt(2 ln(1.25 / delta)) / epsilon, valid for 0 < epsilon < 1. Any strictly
// larger sigma gives (epsilon, delta)-DP for unit sensitivity.
double CalibrateSigma(double epsilon, double delta);

}  // namespace dpfl

#endif  // DPFL_DP_MECHANISM_HPP_
