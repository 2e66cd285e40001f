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
#ifndef DPFL_TRADEOFF_HPP_
#define DPFL_TRADEOFF_HPP_

// Utility-privacy diagnostics. The margin s(x, w) = g_y - max_{j != y} g_j is
// taken on pre-softmax scores; its parameter-gradient norm, maximised over a
// probe set, is an empirical Lipschitz constant L_v, and min-margin / L_v
// bounds (to first order) the parameter perturbation the model survives
// without flipping any probe prediction.

#include <cstddef>
#include <span>
#include <vector>

#include "dpfl/tensor_nn.hpp"

namespace dpfl {

// Requires Z >= 2.
double Margin(const ModelParams& model, const Example& ex);

// L2 norm of d s(x, w) / d w for one example.
double MarginGradientNorm(const ModelParams& model, const Example& ex);

// max over probes of MarginGradientNorm.
double LipschitzEstimate(const ModelParams& model, std::span<const Example> probes);

struct MarginBoundReport {
  std::vector<double> margins;
  double lipschitz = 0.0;
  // min-margin / L_v, or 0 when any probe is misclassified.
  double bound = 0.0;
  // Norm of an applied perturbation, when the caller measures one.
  double observed_noise_norm = 0.0;
};

MarginBoundReport NoiseBound(const ModelParams& model, std::span<const Example> probes);

// Zeroes the floor(ratio * n) smallest-magnitude coordinates across all layers
// (ties broken by flat index); survivors are unchanged.
GradientUpdate PruneUpdate(const GradientUpdate& update, double ratio);

// Number of coordinates PruneUpdate zeroes for n coordinates.
std::size_t PrunedCount(std::size_t n, double ratio);

}  // namespace dpfl

#endif  // DPFL_TRADEOFF_HPP_
