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
#include "dpfl/tradeoff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dpfl/error.hpp"

namespace dpfl {
namespace {

// Index of the best wrong class.
std::size_t RunnerUp(std::span<const double> scores, std::size_t label) {
  std::size_t best = label == 0 ? 1 : 0;
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (j != label && scores[j] > scores[best]) best = j;
  return best;
}

void CheckExample(const ModelParams& model, const Example& ex) {
  Require(model.classes >= 2, ErrorCode::kInvalidArgument, "margin needs Z >= 2");
  Require(ex.label < model.classes, ErrorCode::kOutOfRange, "label out of range");
}

}  // namespace

double Margin(const ModelParams& model, const Example& ex) {
  CheckExample(model, ex);
  const auto z = Logits(model, ex.features);
  return z[ex.label] - z[RunnerUp(z, ex.label)];
}

double MarginGradientNorm(const ModelParams& model, const Example& ex) {
  CheckExample(model, ex);
  const auto z = Logits(model, ex.features);
  std::vector<double> seed(model.classes, 0.0);
  seed[ex.label] = 1.0;
  seed[RunnerUp(z, ex.label)] = -1.0;
  return ParameterGradient(model, ex.features, seed).global_norm();
}

double LipschitzEstimate(const ModelParams& model, std::span<const Example> probes) {
  Require(!probes.empty(), ErrorCode::kEmptyInput, "Lipschitz estimate needs probes");
  double best = 0.0;
  for (const auto& ex : probes) best = std::max(best, MarginGradientNorm(model, ex));
  return best;
}

MarginBoundReport NoiseBound(const ModelParams& model, std::span<const Example> probes) {
  Require(!probes.empty(), ErrorCode::kEmptyInput, "noise bound needs probes");
  MarginBoundReport report;
  report.margins.reserve(probes.size());
  for (const auto& ex : probes) report.margins.push_back(Margin(model, ex));
  report.lipschitz = LipschitzEstimate(model, probes);
  const double min_margin = *std::min_element(report.margins.begin(), report.margins.end());
  report.bound = (min_margin > 0.0 && report.lipschitz > 0.0) ? min_margin / report.lipschitz : 0.0;
  return report;
}

std::size_t PrunedCount(std::size_t n, double ratio) {
  const double exact = ratio * static_cast<double>(n);
  const double nearest = std::round(exact);
  // ratio * n that is an integer up to rounding (0.3 * 10) counts as that integer.
  if (std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact)) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::floor(exact));
}

GradientUpdate PruneUpdate(const GradientUpdate& update, double ratio) {
  Require(ratio >= 0.0 && ratio <= 1.0, ErrorCode::kInvalidArgument,
          "compression ratio must lie in [0, 1]");
  const std::vector<double> flat = update.flatten();
  const std::size_t drop = PrunedCount(flat.size(), ratio);
  if (drop == 0) return update;
  std::vector<std::size_t> order(flat.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(flat[a]) < std::abs(flat[b]);
  });
  std::vector<char> zero(flat.size(), 0);
  for (std::size_t k = 0; k < drop; ++k) zero[order[k]] = 1;
  std::vector<std::vector<double>> layers = update.layers();
  std::size_t pos = 0;
  for (auto& l : layers)
    for (double& v : l) {
      if (zero[pos]) v = 0.0;
      ++pos;
    }
  return GradientUpdate(std::move(layers));
}

}  // namespace dpfl
