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
#ifndef DPFL_ATTACK_HPP_
#define DPFL_ATTACK_HPP_

// Gradient-inversion reconstruction: optimise dummy inputs so that their
// gradient under the leak-point model matches an intercepted gradient, then
// score the reconstruction against the private ground truth.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dpfl/data.hpp"
#include "dpfl/federation.hpp"
#include "dpfl/random.hpp"
#include "dpfl/tensor_nn.hpp"

namespace dpfl {

enum class SeedMode { kPatternedRandom, kUniformRandom, kZeros };
enum class AttackOptimizer { kGradientDescentFd, kAdamFd };
enum class LabelMode { kKnown, kInferLastLayer };

struct AttackConfig {
  std::size_t max_iters = 300;
  SeedMode seed_mode = SeedMode::kPatternedRandom;
  AttackOptimizer optimizer = AttackOptimizer::kGradientDescentFd;
  // Gradient descent: largest per-coordinate move of the first trial step
  // (later steps adapt by doubling / halving). Adam: learning rate.
  double step_size = 0.1;
  double threshold = 1e-4;  // success iff gradient loss < threshold
  double fd_step = 1e-3;
  LabelMode label_mode = LabelMode::kKnown;
  // Compare only coordinates where the target is non-zero (pruned targets).
  bool match_support = false;
  // 0: finite differences over every input coordinate. Otherwise a random
  // subset of this many coordinates is probed per iteration.
  std::size_t fd_coordinates = 0;
  // Start from these inputs instead of a generated seed.
  std::optional<std::vector<std::vector<double>>> initial_inputs;

  void validate() const;
};

struct AttackReport {
  bool success = false;
  std::size_t iterations_used = 0;
  double final_gradient_loss = 0.0;
  double reconstruction_distance = 0.0;
  std::vector<double> loss_trajectory;
  std::vector<std::vector<double>> reconstructed;
  std::vector<std::size_t> labels;
  double threshold = 0.0;
  // Factor applied to the intercepted tensor to obtain the matched target
  // (1 for per-example gradients, -1/(eta*L) for shared updates).
  double target_scale = 1.0;
};

// Patterned: a seeded 4x4 patch per channel (4 entries for flat feature
// vectors) tiled over the shape. Uniform: i.i.d. U[0,1). Zeros: all zero.
std::vector<double> MakeSeed(SeedMode mode, const Shape3& shape, Generator& gen);

// Squared L2 distance, summed over layers, between the gradient of
// (x_dummy, label) and target_grad.
double GradientMatchLoss(const ModelParams& model, std::span<const double> x_dummy,
                         std::size_t label, const GradientUpdate& target_grad);

// sqrt(mean((x - x_rec)^2)).
double ReconstructionDistance(std::span<const double> x, std::span<const double> x_rec);

// One dummy per ground-truth example; dummies jointly match the mean of their
// gradients to `target_grad`. The reported distance is the mean per-example
// distance under the best dummy-to-truth assignment (exhaustive for <= 6
// examples, greedy beyond).
AttackReport RunAttack(const ModelParams& model, const GradientUpdate& target_grad,
                       std::span<const Example> truth, const AttackConfig& config,
                       const NoiseStream& stream, double target_scale = 1.0);

// Label of the most negative last-layer bias gradient.
std::size_t InferLabel(const ModelParams& model, const GradientUpdate& grad);

enum class LeakType { kType0, kType1, kType2 };

std::string_view LeakTypeName(LeakType type);

struct LeakSpec {
  LeakType type = LeakType::kType2;
  std::size_t round = 0;
  std::size_t client = 0;
  // Position inside the client's first local batch (type 2 only).
  std::size_t example = 0;
};

struct LeakTarget {
  GradientUpdate gradient;      // matched target (already scaled)
  std::vector<Example> truth;   // private examples behind it
  double scale = 1.0;
};

// Re-derives exactly what the given leak point observes in a run of `config`:
//   type 2: example `spec.example` of the first local batch, as its raw
//           gradient (non-private, Fed-SDP) or clipped + noised (Fed-CDP);
//   type 1: the client's local update before upload (Fed-SDP noise only if
//           injected client-side);
//   type 0: the per-client update as shared with the server (Fed-SDP
//           sanitized).
// Updates are divided by -eta*L. `model` must be the round-start broadcast.
LeakTarget CaptureLeak(const FederationConfig& config, const ModelParams& model,
                       const ClientShard& shard, const LeakSpec& spec);

// "non-private", "fed-sdp", "fed-cdp" or "fed-cdp-decay".
std::string DefenseName(const DpConfig& dp);

// key=value lines, then `reconstruction=` with the dummies as one flat
// comma-separated array.
void WriteAttackReport(std::ostream& out, const AttackReport& report,
                       std::span<const std::pair<std::string, std::string>> context = {});

}  // namespace dpfl

#endif  // DPFL_ATTACK_HPP_
