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
#ifndef DPFL_FEDERATION_HPP_
#define DPFL_FEDERATION_HPP_

// Publish-subscribe federated learning simulation: each round the server
// samples Kt of K clients, every participant trains locally for L iterations
// from the broadcast model, and the server aggregates the returned deltas.
//
// Randomness is addressed, never shared: round t's client sample comes from
// root.derive({kClientSample, t}); client i's local randomness from
// ClientRoundStream(root, t, i); Fed-SDP noise for client i from
// ServerNoiseStream(root, t).derive(i). Running clients in parallel therefore
// cannot change any result, and aggregation sums in ascending client id.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpfl/accountant.hpp"
#include "dpfl/data.hpp"
#include "dpfl/dp_mechanism.hpp"
#include "dpfl/random.hpp"
#include "dpfl/tensor_nn.hpp"

namespace dpfl {

namespace stream_tags {
inline constexpr std::uint64_t kModelInit = 1;
inline constexpr std::uint64_t kClientSample = 2;
inline constexpr std::uint64_t kClientRound = 3;
inline constexpr std::uint64_t kServerNoise = 4;
// Below a client-round stream.
inline constexpr std::uint64_t kBatch = 1;
inline constexpr std::uint64_t kExampleNoise = 2;
}  // namespace stream_tags

enum class Aggregation { kFedSgd, kFedAvg };

struct FederationConfig {
  std::size_t clients = 20;       // K
  std::size_t per_round = 10;     // Kt
  std::size_t rounds = 20;        // T
  std::size_t local_iters = 5;    // L
  std::size_t batch_size = 5;     // B
  double eta = 0.1;
  Aggregation aggregation = Aggregation::kFedSgd;
  DpConfig dp;
  std::string arch = "mlp-tiny";
  // Fraction of smallest-magnitude update coordinates each client zeroes
  // before upload (0 disables compression).
  double compression = 0.0;
  std::uint64_t master_seed = 0;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> participants;
  double accuracy = 0.0;
  // Per trainable layer: mean over participants of the mean raw per-example
  // gradient L2 norm in their first local iteration.
  std::vector<double> mean_grad_norms;
  double epsilon = 0.0;
  double clip_bound = 0.0;
  double wall_ms = 0.0;
};

struct TrainingResult {
  ModelParams model;
  std::vector<RoundRecord> rounds;
  // Fed-CDP: instance-scope ledger (q = B*Kt/N, L steps per round).
  // Fed-SDP: client-scope ledger (q = Kt/K, one step per round).
  // Non-private: empty.
  PrivacyLedger ledger{1e-5, LedgerScope::kInstance};
  // Client-level view. Fed-CDP's equals the instance ledger (one DP model is
  // broadcast to every client).
  PrivacyLedger client_ledger{1e-5, LedgerScope::kClient};
};

struct RunOptions {
  std::size_t threads = 1;
  // Stop after this many rounds of the configured schedule (the decay schedule
  // still spans config.rounds). Used to recover the round-t broadcast model.
  std::optional<std::size_t> stop_after;
};

struct ClientUpdate {
  std::size_t client_id = 0;
  GradientUpdate delta;
};

// Throws kInvalidArgument / kConfig on violated invariants, including
// L <= ceil(N_i / B) for every shard.
void ValidateFederation(const FederationConfig& config, std::span<const ClientShard> shards);

NoiseStream ClientRoundStream(const NoiseStream& root, std::size_t t, std::size_t client);
NoiseStream ServerNoiseStream(const NoiseStream& root, std::size_t t);

// Kt distinct ids uniform without replacement, returned in ascending order.
std::vector<std::size_t> SampleClients(std::size_t clients, std::size_t per_round, Generator& gen);
std::vector<std::size_t> ParticipantsAt(const FederationConfig& config, std::size_t t);

ModelParams InitialModel(const FederationConfig& config, const Shape3& input, std::size_t classes);

struct LocalTrainingResult {
  GradientUpdate delta;  // W_i(t)_L - W(t)
  std::vector<double> first_iteration_norms;
  // Shard indices sampled at each local iteration.
  std::vector<std::vector<std::size_t>> batches;
};

// Non-private local SGD on mean per-example gradients; returns the delta.
GradientUpdate LocalTrainNonPrivate(const ModelParams& model, const ClientShard& shard,
                                    std::size_t local_iters, std::size_t batch_size, double eta,
                                    const NoiseStream& stream);

// Fed-CDP local training: clip every per-example gradient per layer to C(t),
// add N(0, sigma^2 C(t)^2), average over the batch, step.
GradientUpdate LocalTrainCdp(const ModelParams& model, const ClientShard& shard,
                             std::size_t local_iters, std::size_t batch_size, double eta,
                             const DpConfig& dp, std::size_t t, std::size_t rounds,
                             const NoiseStream& stream);

// Shared implementation of both, with diagnostics. `clip` is ignored unless
// dp.placement == kPerExample.
LocalTrainingResult LocalTrain(const ModelParams& model, const ClientShard& shard,
                               std::size_t local_iters, std::size_t batch_size, double eta,
                               const DpConfig& dp, double clip, const NoiseStream& stream);

// Fed-SDP server step: per-layer clip of each client update to C, one Gaussian
// draw (std sigma*C) per update, then a single 1/Kt average.
GradientUpdate SdpServerRound(std::span<const ClientUpdate> updates, double clip, double sigma,
                              const NoiseStream& stream);

// W + (1/Kt) sum dW_k.
ModelParams AggregateFedSgd(const ModelParams& global, std::span<const GradientUpdate> updates);
// (1/Kt) sum W_k.
ModelParams AggregateFedAvg(std::span<const ModelParams> local_models);

TrainingResult RunTraining(const FederationConfig& config, std::span<const ClientShard> shards,
                           const Dataset& validation, const RunOptions& options = {});

}  // namespace dpfl

#endif  // DPFL_FEDERATION_HPP_
