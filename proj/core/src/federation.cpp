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
#include "dpfl/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "dpfl/error.hpp"
#include "dpfl/parallel.hpp"
#include "dpfl/tradeoff.hpp"

namespace dpfl {

void ValidateFederation(const FederationConfig& c, std::span<const ClientShard> shards) {
  Require(c.clients >= 1, ErrorCode::kConfig, "K must be >= 1");
  Require(c.per_round >= 1 && c.per_round <= c.clients, ErrorCode::kConfig,
          "Kt must lie in [1, K]");
  Require(c.rounds >= 1, ErrorCode::kConfig, "T must be >= 1");
  Require(c.batch_size >= 1, ErrorCode::kConfig, "B must be >= 1");
  Require(c.local_iters >= 1, ErrorCode::kConfig, "L must be >= 1");
  Require(c.eta > 0.0 && std::isfinite(c.eta), ErrorCode::kConfig, "eta must be > 0");
  Require(c.compression >= 0.0 && c.compression < 1.0, ErrorCode::kConfig,
          "compression ratio must lie in [0, 1)");
  c.dp.validate();
  Require(shards.size() == c.clients, ErrorCode::kConfig,
          "got " + std::to_string(shards.size()) + " shards for K=" + std::to_string(c.clients));
  for (std::size_t k = 0; k < shards.size(); ++k) {
    const auto& s = shards[k];
    Require(s.client_id == k, ErrorCode::kConfig, "shards must be ordered by client id");
    Require(s.size() > 0, ErrorCode::kConfig, "client " + std::to_string(k) + " has no data");
    const std::size_t max_l = (s.size() + c.batch_size - 1) / c.batch_size;
    Require(c.local_iters <= max_l, ErrorCode::kConfig,
            "L=" + std::to_string(c.local_iters) + " exceeds ceil(N_i/B)=" +
                std::to_string(max_l) + " for client " + std::to_string(k));
  }
}

NoiseStream ClientRoundStream(const NoiseStream& root, std::size_t t, std::size_t client) {
  return root.derive({stream_tags::kClientRound, t, client});
}

NoiseStream ServerNoiseStream(const NoiseStream& root, std::size_t t) {
  return root.derive({stream_tags::kServerNoise, t});
}

std::vector<std::size_t> SampleClients(std::size_t clients, std::size_t per_round,
                                       Generator& gen) {
  Require(per_round >= 1 && per_round <= clients, ErrorCode::kInvalidArgument,
          "Kt must lie in [1, K]");
  std::vector<std::size_t> ids(clients);
  std::iota(ids.begin(), ids.end(), 0);
  // Partial Fisher-Yates: the first Kt slots are a uniform Kt-subset.
  for (std::size_t i = 0; i < per_round; ++i) {
    const std::size_t j = i + gen.uniform_index(clients - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(per_round);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::size_t> ParticipantsAt(const FederationConfig& config, std::size_t t) {
  Generator gen =
      NoiseStream(config.master_seed).derive({stream_tags::kClientSample, t}).generator();
  return SampleClients(config.clients, config.per_round, gen);
}

ModelParams InitialModel(const FederationConfig& config, const Shape3& input,
                         std::size_t classes) {
  const NoiseStream root(config.master_seed);
  return BuildModel({config.arch, input, classes}, root.derive(stream_tags::kModelInit).key());
}

LocalTrainingResult LocalTrain(const ModelParams& model, const ClientShard& shard,
                               std::size_t local_iters, std::size_t batch_size, double eta,
                               const DpConfig& dp, double clip, const NoiseStream& stream) {
  Require(local_iters >= 1, ErrorCode::kInvalidArgument, "L must be >= 1");
  const bool per_example = dp.placement == Placement::kPerExample;
  LocalTrainingResult result;
  ModelParams local = model;
  std::vector<GradientUpdate> grads(batch_size);
  for (std::size_t l = 0; l < local_iters; ++l) {
    Generator gen = stream.derive({stream_tags::kBatch, l}).generator();
    auto idx = SampleBatchIndices(shard.size(), batch_size, gen);
    for (std::size_t j = 0; j < batch_size; ++j) {
      grads[j] = BackwardExample(local, shard.examples[idx[j]]).grad;
    }
    if (l == 0) {
      result.first_iteration_norms.assign(grads.front().layer_count(), 0.0);
      for (const auto& g : grads)
        for (std::size_t m = 0; m < g.layer_count(); ++m)
          result.first_iteration_norms[m] += g.layer_norms()[m] / static_cast<double>(batch_size);
    }
    GradientUpdate step;
    if (per_example) {
      for (auto& g : grads) g = ClipPerLayer(g, clip);
      step = SanitizePerExampleBatch(grads, clip, dp.sigma,
                                     stream.derive({stream_tags::kExampleNoise, l}));
    } else {
      step = MeanUpdate(grads);
    }
    local = SgdStep(local, step, eta);
    result.batches.push_back(std::move(idx));
  }
  result.delta = ParameterDelta(local, model);
  return result;
}

GradientUpdate LocalTrainNonPrivate(const ModelParams& model, const ClientShard& shard,
                                    std::size_t local_iters, std::size_t batch_size, double eta,
                                    const NoiseStream& stream) {
  return LocalTrain(model, shard, local_iters, batch_size, eta, DpConfig{}, 0.0, stream).delta;
}

GradientUpdate LocalTrainCdp(const ModelParams& model, const ClientShard& shard,
                             std::size_t local_iters, std::size_t batch_size, double eta,
                             const DpConfig& dp, std::size_t t, std::size_t rounds,
                             const NoiseStream& stream) {
  Require(dp.placement == Placement::kPerExample, ErrorCode::kInvalidArgument,
          "LocalTrainCdp requires per-example placement");
  const double clip = ClipBoundAt(dp.schedule, t, rounds);
  return LocalTrain(model, shard, local_iters, batch_size, eta, dp, clip, stream).delta;
}

GradientUpdate SdpServerRound(std::span<const ClientUpdate> updates, double clip, double sigma,
                              const NoiseStream& stream) {
  Require(!updates.empty(), ErrorCode::kEmptyInput, "no client updates to aggregate");
  std::vector<GradientUpdate> sanitized;
  sanitized.reserve(updates.size());
  for (const auto& u : updates) {
    sanitized.push_back(SanitizeClientUpdate(u.delta, clip, sigma, stream.derive(u.client_id)));
  }
  return MeanUpdate(sanitized);
}

ModelParams AggregateFedSgd(const ModelParams& global, std::span<const GradientUpdate> updates) {
  Require(!updates.empty(), ErrorCode::kEmptyInput, "FedSGD over zero updates");
  return ApplyUpdate(global, MeanUpdate(updates), 1.0);
}

ModelParams AggregateFedAvg(std::span<const ModelParams> local_models) {
  Require(!local_models.empty(), ErrorCode::kEmptyInput, "FedAvg over zero models");
  ModelParams out = local_models.front();
  for (std::size_t k = 1; k < local_models.size(); ++k) {
    const auto& m = local_models[k];
    Require(m.layers.size() == out.layers.size(), ErrorCode::kShapeMismatch,
            "FedAvg over different architectures");
    for (std::size_t li = 0; li < out.layers.size(); ++li) {
      auto& dst = out.layers[li];
      const auto& src = m.layers[li];
      Require(dst.weights.size() == src.weights.size() && dst.bias.size() == src.bias.size(),
              ErrorCode::kShapeMismatch, "FedAvg layer size mismatch");
      for (std::size_t i = 0; i < dst.weights.size(); ++i) dst.weights[i] += src.weights[i];
      for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += src.bias[i];
    }
  }
  const double n = static_cast<double>(local_models.size());
  for (auto& layer : out.layers) {
    for (double& v : layer.weights) v /= n;
    for (double& v : layer.bias) v /= n;
  }
  return out;
}

TrainingResult RunTraining(const FederationConfig& config, std::span<const ClientShard> shards,
                           const Dataset& validation, const RunOptions& options) {
  ValidateFederation(config, shards);
  Require(validation.classes >= 2, ErrorCode::kConfig,
          "training requires at least two classes");
  const NoiseStream root(config.master_seed);
  const auto& dp = config.dp;

  TrainingResult result;
  result.model = InitialModel(config, validation.feature_shape, validation.classes);
  result.ledger = PrivacyLedger(dp.delta, dp.placement == Placement::kPerClient
                                              ? LedgerScope::kClient
                                              : LedgerScope::kInstance);
  result.client_ledger = PrivacyLedger(dp.delta, LedgerScope::kClient);

  std::size_t total_examples = 0;
  for (const auto& s : shards) total_examples += s.size();
  const double instance_q =
      std::min(1.0, static_cast<double>(config.batch_size * config.per_round) /
                        static_cast<double>(total_examples));
  const double client_q =
      static_cast<double>(config.per_round) / static_cast<double>(config.clients);

  const std::size_t rounds = options.stop_after ? std::min(*options.stop_after, config.rounds)
                                                : config.rounds;
  for (std::size_t t = 0; t < rounds; ++t) {
    const auto started = std::chrono::steady_clock::now();
    const double clip = ClipBoundAt(dp.schedule, t, config.rounds);
    const auto participants = ParticipantsAt(config, t);

    std::vector<LocalTrainingResult> local(participants.size());
    ParallelFor(participants.size(), options.threads, [&](std::size_t k) {
      const std::size_t id = participants[k];
      local[k] = LocalTrain(result.model, shards[id], config.local_iters, config.batch_size,
                            config.eta, dp, clip, ClientRoundStream(root, t, id));
      if (config.compression > 0.0) local[k].delta = PruneUpdate(local[k].delta, config.compression);
    });

    ModelParams next;
    if (dp.placement == Placement::kPerClient) {
      std::vector<ClientUpdate> updates;
      updates.reserve(participants.size());
      for (std::size_t k = 0; k < participants.size(); ++k)
        updates.push_back({participants[k], std::move(local[k].delta)});
      next = ApplyUpdate(result.model,
                         SdpServerRound(updates, clip, dp.sigma, ServerNoiseStream(root, t)), 1.0);
    } else if (config.aggregation == Aggregation::kFedAvg) {
      std::vector<ModelParams> models;
      models.reserve(local.size());
      for (const auto& r : local) models.push_back(ApplyUpdate(result.model, r.delta, 1.0));
      next = AggregateFedAvg(models);
    } else {
      std::vector<GradientUpdate> deltas;
      deltas.reserve(local.size());
      for (auto& r : local) deltas.push_back(std::move(r.delta));
      next = AggregateFedSgd(result.model, deltas);
    }
    Require(AllFinite(next), ErrorCode::kNumericFailure,
            "non-finite global parameters after round " + std::to_string(t) +
                " (try a smaller eta or sigma)");
    result.model = std::move(next);

    RoundRecord rec;
    rec.round = t;
    rec.participants = participants;
    rec.clip_bound = dp.placement == Placement::kNone ? 0.0 : clip;
    rec.mean_grad_norms.assign(result.model.trainable_count(), 0.0);
    for (const auto& r : local)
      for (std::size_t m = 0; m < rec.mean_grad_norms.size(); ++m)
        rec.mean_grad_norms[m] += r.first_iteration_norms[m] / static_cast<double>(local.size());
    rec.accuracy = Accuracy(result.model, validation.examples);

    if (dp.placement != Placement::kNone && dp.sigma == 0.0) {
      rec.epsilon = std::numeric_limits<double>::infinity();
    } else if (dp.placement == Placement::kPerExample) {
      result.ledger = result.ledger.with_steps(instance_q, dp.sigma, config.local_iters);
      result.client_ledger = result.ledger.rescoped(LedgerScope::kClient);
      rec.epsilon = LedgerQuery(result.ledger);
    } else if (dp.placement == Placement::kPerClient) {
      result.ledger = result.ledger.with_steps(client_q, dp.sigma, 1);
      result.client_ledger = result.ledger;
      rec.epsilon = LedgerQuery(result.ledger);
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            started).count();
    result.rounds.push_back(std::move(rec));
  }
  return result;
}

}  // namespace dpfl
