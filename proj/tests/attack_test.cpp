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
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "dpfl/attack.hpp"
#include "dpfl/data.hpp"
#include "dpfl/dp_mechanism.hpp"
#include "dpfl/error.hpp"
#include "dpfl/federation.hpp"
#include "test_util.hpp"

namespace dpfl {
namespace {

const Shape3 kImage{1, 8, 8};

struct ImageTarget {
  ModelParams model;
  Example truth;
};

ImageTarget MakeImageTarget(std::uint64_t seed) {
  const auto ds = SyntheticImages(4, 2, 8, 0.1, seed);
  return {BuildModel({"mlp-tiny", kImage, 4}, seed + 100), ds.examples[seed % ds.size()]};
}

GradientUpdate FedCdpGradient(const ImageTarget& t, double sigma, double clip,
                              const NoiseStream& stream) {
  const auto g = ClipPerLayer(BackwardExample(t.model, t.truth).grad, clip);
  return AddGaussianNoise(g, sigma * clip, stream);
}

TEST(MakeSeed, PatternedTilesQuadrants) {
  Generator gen(1);
  const auto x = MakeSeed(SeedMode::kPatternedRandom, kImage, gen);
  ASSERT_EQ(x.size(), 64u);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      const double v = x[r * 8 + c];
      EXPECT_EQ(x[r * 8 + c + 4], v);
      EXPECT_EQ(x[(r + 4) * 8 + c], v);
      EXPECT_EQ(x[(r + 4) * 8 + c + 4], v);
    }
  for (double v : x) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(MakeSeed, VectorsRepeatFourEntries) {
  Generator gen(2);
  const auto x = MakeSeed(SeedMode::kPatternedRandom, {10, 1, 1}, gen);
  for (std::size_t i = 4; i < x.size(); ++i) EXPECT_EQ(x[i], x[i - 4]);
}

TEST(MakeSeed, DeterministicAndModes) {
  Generator a(3), b(3);
  EXPECT_EQ(MakeSeed(SeedMode::kPatternedRandom, {3, 8, 8}, a),
            MakeSeed(SeedMode::kPatternedRandom, {3, 8, 8}, b));
  Generator g(4);
  for (double v : MakeSeed(SeedMode::kZeros, kImage, g)) EXPECT_EQ(v, 0.0);
  for (double v : MakeSeed(SeedMode::kUniformRandom, kImage, g)) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(GradientMatchLoss, SelfMatchIsZero) {
  const auto t = MakeImageTarget(1);
  const auto g = BackwardExample(t.model, t.truth).grad;
  EXPECT_NEAR(GradientMatchLoss(t.model, t.truth.features, t.truth.label, g), 0.0, 1e-12);
}

TEST(GradientMatchLoss, ZeroTargetGivesSquaredNorm) {
  const auto t = MakeImageTarget(2);
  const auto g = BackwardExample(t.model, t.truth).grad;
  const double n = g.global_norm();
  EXPECT_NEAR(GradientMatchLoss(t.model, t.truth.features, t.truth.label,
                                GradientUpdate::ZerosLike(t.model)),
              n * n, 1e-12 * std::max(1.0, n * n));
}

TEST(GradientMatchLoss, MatchesFlattenOracle) {
  const auto t = MakeImageTarget(3);
  Generator gen(5);
  const auto target = testing::RandomUpdateLike(t.model, 0.01, gen);
  std::vector<double> x(64);
  for (double& v : x) v = gen.uniform();
  const auto dummy = BackwardExample(t.model, {x, 1}).grad.flatten();
  const auto flat = target.flatten();
  double oracle = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) oracle += (dummy[i] - flat[i]) * (dummy[i] - flat[i]);
  EXPECT_NEAR(GradientMatchLoss(t.model, x, 1, target), oracle, 1e-12 * std::max(1.0, oracle));
  const GradientUpdate wrong(testing::Layers{{1.0}});
  EXPECT_THROW(GradientMatchLoss(t.model, x, 1, wrong), Error);
}

TEST(ReconstructionDistance, Examples) {
  const std::vector<double> a = {0.1, 0.5, 0.9};
  EXPECT_EQ(ReconstructionDistance(a, a), 0.0);
  const std::vector<double> zeros(16, 0.0), ones(16, 1.0);
  EXPECT_DOUBLE_EQ(ReconstructionDistance(zeros, ones), 1.0);
  Generator gen(6);
  std::vector<double> x(50), y(50);
  for (double& v : x) v = gen.uniform();
  for (double& v : y) v = gen.uniform();
  std::vector<double> diff(50);
  for (std::size_t i = 0; i < 50; ++i) diff[i] = x[i] - y[i];
  double sq = 0.0;
  for (double d : diff) sq += d * d;
  EXPECT_NEAR(ReconstructionDistance(x, y), std::sqrt(sq / 50.0), 1e-14);
  EXPECT_THROW(ReconstructionDistance(zeros, a), Error);
}

TEST(RunAttack, InfiniteThresholdSucceedsAtFirstIteration) {
  const auto t = MakeImageTarget(1);
  AttackConfig cfg;
  cfg.threshold = std::numeric_limits<double>::infinity();
  const auto r = RunAttack(t.model, BackwardExample(t.model, t.truth).grad,
                           std::span(&t.truth, 1), cfg, NoiseStream(1));
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.iterations_used, 1u);
}

TEST(RunAttack, StartingAtTruthSucceedsImmediately) {
  const auto t = MakeImageTarget(2);
  AttackConfig cfg;
  cfg.initial_inputs = std::vector<std::vector<double>>{t.truth.features};
  const auto r = RunAttack(t.model, BackwardExample(t.model, t.truth).grad,
                           std::span(&t.truth, 1), cfg, NoiseStream(1));
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.iterations_used, 1u);
  EXPECT_EQ(r.reconstruction_distance, 0.0);
}

TEST(RunAttack, NonPrivateTypeTwoReconstructs) {
  const auto t = MakeImageTarget(1);
  const AttackConfig cfg;
  const auto r = RunAttack(t.model, BackwardExample(t.model, t.truth).grad,
                           std::span(&t.truth, 1), cfg, NoiseStream(7));
  EXPECT_TRUE(r.success);
  EXPECT_LT(r.reconstruction_distance, 0.05);
  EXPECT_LE(r.iterations_used, 300u);
  EXPECT_EQ(r.loss_trajectory.size(), r.iterations_used);
  EXPECT_EQ(r.threshold, cfg.threshold);
}

TEST(RunAttack, FedCdpGradientResists) {
  const auto t = MakeImageTarget(1);
  const auto target = FedCdpGradient(t, 6.0, 4.0, NoiseStream(99));
  const auto r = RunAttack(t.model, target, std::span(&t.truth, 1), AttackConfig{}, NoiseStream(7));
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.iterations_used, 300u);
  EXPECT_GT(r.reconstruction_distance, 0.3);
}

TEST(RunAttack, GradientDescentTrajectoryNonIncreasing) {
  const auto t = MakeImageTarget(3);
  for (double sigma : {0.0, 1.0}) {
    AttackConfig cfg;
    cfg.max_iters = 120;
    const auto target = FedCdpGradient(t, sigma, 4.0, NoiseStream(5));
    const auto r = RunAttack(t.model, target, std::span(&t.truth, 1), cfg, NoiseStream(8));
    for (std::size_t i = 1; i < r.loss_trajectory.size(); ++i)
      EXPECT_LE(r.loss_trajectory[i], r.loss_trajectory[i - 1]) << "sigma " << sigma << " iter " << i;
    EXPECT_GE(r.reconstruction_distance, 0.0);
  }
}

TEST(RunAttack, ReconstructedInputsStayInBox) {
  const auto t = MakeImageTarget(2);
  AttackConfig cfg;
  cfg.max_iters = 40;
  cfg.optimizer = AttackOptimizer::kAdamFd;
  cfg.step_size = 0.05;
  const auto r = RunAttack(t.model, FedCdpGradient(t, 6.0, 4.0, NoiseStream(3)),
                           std::span(&t.truth, 1), cfg, NoiseStream(4));
  ASSERT_EQ(r.reconstructed.size(), 1u);
  for (double v : r.reconstructed[0]) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_LE(r.iterations_used, 40u);
}

TEST(RunAttack, DistanceNonDecreasingInSigma) {
  std::vector<double> mean;
  for (double sigma : {0.0, 1.0, 6.0}) {
    double sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto t = MakeImageTarget(seed);
      const auto target = FedCdpGradient(t, sigma, 4.0, NoiseStream(1000 + seed));
      sum += RunAttack(t.model, target, std::span(&t.truth, 1), AttackConfig{}, NoiseStream(seed))
                 .reconstruction_distance;
    }
    mean.push_back(sum / 5.0);
  }
  EXPECT_LE(mean[0], mean[1]);
  EXPECT_LE(mean[1], mean[2]);
}

TEST(RunAttack, InvalidConfig) {
  const auto t = MakeImageTarget(1);
  const auto g = BackwardExample(t.model, t.truth).grad;
  AttackConfig cfg;
  cfg.max_iters = 0;
  EXPECT_THROW(RunAttack(t.model, g, std::span(&t.truth, 1), cfg, NoiseStream(1)), Error);
  cfg = AttackConfig{};
  cfg.threshold = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(InferLabel, RecoversTrueLabel) {
  const auto ds = SyntheticImages(4, 3, 8, 0.1, 9);
  const auto model = BuildModel({"mlp-tiny", kImage, 4}, 10);
  for (const auto& ex : ds.examples)
    EXPECT_EQ(InferLabel(model, BackwardExample(model, ex).grad), ex.label);
}

TEST(InferLabel, AttackWithInferredLabelReconstructs) {
  const auto t = MakeImageTarget(4);
  AttackConfig cfg;
  cfg.label_mode = LabelMode::kInferLastLayer;
  const auto r = RunAttack(t.model, BackwardExample(t.model, t.truth).grad,
                           std::span(&t.truth, 1), cfg, NoiseStream(2));
  ASSERT_EQ(r.labels.size(), 1u);
  EXPECT_EQ(r.labels[0], t.truth.label);
}

struct LeakSetup {
  FederationConfig config;
  std::vector<ClientShard> shards;
  ModelParams model;
};

LeakSetup MakeLeakSetup(Placement placement) {
  LeakSetup s;
  const auto ds = SyntheticImages(4, 50, 8, 0.1, 3);
  s.shards = MakeShards(ds, 20, 10, 2, 4);
  s.config.clients = 20;
  s.config.per_round = 10;
  s.config.rounds = 20;
  s.config.local_iters = 2;
  s.config.batch_size = 4;
  s.config.master_seed = 21;
  s.config.dp.placement = placement;
  s.model = InitialModel(s.config, kImage, 4);
  return s;
}

TEST(CaptureLeak, TypeTwoUnderFedSdpEqualsNonPrivate) {
  const auto plain = MakeLeakSetup(Placement::kNone);
  const auto sdp = MakeLeakSetup(Placement::kPerClient);
  for (std::size_t e = 0; e < 4; ++e) {
    const LeakSpec spec{LeakType::kType2, 0, 5, e};
    const auto a = CaptureLeak(plain.config, plain.model, plain.shards[5], spec);
    const auto b = CaptureLeak(sdp.config, sdp.model, sdp.shards[5], spec);
    EXPECT_EQ(a.gradient, b.gradient);
    EXPECT_EQ(a.truth[0].features, b.truth[0].features);
  }
}

TEST(CaptureLeak, FedCdpTypeTwoTargetsAverageToTheFirstLocalStep) {
  auto s = MakeLeakSetup(Placement::kPerExample);
  s.config.local_iters = 1;
  std::vector<GradientUpdate> per_example;
  for (std::size_t e = 0; e < s.config.batch_size; ++e)
    per_example.push_back(
        CaptureLeak(s.config, s.model, s.shards[2], {LeakType::kType2, 0, 2, e}).gradient);
  const auto step = LocalTrainCdp(s.model, s.shards[2], 1, s.config.batch_size, s.config.eta,
                                  s.config.dp, 0, s.config.rounds,
                                  ClientRoundStream(NoiseStream(s.config.master_seed), 0, 2));
  const auto want = Scale(MeanUpdate(per_example), -s.config.eta).flatten();
  const auto got = step.flatten();
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(CaptureLeak, UpdateTargetsAreRescaled) {
  const auto s = MakeLeakSetup(Placement::kNone);
  const auto leak = CaptureLeak(s.config, s.model, s.shards[1], {LeakType::kType1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(leak.scale, -1.0 / (s.config.eta * 2.0));
  const auto delta = LocalTrainNonPrivate(s.model, s.shards[1], 2, 4, s.config.eta,
                                          ClientRoundStream(NoiseStream(21), 0, 1));
  EXPECT_EQ(leak.gradient, Scale(delta, leak.scale));
  EXPECT_GE(leak.truth.size(), 1u);
  EXPECT_LE(leak.truth.size(), 8u);
}

TEST(CaptureLeak, FedSdpTypeZeroIsNoisyTypeOneIsClean) {
  const auto s = MakeLeakSetup(Placement::kPerClient);
  const auto type0 = CaptureLeak(s.config, s.model, s.shards[1], {LeakType::kType0, 0, 1, 0});
  const auto type1 = CaptureLeak(s.config, s.model, s.shards[1], {LeakType::kType1, 0, 1, 0});
  const auto plain = MakeLeakSetup(Placement::kNone);
  const auto clean = CaptureLeak(plain.config, plain.model, plain.shards[1],
                                 {LeakType::kType1, 0, 1, 0});
  EXPECT_EQ(type1.gradient, clean.gradient);
  EXPECT_FALSE(type0.gradient == clean.gradient);
}

TEST(CaptureLeak, Errors) {
  const auto s = MakeLeakSetup(Placement::kNone);
  EXPECT_THROW(CaptureLeak(s.config, s.model, s.shards[1], {LeakType::kType2, 0, 2, 0}), Error);
  EXPECT_THROW(CaptureLeak(s.config, s.model, s.shards[1], {LeakType::kType2, 0, 1, 4}), Error);
  EXPECT_THROW(CaptureLeak(s.config, s.model, s.shards[1], {LeakType::kType2, 20, 1, 0}), Error);
}

TEST(AttackReport, TextRecordLayout) {
  AttackReport r;
  r.success = true;
  r.iterations_used = 2;
  r.final_gradient_loss = 1e-5;
  r.reconstruction_distance = 0.25;
  r.loss_trajectory = {0.5, 1e-5};
  r.reconstructed = {{0.0, 1.0}};
  r.labels = {3};
  r.threshold = 1e-4;
  std::ostringstream out;
  const std::vector<std::pair<std::string, std::string>> ctx = {{"type", "type2"}};
  WriteAttackReport(out, r, ctx);
  const std::string text = out.str();
  EXPECT_EQ(text.rfind("type=type2\nsuccess=true\niterations_used=2\n", 0), 0u);
  EXPECT_NE(text.find("loss_trajectory=0.5,1.0000000000000001e-05\n"), std::string::npos);
  EXPECT_NE(text.find("reconstruction=0,1\n"), std::string::npos);
}

TEST(DefenseName, Names) {
  DpConfig dp;
  EXPECT_EQ(DefenseName(dp), "non-private");
  dp.placement = Placement::kPerClient;
  EXPECT_EQ(DefenseName(dp), "fed-sdp");
  dp.placement = Placement::kPerExample;
  EXPECT_EQ(DefenseName(dp), "fed-cdp");
  dp.schedule = ClipSchedule::LinearDecay(6.0, 2.0);
  EXPECT_EQ(DefenseName(dp), "fed-cdp-decay");
}

}  // namespace
}  // namespace dpfl
