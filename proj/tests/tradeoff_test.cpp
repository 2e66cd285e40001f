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
#include <vector>

#include "dpfl/data.hpp"
#include "dpfl/error.hpp"
#include "dpfl/federation.hpp"
#include "dpfl/tradeoff.hpp"
#include "test_util.hpp"

namespace dpfl {
namespace {

// Dense scalar-input model: score_j = w_j * x + b_j.
ModelParams Linear(std::vector<double> w, std::vector<double> b) {
  ModelParams m;
  m.input_shape = {1, 1, 1};
  m.classes = w.size();
  LayerParams l;
  l.kind = LayerKind::kDense;
  l.input = {1, 1, 1};
  l.output = {w.size(), 1, 1};
  l.weights = std::move(w);
  l.bias = std::move(b);
  m.layers.push_back(std::move(l));
  return m;
}

TEST(Margin, RunnerUpOnScores) {
  const auto m = Linear({2, 1, 0}, {0, 0, 0});
  EXPECT_DOUBLE_EQ(Margin(m, {{1.0}, 0}), 1.0);
  EXPECT_DOUBLE_EQ(Margin(m, {{1.0}, 2}), -2.0);
  EXPECT_THROW(Margin(Linear({1}, {0}), {{1.0}, 0}), Error);
}

TEST(Margin, MatchesScoreInspection) {
  Generator gen(3);
  const auto model = BuildModel({"mlp-tiny", {6, 1, 1}, 4}, 5);
  for (int i = 0; i < 20; ++i) {
    const auto ex = testing::RandomExample({6, 1, 1}, 4, gen);
    const auto z = Logits(model, ex.features);
    double best = -INFINITY;
    for (std::size_t j = 0; j < z.size(); ++j)
      if (j != ex.label) best = std::max(best, z[j]);
    EXPECT_DOUBLE_EQ(Margin(model, ex), z[ex.label] - best);
  }
}

TEST(Lipschitz, HandDifferentiatedLinearModel) {
  // d(s)/d(w0, w1, b0, b1) = (x, -x, 1, -1) for label 0.
  const auto m = Linear({0.7, -0.2}, {0.1, 0.3});
  const double x = 1.5;
  EXPECT_NEAR(MarginGradientNorm(m, {{x}, 0}), std::sqrt(2 * x * x + 2), 1e-12);
  const std::vector<Example> probes = {{{x}, 0}, {{-3.0}, 1}};
  EXPECT_NEAR(LipschitzEstimate(m, probes), std::sqrt(2 * 9.0 + 2), 1e-12);
}

TEST(Lipschitz, MaxSemantics) {
  Generator gen(4);
  const auto model = BuildModel({"mlp-tiny", {6, 1, 1}, 3}, 2);
  std::vector<Example> probes;
  double prev = 0.0;
  for (int i = 0; i < 10; ++i) {
    probes.push_back(testing::RandomExample({6, 1, 1}, 3, gen));
    const double now = LipschitzEstimate(model, probes);
    EXPECT_GE(now, prev);
    prev = now;
  }
  auto doubled = probes;
  doubled.insert(doubled.end(), probes.begin(), probes.end());
  EXPECT_EQ(LipschitzEstimate(model, doubled), LipschitzEstimate(model, probes));
  EXPECT_THROW(LipschitzEstimate(model, std::vector<Example>{}), Error);
}

TEST(NoiseBound, DirectFormula) {
  // Margins 1 at x = +-1, margin-gradient norm sqrt(2 + 2) = 2.
  const auto m = Linear({1.0, 0.0}, {0.0, 0.0});
  const std::vector<Example> probes = {{{1.0}, 0}, {{-1.0}, 1}};
  const auto r = NoiseBound(m, probes);
  EXPECT_DOUBLE_EQ(r.margins[0], 1.0);
  EXPECT_DOUBLE_EQ(r.margins[1], 1.0);
  EXPECT_DOUBLE_EQ(r.lipschitz, 2.0);
  EXPECT_DOUBLE_EQ(r.bound, 0.5);
}

TEST(NoiseBound, MisclassifiedProbeGivesZero) {
  const auto m = Linear({1.0, 0.0}, {0.0, 0.0});
  const std::vector<Example> probes = {{{1.0}, 0}, {{1.0}, 1}};
  EXPECT_EQ(NoiseBound(m, probes).bound, 0.0);
  EXPECT_THROW(NoiseBound(m, std::vector<Example>{}), Error);
}

class TrainedBlobs : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto all = SyntheticBlobs(2, 400, 8, 6.0, 1);
    auto [train, validation] = SplitEvery(all, 5);
    const auto shards = MakeShards(train, 20, 25, 2, 2);
    FederationConfig c;
    c.master_seed = 1;
    model_ = new ModelParams(RunTraining(c, shards, validation).model);
    probes_ = new std::vector<Example>();
    for (const auto& ex : validation.examples)
      if (Predict(*model_, ex.features) == ex.label && probes_->size() < 40) probes_->push_back(ex);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete probes_;
  }

  static GradientUpdate RandomDirection(double norm, Generator& gen) {
    const auto u = testing::RandomUpdateLike(*model_, 1.0, gen);
    return Scale(u, norm / u.global_norm());
  }

  static ModelParams* model_;
  static std::vector<Example>* probes_;
};

ModelParams* TrainedBlobs::model_ = nullptr;
std::vector<Example>* TrainedBlobs::probes_ = nullptr;

TEST_F(TrainedBlobs, HalfBoundPerturbationsRarelyFlip) {
  ASSERT_GE(probes_->size(), 20u);
  const auto report = NoiseBound(*model_, *probes_);
  ASSERT_GT(report.bound, 0.0);
  Generator gen(77);
  int clean = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto perturbed = ApplyUpdate(*model_, RandomDirection(0.5 * report.bound, gen), 1.0);
    bool flipped = false;
    for (const auto& ex : *probes_) flipped |= Predict(perturbed, ex.features) != ex.label;
    clean += !flipped;
  }
  EXPECT_GE(clean, 95);
}

TEST_F(TrainedBlobs, FirstOrderMarginBand) {
  const auto report = NoiseBound(*model_, *probes_);
  ASSERT_GT(report.bound, 0.0);
  Generator gen(78);
  int within = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double norm = 0.1 * report.bound;
    const auto perturbed = ApplyUpdate(*model_, RandomDirection(norm, gen), 1.0);
    bool ok = true;
    for (const auto& ex : *probes_) {
      const double change = std::abs(Margin(perturbed, ex) - Margin(*model_, ex));
      ok &= change <= MarginGradientNorm(*model_, ex) * norm * 1.1;
    }
    within += ok;
  }
  EXPECT_GE(within, 95);
}

TEST(PruneUpdate, SortByMagnitudeExample) {
  const GradientUpdate g(testing::Layers{{3.0, -1.0}, {0.5, 2.0}});
  const auto p = PruneUpdate(g, 0.5);
  EXPECT_EQ(p.flatten(), (std::vector<double>{3.0, 0.0, 0.0, 2.0}));
}

TEST(PruneUpdate, Extremes) {
  const GradientUpdate g(testing::Layers{{3.0, -1.0, 0.5, 2.0}});
  EXPECT_EQ(PruneUpdate(g, 0.0), g);
  for (double v : PruneUpdate(g, 1.0).flatten()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(PruneUpdate(g, 1.5), Error);
  EXPECT_THROW(PruneUpdate(g, -0.1), Error);
}

TEST(PruneUpdate, TiesBrokenByFlatIndex) {
  const GradientUpdate g(testing::Layers{{1.0, -1.0}, {1.0, 1.0}});
  EXPECT_EQ(PruneUpdate(g, 0.5).flatten(), (std::vector<double>{0.0, 0.0, 1.0, 1.0}));
}

TEST(PruneUpdate, SurvivorCountAndValues) {
  Generator gen(9);
  std::vector<std::vector<double>> layers = {std::vector<double>(37), std::vector<double>(64)};
  for (auto& l : layers)
    for (double& v : l) v = gen.normal();
  const GradientUpdate g(layers);
  for (double ratio : {0.1, 0.3, 0.77, 0.9}) {
    const auto p = PruneUpdate(g, ratio).flatten();
    const auto orig = g.flatten();
    std::size_t kept = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] != 0.0) {
        ++kept;
        EXPECT_EQ(p[i], orig[i]);
      }
    }
    EXPECT_EQ(kept, static_cast<std::size_t>(std::ceil((1.0 - ratio) * 101 - 1e-9)));
    EXPECT_EQ(kept, 101 - PrunedCount(101, ratio));
  }
}

}  // namespace
}  // namespace dpfl
