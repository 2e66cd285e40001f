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

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dpfl/data.hpp"
#include "dpfl/error.hpp"
#include "test_util.hpp"

namespace dpfl {
namespace {

void PutBe32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

void WriteBytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> IdxImages(std::uint32_t magic, std::uint32_t count, std::uint32_t rows,
                                     std::uint32_t cols, const std::vector<unsigned char>& px) {
  std::vector<unsigned char> b;
  PutBe32(b, magic);
  PutBe32(b, count);
  PutBe32(b, rows);
  PutBe32(b, cols);
  b.insert(b.end(), px.begin(), px.end());
  return b;
}

std::vector<unsigned char> IdxLabels(std::uint32_t magic, const std::vector<unsigned char>& labels) {
  std::vector<unsigned char> b;
  PutBe32(b, magic);
  PutBe32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no dpfl::Error thrown";
  return ErrorCode::kInvalidArgument;
}

class IdxTest : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = testing::ScratchDir("idx"); }
  std::filesystem::path dir_;
};

TEST_F(IdxTest, HandBuiltTwoImagePair) {
  std::vector<unsigned char> px(32);
  for (int i = 0; i < 32; ++i) px[i] = static_cast<unsigned char>(i * 8);
  px[31] = 255;
  WriteBytes(dir_ / "img", IdxImages(0x803, 2, 4, 4, px));
  WriteBytes(dir_ / "lbl", IdxLabels(0x801, {3, 1}));
  const auto ds = LoadIdx(dir_ / "img", dir_ / "lbl");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.classes, 4u);
  EXPECT_EQ(ds.feature_shape, (Shape3{1, 4, 4}));
  EXPECT_EQ(ds.examples[0].label, 3u);
  EXPECT_EQ(ds.examples[1].label, 1u);
  EXPECT_DOUBLE_EQ(ds.examples[0].features[0], 0.0);
  EXPECT_DOUBLE_EQ(ds.examples[0].features[5], 40.0 / 255.0);
  EXPECT_DOUBLE_EQ(ds.examples[1].features[0], 128.0 / 255.0);
  EXPECT_DOUBLE_EQ(ds.examples[1].features[15], 1.0);
}

TEST_F(IdxTest, LabelFileWithImageMagic) {
  WriteBytes(dir_ / "img", IdxImages(0x803, 1, 2, 2, {1, 2, 3, 4}));
  WriteBytes(dir_ / "lbl", IdxLabels(0x803, {0}));
  EXPECT_EQ(CodeOf([&] { LoadIdx(dir_ / "img", dir_ / "lbl"); }), ErrorCode::kBadMagic);
}

TEST_F(IdxTest, CountMismatch) {
  WriteBytes(dir_ / "img", IdxImages(0x803, 3, 1, 1, {1, 2, 3}));
  WriteBytes(dir_ / "lbl", IdxLabels(0x801, {0, 1}));
  EXPECT_EQ(CodeOf([&] { LoadIdx(dir_ / "img", dir_ / "lbl"); }), ErrorCode::kCountMismatch);
}

TEST_F(IdxTest, TruncatedPixels) {
  WriteBytes(dir_ / "img", IdxImages(0x803, 2, 2, 2, {1, 2, 3, 4, 5}));
  WriteBytes(dir_ / "lbl", IdxLabels(0x801, {0, 1}));
  EXPECT_EQ(CodeOf([&] { LoadIdx(dir_ / "img", dir_ / "lbl"); }), ErrorCode::kTruncatedFile);
}

TEST_F(IdxTest, TruncatedHeader) {
  WriteBytes(dir_ / "img", {0, 0, 8});
  WriteBytes(dir_ / "lbl", IdxLabels(0x801, {0}));
  EXPECT_EQ(CodeOf([&] { LoadIdx(dir_ / "img", dir_ / "lbl"); }), ErrorCode::kTruncatedFile);
}

TEST_F(IdxTest, MissingFile) {
  EXPECT_EQ(CodeOf([&] { LoadIdx(dir_ / "nope", dir_ / "nope2"); }), ErrorCode::kIo);
}

class CsvTest : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = testing::ScratchDir("csv"); }
  std::filesystem::path Write(const std::string& text) {
    const auto p = dir_ / "data.csv";
    std::ofstream(p) << text;
    return p;
  }
  std::filesystem::path dir_;
};

TEST_F(CsvTest, ThreeRowsTwoNumericFeatures) {
  const auto ds = LoadCsv(Write("a,b,label\n1,10,no\n2,30,yes\n4,20,no\n"), "label");
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.classes, 2u);
  EXPECT_EQ(ds.feature_shape.size(), 2u);
  // a: min 1, span 3; b: min 10, span 20. Labels sorted: no=0, yes=1.
  EXPECT_DOUBLE_EQ(ds.examples[0].features[0], 0.0);
  EXPECT_DOUBLE_EQ(ds.examples[0].features[1], 0.0);
  EXPECT_DOUBLE_EQ(ds.examples[1].features[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(ds.examples[1].features[1], 1.0);
  EXPECT_DOUBLE_EQ(ds.examples[2].features[0], 1.0);
  EXPECT_DOUBLE_EQ(ds.examples[2].features[1], 0.5);
  EXPECT_EQ(ds.examples[0].label, 0u);
  EXPECT_EQ(ds.examples[1].label, 1u);
}

TEST_F(CsvTest, CategoricalOneHot) {
  const auto ds = LoadCsv(Write("color,x,y\nred,1,a\nblue,3,b\nred,2,a\n"), "y",
                          CsvSchema{{"color"}});
  ASSERT_EQ(ds.feature_shape.size(), 3u);  // blue, red, x
  EXPECT_EQ(ds.examples[0].features, (std::vector<double>{0, 1, 0}));
  EXPECT_EQ(ds.examples[1].features, (std::vector<double>{1, 0, 1}));
  EXPECT_EQ(ds.examples[2].features, (std::vector<double>{0, 1, 0.5}));
}

TEST_F(CsvTest, QuotedCellsAndConstantColumn) {
  const auto ds = LoadCsv(Write("\"f\",k,label\n\"5\",7,\"x,y\"\n6,7,z\n"), "label");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.examples[0].features, (std::vector<double>{0, 0}));
  EXPECT_EQ(ds.examples[1].features, (std::vector<double>{1, 0}));
  EXPECT_EQ(ds.examples[0].label, 0u);
}

TEST_F(CsvTest, SingleClassAccepted) {
  const auto ds = LoadCsv(Write("a,label\n1,k\n2,k\n"), "label");
  EXPECT_EQ(ds.classes, 1u);
}

TEST_F(CsvTest, Errors) {
  EXPECT_EQ(CodeOf([&] { LoadCsv(Write("a,b\n1,2\n"), "label"); }), ErrorCode::kMissingColumn);
  EXPECT_EQ(CodeOf([&] { LoadCsv(Write("a,label\nx,1\n"), "label"); }), ErrorCode::kNonNumericCell);
  EXPECT_EQ(CodeOf([&] { LoadCsv(Write(""), "label"); }), ErrorCode::kEmptyInput);
  EXPECT_EQ(CodeOf([&] { LoadCsv(Write("a,label\n"), "label"); }), ErrorCode::kEmptyInput);
}

TEST(SyntheticBlobs, DeterministicAndBalanced) {
  const auto a = SyntheticBlobs(2, 50, 8, 6.0, 1);
  const auto b = SyntheticBlobs(2, 50, 8, 6.0, 1);
  ASSERT_EQ(a.size(), 100u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.examples[i].features, b.examples[i].features);
    EXPECT_EQ(a.examples[i].label, b.examples[i].label);
  }
  std::map<std::size_t, int> counts;
  for (const auto& ex : a.examples) ++counts[ex.label];
  EXPECT_EQ(counts[0], 50);
  EXPECT_EQ(counts[1], 50);
}

TEST(SyntheticBlobs, CentresAtRequestedSeparation) {
  const auto ds = SyntheticBlobs(3, 4000, 5, 6.0, 2);
  std::vector<std::vector<double>> mean(3, std::vector<double>(5, 0.0));
  for (const auto& ex : ds.examples)
    for (std::size_t d = 0; d < 5; ++d) mean[ex.label][d] += ex.features[d] / 4000.0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      double sq = 0;
      for (std::size_t d = 0; d < 5; ++d) sq += std::pow(mean[i][d] - mean[j][d], 2);
      EXPECT_NEAR(std::sqrt(sq), 6.0, 0.15);
    }
}

TEST(SyntheticBlobs, InvalidArguments) {
  EXPECT_THROW(SyntheticBlobs(2, 10, 8, 0.0, 1), Error);
  EXPECT_THROW(SyntheticBlobs(1, 10, 8, 6.0, 1), Error);
  EXPECT_THROW(SyntheticBlobs(2, 0, 8, 6.0, 1), Error);
}

TEST(SyntheticImages, RangeAndDeterminism) {
  const auto a = SyntheticImages(4, 5, 8, 0.1, 3);
  const auto b = SyntheticImages(4, 5, 8, 0.1, 3);
  EXPECT_EQ(a.feature_shape, (Shape3{1, 8, 8}));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.examples[i].features, b.examples[i].features);
    for (double v : a.examples[i].features) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_THROW(SyntheticImages(2, 5, 7, 0.1, 3), Error);
}

std::size_t DistinctLabels(const ClientShard& s) {
  std::set<std::size_t> labels;
  for (const auto& ex : s.examples) labels.insert(ex.label);
  return labels.size();
}

TEST(MakeShards, TwoClassesPerClient) {
  const auto ds = SyntheticImages(10, 100, 4, 0.1, 1);
  const auto shards = MakeShards(ds, 20, 50, 2, 7);
  ASSERT_EQ(shards.size(), 20u);
  for (std::size_t k = 0; k < shards.size(); ++k) {
    EXPECT_EQ(shards[k].client_id, k);
    EXPECT_EQ(shards[k].size(), 50u);
    EXPECT_EQ(DistinctLabels(shards[k]), 2u);
  }
}

TEST(MakeShards, AllClassesPerClient) {
  const auto ds = SyntheticBlobs(4, 100, 3, 5.0, 1);
  const auto shards = MakeShards(ds, 5, 40, 4, 7);
  for (const auto& s : shards) EXPECT_EQ(DistinctLabels(s), 4u);
}

TEST(MakeShards, AggregateFrequencyNearUniform) {
  const auto ds = SyntheticImages(10, 700, 4, 0.1, 5);
  const auto shards = MakeShards(ds, 100, 50, 2, 11, ShardReuse::kAllowReuse);
  std::vector<double> freq(10, 0.0);
  double total = 0;
  for (const auto& s : shards)
    for (const auto& ex : s.examples) {
      freq[ex.label] += 1;
      total += 1;
    }
  for (double f : freq) EXPECT_NEAR(f / total, 0.1, 0.02);
}

TEST(MakeShards, DisjointWithinClient) {
  // Distinct feature vectors identify examples.
  const auto ds = SyntheticBlobs(3, 40, 4, 5.0, 2);
  const auto shards = MakeShards(ds, 12, 20, 2, 3, ShardReuse::kAllowReuse);
  for (const auto& s : shards) {
    std::set<std::vector<double>> seen;
    for (const auto& ex : s.examples) EXPECT_TRUE(seen.insert(ex.features).second);
  }
}

TEST(MakeShards, DeterministicGivenSeed) {
  const auto ds = SyntheticBlobs(4, 50, 3, 5.0, 2);
  const auto a = MakeShards(ds, 6, 10, 2, 9);
  const auto b = MakeShards(ds, 6, 10, 2, 9);
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].size(); ++i)
      EXPECT_EQ(a[k].examples[i].features, b[k].examples[i].features);
}

TEST(MakeShards, Errors) {
  const auto ds = SyntheticBlobs(2, 10, 3, 5.0, 2);
  EXPECT_EQ(CodeOf([&] { MakeShards(ds, 2, 4, 3, 1); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { MakeShards(ds, 10, 10, 2, 1); }), ErrorCode::kInsufficientData);
}

TEST(SampleBatch, SingleExampleShard) {
  ClientShard s{0, {{{0.5}, 1}}};
  Generator gen(1);
  const auto batch = SampleBatch(s, 1, gen);
  ASSERT_EQ(batch.size(), 1u);
  EXPECT_EQ(batch[0].features, std::vector<double>{0.5});
}

TEST(SampleBatch, UniformSelectionFrequency) {
  ClientShard s;
  for (int i = 0; i < 10; ++i) s.examples.push_back({{static_cast<double>(i)}, 0});
  Generator gen(77);
  std::vector<int> counts(10, 0);
  const int draws = 100000;
  for (int d = 0; d < draws / 5; ++d)
    for (std::size_t i : SampleBatchIndices(s.size(), 5, gen)) ++counts[i];
  const double sd = std::sqrt(draws * 0.1 * 0.9);
  for (int c : counts) EXPECT_NEAR(c, draws * 0.1, 3 * sd);
}

TEST(SampleBatch, SameStreamSameBatchAndEmptyShardError) {
  ClientShard s;
  for (int i = 0; i < 10; ++i) s.examples.push_back({{static_cast<double>(i)}, 0});
  Generator a = NoiseStream(5).generator(), b = NoiseStream(5).generator();
  EXPECT_EQ(SampleBatchIndices(10, 8, a), SampleBatchIndices(10, 8, b));
  Generator gen(1);
  EXPECT_EQ(CodeOf([&] { SampleBatch(ClientShard{}, 1, gen); }), ErrorCode::kEmptyInput);
}

TEST(SampledClassFrequency, UniformUnderTwoClassSharding) {
  // Uniform client, then uniform example, over two-classes-per-client shards.
  const std::size_t z = 10;
  const auto ds = SyntheticImages(z, 200, 4, 0.1, 4);
  const auto shards = MakeShards(ds, 50, 40, 2, 13, ShardReuse::kAllowReuse);
  Generator gen(2718);
  std::vector<double> counts(z, 0.0);
  const int draws = 100000;
  for (int d = 0; d < draws; ++d) {
    const auto& s = shards[gen.uniform_index(shards.size())];
    ++counts[s.examples[gen.uniform_index(s.size())].label];
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(draws) / z;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(z - 1));
  EXPECT_LT(chi2, boost::math::quantile(dist, 0.99));
}

TEST(SplitEvery, StrideAssignsHoldout) {
  const auto ds = SyntheticBlobs(2, 10, 2, 5.0, 1);
  const auto [train, hold] = SplitEvery(ds, 5);
  EXPECT_EQ(train.size(), 16u);
  EXPECT_EQ(hold.size(), 4u);
  EXPECT_THROW(SplitEvery(ds, 1), Error);
}

}  // namespace
}  // namespace dpfl
