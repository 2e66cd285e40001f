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
#include "dpfl/model_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "dpfl/error.hpp"

namespace dpfl {
namespace {

constexpr std::array<char, 8> kMagic = {'D', 'P', 'F', 'L', 'M', 'O', 'D', '\0'};
// Sanity cap on declared element counts so a corrupt header cannot trigger a
// huge allocation before the truncation check.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

template <typename U>
void PutLe(std::ostream& out, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename U>
U GetLe(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(U));
  Require(in.gcount() == static_cast<std::streamsize>(sizeof(U)), ErrorCode::kTruncatedFile,
          "model file ends inside a header");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

std::uint32_t Narrow(std::size_t v) {
  Require(v <= 0xFFFFFFFFu, ErrorCode::kOutOfRange, "dimension does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

void PutShape(std::ostream& out, const Shape3& s) {
  PutLe(out, Narrow(s.channels));
  PutLe(out, Narrow(s.height));
  PutLe(out, Narrow(s.width));
}

Shape3 GetShape(std::istream& in) {
  Shape3 s;
  s.channels = GetLe<std::uint32_t>(in);
  s.height = GetLe<std::uint32_t>(in);
  s.width = GetLe<std::uint32_t>(in);
  return s;
}

void GetDoubles(std::istream& in, std::vector<double>& dst, std::uint64_t count) {
  Require(count <= kMaxElements, ErrorCode::kCountMismatch, "implausible parameter count");
  dst.resize(count);
  for (auto& v : dst) v = std::bit_cast<double>(GetLe<std::uint64_t>(in));
}

std::pair<std::size_t, std::size_t> ExpectedCounts(const LayerParams& l) {
  switch (l.kind) {
    case LayerKind::kDense:
      return {l.output.size() * l.input.size(), l.output.size()};
    case LayerKind::kConv:
      return {l.output.channels * l.input.channels * l.kernel * l.kernel, l.output.channels};
    default:
      return {0, 0};
  }
}

}  // namespace

void WriteModel(std::ostream& out, const ModelParams& model) {
  out.write(kMagic.data(), kMagic.size());
  PutLe(out, kModelFormatVersion);
  PutShape(out, model.input_shape);
  PutLe(out, Narrow(model.classes));
  PutLe(out, Narrow(model.layers.size()));
  for (const auto& l : model.layers) {
    PutLe(out, static_cast<std::uint32_t>(l.kind));
    PutShape(out, l.input);
    PutShape(out, l.output);
    PutLe(out, Narrow(l.kernel));
    PutLe(out, static_cast<std::uint64_t>(l.weights.size()));
    PutLe(out, static_cast<std::uint64_t>(l.bias.size()));
    for (double v : l.weights) PutLe(out, std::bit_cast<std::uint64_t>(v));
    for (double v : l.bias) PutLe(out, std::bit_cast<std::uint64_t>(v));
  }
  Require(static_cast<bool>(out), ErrorCode::kIo, "failed writing model");
}

ModelParams ReadModel(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  Require(in.gcount() == static_cast<std::streamsize>(magic.size()), ErrorCode::kTruncatedFile,
          "model file shorter than its magic");
  Require(magic == kMagic, ErrorCode::kBadMagic, "not a dpfl model file");
  const auto version = GetLe<std::uint32_t>(in);
  Require(version == kModelFormatVersion, ErrorCode::kBadMagic,
          "unsupported model format version " + std::to_string(version));
  ModelParams model;
  model.input_shape = GetShape(in);
  model.classes = GetLe<std::uint32_t>(in);
  const auto count = GetLe<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerParams l;
    const auto tag = GetLe<std::uint32_t>(in);
    Require(tag >= 1 && tag <= 5, ErrorCode::kBadMagic, "unknown layer kind " + std::to_string(tag));
    l.kind = static_cast<LayerKind>(tag);
    l.input = GetShape(in);
    l.output = GetShape(in);
    l.kernel = GetLe<std::uint32_t>(in);
    const auto nw = GetLe<std::uint64_t>(in);
    const auto nb = GetLe<std::uint64_t>(in);
    const auto [ew, eb] = ExpectedCounts(l);
    Require(nw == ew && nb == eb, ErrorCode::kCountMismatch,
            "layer " + std::to_string(i) + " declares " + std::to_string(nw) + "+" +
                std::to_string(nb) + " parameters, shape implies " + std::to_string(ew) + "+" +
                std::to_string(eb));
    GetDoubles(in, l.weights, nw);
    GetDoubles(in, l.bias, nb);
    model.layers.push_back(std::move(l));
  }
  return model;
}

void SaveModel(const std::filesystem::path& path, const ModelParams& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  WriteModel(out, model);
}

ModelParams LoadModel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  return ReadModel(in);
}

}  // namespace dpfl
