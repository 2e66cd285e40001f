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
#ifndef DPFL_MODEL_IO_HPP_
#define DPFL_MODEL_IO_HPP_

// model.bin: a little-endian binary snapshot of ModelParams.
//
//   bytes  field
//   8      magic "DPFLMOD\0"
//   4      u32 format version (1)
//   12     u32 input channels, height, width
//   4      u32 classes
//   4      u32 layer count
//   per layer:
//     4    u32 kind tag (LayerKind value)
//     12   u32 input channels, height, width
//     12   u32 output channels, height, width
//     4    u32 kernel
//     8    u64 weight count
//     8    u64 bias count
//     8*n  f64 weights, then f64 bias

#include <filesystem>
#include <iosfwd>

#include "dpfl/tensor_nn.hpp"

namespace dpfl {

inline constexpr std::uint32_t kModelFormatVersion = 1;

void WriteModel(std::ostream& out, const ModelParams& model);
// Errors: kBadMagic, kTruncatedFile, kCountMismatch, kIo.
ModelParams ReadModel(std::istream& in);

void SaveModel(const std::filesystem::path& path, const ModelParams& model);
ModelParams LoadModel(const std::filesystem::path& path);

}  // namespace dpfl

#endif  // DPFL_MODEL_IO_HPP_
