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
#ifndef DPFL_TESTS_TEST_UTIL_HPP_
#define DPFL_TESTS_TEST_UTIL_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dpfl/random.hpp"
#include "dpfl/tensor_nn.hpp"

namespace dpfl::testing {

using Layers = std::vector<std::vector<double>>;

inline Example RandomExample(const Shape3& shape, std::size_t classes, Generator& gen) {
  Example ex;
  ex.features.resize(shape.size());
  for (double& v : ex.features) v = gen.uniform();
  ex.label = gen.uniform_index(classes);
  return ex;
}

inline GradientUpdate RandomUpdateLike(const ModelParams& model, double scale, Generator& gen) {
  GradientUpdate zero = GradientUpdate::ZerosLike(model);
  std::vector<std::vector<double>> layers = zero.layers();
  for (auto& l : layers)
    for (double& v : l) v = scale * gen.normal();
  return GradientUpdate(std::move(layers));
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path ScratchDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dpfl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace dpfl::testing

#endif  // DPFL_TESTS_TEST_UTIL_HPP_
