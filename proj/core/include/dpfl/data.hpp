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
#ifndef DPFL_DATA_HPP_
#define DPFL_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dpfl/random.hpp"
#include "dpfl/tensor_nn.hpp"

namespace dpfl {

struct Dataset {
  std::string name;
  Shape3 feature_shape;
  std::size_t classes = 0;  // Z
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
};

struct ClientShard {
  std::size_t client_id = 0;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
};

// IDX image/label pair (big-endian header, magic 0x00000803 for 3-D ubyte
// images and 0x00000801 for 1-D ubyte labels). Pixels are scaled to [0, 1].
// Errors: kBadMagic, kTruncatedFile, kCountMismatch, kIo.
Dataset LoadIdx(const std::filesystem::path& images_path,
                const std::filesystem::path& labels_path);

struct CsvSchema {
  // Columns one-hot encoded over their sorted distinct values.
  std::set<std::string> categorical;
};

// Header row required. Numeric feature columns are min-max scaled to [0, 1];
// categorical columns are one-hot encoded; labels are the sorted distinct
// values of `label_column`.
// Errors: kMissingColumn, kNonNumericCell, kEmptyInput, kIo.
Dataset LoadCsv(const std::filesystem::path& path, const std::string& label_column,
                const CsvSchema& schema = {});

// Gaussian clusters with unit variance. For Z <= dim the class-z centre is
// (separation / sqrt 2) * e_z, so every pair of centres is `separation` apart;
// for Z > dim centres are seeded random directions at radius `separation`.
Dataset SyntheticBlobs(std::size_t classes, std::size_t per_class, std::size_t dim,
                       double separation, std::uint64_t seed);

// side x side single-channel images in [0, 1]: each class has a random 2x2-cell
// block prototype; examples add per-pixel jitter of the given amplitude and are
// stored grouped by class.
Dataset SyntheticImages(std::size_t classes, std::size_t per_class, std::size_t side,
                        double jitter, std::uint64_t seed);

enum class ShardReuse {
  // Examples are consumed without replacement across all clients.
  kDisjoint,
  // Exhausted class pools are reshuffled and reused across clients (never
  // within one client); supports "every client holds a full copy".
  kAllowReuse,
};

// Each client receives `per_client` examples from exactly
// `classes_per_client` classes. Client k takes the classes at positions
// k*c .. k*c+c-1 (mod Z) of a seeded class permutation, so aggregate class
// frequencies stay near-uniform.
std::vector<ClientShard> MakeShards(const Dataset& ds, std::size_t clients,
                                    std::size_t per_client, std::size_t classes_per_client,
                                    std::uint64_t seed,
                                    ShardReuse reuse = ShardReuse::kDisjoint);

// B examples drawn uniformly with replacement.
std::vector<Example> SampleBatch(const ClientShard& shard, std::size_t batch_size,
                                 Generator& gen);
// Indices variant of SampleBatch consuming the identical draws.
std::vector<std::size_t> SampleBatchIndices(std::size_t shard_size, std::size_t batch_size,
                                            Generator& gen);

// Deterministic split: every `stride`-th example (by position) goes to the
// second dataset.
std::pair<Dataset, Dataset> SplitEvery(const Dataset& ds, std::size_t stride);

}  // namespace dpfl

#endif  // DPFL_DATA_HPP_
