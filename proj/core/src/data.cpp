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
#include "dpfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "dpfl/error.hpp"

namespace dpfl {
namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::vector<unsigned char> ReadAll(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t ReadBigEndian32(const std::vector<unsigned char>& bytes, std::size_t offset,
                              const std::string& what) {
  Require(bytes.size() >= offset + 4, ErrorCode::kTruncatedFile, what + ": truncated header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(Trim(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  cells.push_back(Trim(cell));
  return cells;
}

bool ParseDouble(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == s.size() && std::isfinite(out);
}

}  // namespace

Dataset LoadIdx(const std::filesystem::path& images_path,
                const std::filesystem::path& labels_path) {
  const auto img = ReadAll(images_path);
  const auto lab = ReadAll(labels_path);

  const std::uint32_t img_magic = ReadBigEndian32(img, 0, "images");
  Require(img_magic == kIdxImageMagic, ErrorCode::kBadMagic,
          "images file magic is not 0x00000803");
  const std::uint32_t lab_magic = ReadBigEndian32(lab, 0, "labels");
  Require(lab_magic == kIdxLabelMagic, ErrorCode::kBadMagic,
          "labels file magic is not 0x00000801");

  const std::size_t n_img = ReadBigEndian32(img, 4, "images");
  const std::size_t rows = ReadBigEndian32(img, 8, "images");
  const std::size_t cols = ReadBigEndian32(img, 12, "images");
  const std::size_t n_lab = ReadBigEndian32(lab, 4, "labels");
  Require(n_img == n_lab, ErrorCode::kCountMismatch,
          std::to_string(n_img) + " images but " + std::to_string(n_lab) + " labels");
  const std::size_t pixels = rows * cols;
  Require(img.size() >= 16 + n_img * pixels, ErrorCode::kTruncatedFile,
          "images payload shorter than header declares");
  Require(lab.size() >= 8 + n_lab, ErrorCode::kTruncatedFile,
          "labels payload shorter than header declares");
  Require(n_img > 0, ErrorCode::kEmptyInput, "IDX files contain no examples");

  Dataset ds;
  ds.name = images_path.stem().string();
  ds.feature_shape = {1, rows, cols};
  ds.examples.reserve(n_img);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n_img; ++i) {
    Example ex;
    ex.features.resize(pixels);
    const unsigned char* src = img.data() + 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) ex.features[p] = src[p] / 255.0;
    ex.label = lab[8 + i];
    max_label = std::max(max_label, ex.label);
    ds.examples.push_back(std::move(ex));
  }
  ds.classes = max_label + 1;
  return ds;
}

Dataset LoadCsv(const std::filesystem::path& path, const std::string& label_column,
                const CsvSchema& schema) {
  std::ifstream in(path);
  Require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!Trim(line).empty()) {
      header = SplitCsvLine(line);
      break;
    }
  }
  Require(!header.empty(), ErrorCode::kEmptyInput, path.string() + " is empty");

  const auto label_it = std::find(header.begin(), header.end(), label_column);
  Require(label_it != header.end(), ErrorCode::kMissingColumn,
          "label column '" + label_column + "' not in header");
  const std::size_t label_idx = static_cast<std::size_t>(label_it - header.begin());
  for (const auto& cat : schema.categorical) {
    Require(std::find(header.begin(), header.end(), cat) != header.end(),
            ErrorCode::kMissingColumn, "categorical column '" + cat + "' not in header");
  }

  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    auto cells = SplitCsvLine(line);
    Require(cells.size() == header.size(), ErrorCode::kMissingColumn,
            "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                " cells, header has " + std::to_string(header.size()));
    rows.push_back(std::move(cells));
  }
  Require(!rows.empty(), ErrorCode::kEmptyInput, path.string() + " has no data rows");

  // Per-column encoders, in header order (label column skipped).
  struct Column {
    std::size_t index;
    bool categorical;
    std::vector<std::string> levels;  // categorical
    double lo = 0.0, hi = 0.0;        // numeric
  };
  std::vector<Column> columns;
  std::vector<std::vector<double>> numeric(rows.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == label_idx) continue;
    Column col{c, schema.categorical.contains(header[c]), {}};
    if (col.categorical) {
      std::set<std::string> levels;
      for (const auto& r : rows) levels.insert(r[c]);
      col.levels.assign(levels.begin(), levels.end());
    } else {
      col.lo = std::numeric_limits<double>::infinity();
      col.hi = -std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < rows.size(); ++r) {
        double v = 0.0;
        Require(ParseDouble(rows[r][c], v), ErrorCode::kNonNumericCell,
                "column '" + header[c] + "' row " + std::to_string(r + 1) + ": '" +
                    rows[r][c] + "' is not numeric");
        col.lo = std::min(col.lo, v);
        col.hi = std::max(col.hi, v);
        numeric[r].push_back(v);
      }
    }
    columns.push_back(std::move(col));
  }

  std::set<std::string> label_set;
  for (const auto& r : rows) label_set.insert(r[label_idx]);
  const std::vector<std::string> labels(label_set.begin(), label_set.end());

  Dataset ds;
  ds.name = path.stem().string();
  ds.classes = labels.size();
  std::size_t width = 0;
  for (const auto& col : columns) width += col.categorical ? col.levels.size() : 1;
  ds.feature_shape = {width, 1, 1};
  ds.examples.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Example ex;
    ex.features.reserve(width);
    std::size_t numeric_pos = 0;
    for (const auto& col : columns) {
      if (col.categorical) {
        for (const auto& level : col.levels) ex.features.push_back(rows[r][col.index] == level);
      } else {
        const double v = numeric[r][numeric_pos++];
        const double span = col.hi - col.lo;
        ex.features.push_back(span > 0.0 ? (v - col.lo) / span : 0.0);
      }
    }
    ex.label = static_cast<std::size_t>(
        std::lower_bound(labels.begin(), labels.end(), rows[r][label_idx]) - labels.begin());
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

Dataset SyntheticBlobs(std::size_t classes, std::size_t per_class, std::size_t dim,
                       double separation, std::uint64_t seed) {
  Require(classes >= 2, ErrorCode::kInvalidArgument, "blobs need at least 2 classes");
  Require(per_class >= 1, ErrorCode::kInvalidArgument, "blobs need per_class >= 1");
  Require(dim >= 1, ErrorCode::kInvalidArgument, "blobs need dim >= 1");
  Require(separation > 0.0 && std::isfinite(separation), ErrorCode::kInvalidArgument,
          "blob separation must be positive");
  const NoiseStream root(seed);
  std::vector<std::vector<double>> centres(classes, std::vector<double>(dim, 0.0));
  if (classes <= dim) {
    for (std::size_t z = 0; z < classes; ++z) centres[z][z] = separation / std::sqrt(2.0);
  } else {
    Generator gen = root.derive({1}).generator();
    for (auto& c : centres) {
      for (double& v : c) v = gen.normal();
      const double n = L2Norm(c);
      for (double& v : c) v *= separation / n;
    }
  }
  Dataset ds;
  ds.name = "blobs";
  ds.classes = classes;
  ds.feature_shape = {dim, 1, 1};
  Generator gen = root.derive({2}).generator();
  for (std::size_t z = 0; z < classes; ++z) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Example ex;
      ex.label = z;
      ex.features.resize(dim);
      for (std::size_t d = 0; d < dim; ++d) ex.features[d] = centres[z][d] + gen.normal();
      ds.examples.push_back(std::move(ex));
    }
  }
  return ds;
}

Dataset SyntheticImages(std::size_t classes, std::size_t per_class, std::size_t side,
                        double jitter, std::uint64_t seed) {
  Require(classes >= 2 && per_class >= 1, ErrorCode::kInvalidArgument,
          "synthetic images need classes >= 2 and per_class >= 1");
  Require(side >= 2 && side % 2 == 0, ErrorCode::kInvalidArgument,
          "synthetic image side must be even");
  Require(jitter >= 0.0, ErrorCode::kInvalidArgument, "jitter must be non-negative");
  const NoiseStream root(seed);
  Generator proto_gen = root.derive({1}).generator();
  std::vector<std::vector<double>> protos(classes, std::vector<double>(side * side));
  for (auto& p : protos) {
    for (std::size_t by = 0; by < side / 2; ++by) {
      for (std::size_t bx = 0; bx < side / 2; ++bx) {
        const double level = proto_gen.uniform();
        for (std::size_t u = 0; u < 2; ++u)
          for (std::size_t v = 0; v < 2; ++v) p[(2 * by + u) * side + 2 * bx + v] = level;
      }
    }
  }
  Dataset ds;
  ds.name = "images";
  ds.classes = classes;
  ds.feature_shape = {1, side, side};
  Generator gen = root.derive({2}).generator();
  for (std::size_t z = 0; z < classes; ++z) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Example ex;
      ex.label = z;
      ex.features = protos[z];
      for (double& v : ex.features) v = std::clamp(v + jitter * (2.0 * gen.uniform() - 1.0), 0.0, 1.0);
      ds.examples.push_back(std::move(ex));
    }
  }
  return ds;
}

std::vector<ClientShard> MakeShards(const Dataset& ds, std::size_t clients,
                                    std::size_t per_client, std::size_t classes_per_client,
                                    std::uint64_t seed, ShardReuse reuse) {
  Require(clients >= 1 && per_client >= 1, ErrorCode::kInvalidArgument,
          "need at least one client and one example per client");
  Require(classes_per_client >= 1 && classes_per_client <= ds.classes,
          ErrorCode::kInvalidArgument,
          "classes_per_client must be in [1, Z=" + std::to_string(ds.classes) + "]");
  Require(per_client >= classes_per_client, ErrorCode::kInvalidArgument,
          "per_client must cover every assigned class");

  const NoiseStream root(seed);
  std::vector<std::vector<std::size_t>> pools(ds.classes);
  for (std::size_t i = 0; i < ds.examples.size(); ++i) pools[ds.examples[i].label].push_back(i);

  auto shuffle = [](std::vector<std::size_t>& v, Generator& gen) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[gen.uniform_index(i)]);
  };

  std::vector<std::size_t> perm(ds.classes);
  std::iota(perm.begin(), perm.end(), 0);
  {
    Generator gen = root.derive({1}).generator();
    shuffle(perm, gen);
  }
  std::vector<std::uint64_t> reshuffles(ds.classes, 0);
  for (std::size_t z = 0; z < ds.classes; ++z) {
    Generator gen = root.derive({2, z, 0}).generator();
    shuffle(pools[z], gen);
  }
  std::vector<std::size_t> cursor(ds.classes, 0);

  std::vector<ClientShard> shards(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    shards[k].client_id = k;
    const std::size_t base = per_client / classes_per_client;
    const std::size_t extra = per_client % classes_per_client;
    for (std::size_t r = 0; r < classes_per_client; ++r) {
      const std::size_t z = perm[(k * classes_per_client + r) % ds.classes];
      const std::size_t need = base + (r < extra ? 1 : 0);
      auto& pool = pools[z];
      Require(need <= pool.size(), ErrorCode::kInsufficientData,
              "client " + std::to_string(k) + " needs " + std::to_string(need) +
                  " examples of class " + std::to_string(z) + ", only " +
                  std::to_string(pool.size()) + " exist");
      if (cursor[z] + need > pool.size()) {
        Require(reuse == ShardReuse::kAllowReuse, ErrorCode::kInsufficientData,
                "class " + std::to_string(z) + " exhausted after " + std::to_string(k) +
                    " clients; use reuse or fewer clients");
        // Restart from a fresh permutation; the remaining tail is skipped so a
        // client never receives the same example twice.
        Generator gen = root.derive({2, z, ++reshuffles[z]}).generator();
        shuffle(pool, gen);
        cursor[z] = 0;
      }
      for (std::size_t n = 0; n < need; ++n) shards[k].examples.push_back(ds.examples[pool[cursor[z]++]]);
    }
  }
  return shards;
}

std::vector<std::size_t> SampleBatchIndices(std::size_t shard_size, std::size_t batch_size,
                                            Generator& gen) {
  Require(shard_size > 0, ErrorCode::kEmptyInput, "cannot sample from an empty shard");
  Require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch size must be >= 1");
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = gen.uniform_index(shard_size);
  return idx;
}

std::vector<Example> SampleBatch(const ClientShard& shard, std::size_t batch_size,
                                 Generator& gen) {
  const auto idx = SampleBatchIndices(shard.size(), batch_size, gen);
  std::vector<Example> batch;
  batch.reserve(idx.size());
  for (std::size_t i : idx) batch.push_back(shard.examples[i]);
  return batch;
}

std::pair<Dataset, Dataset> SplitEvery(const Dataset& ds, std::size_t stride) {
  Require(stride >= 2, ErrorCode::kInvalidArgument, "split stride must be >= 2");
  Dataset a, b;
  a.name = ds.name;
  b.name = ds.name + "-holdout";
  a.feature_shape = b.feature_shape = ds.feature_shape;
  a.classes = b.classes = ds.classes;
  for (std::size_t i = 0; i < ds.examples.size(); ++i)
    ((i % stride == stride - 1) ? b : a).examples.push_back(ds.examples[i]);
  return {std::move(a), std::move(b)};
}

}  // namespace dpfl
