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
#include "dpfl/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <system_error>

#include "dpfl/accountant.hpp"
#include "dpfl/error.hpp"
#include "dpfl/model_io.hpp"
#include "dpfl/parallel.hpp"
#include "dpfl/tradeoff.hpp"

namespace dpfl {
namespace {

constexpr std::uint64_t kAttackStream = 5;
constexpr std::uint64_t kShardSalt = 0x5348415244ULL;

std::string Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void BadValue(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorCode::kConfig, "key '" + key + "': expected " + want + ", got '" + value + "'");
}

double ToDouble(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out))
    BadValue(key, v, "a finite number");
  return out;
}

std::uint64_t ToU64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
    BadValue(key, v, "a non-negative integer");
  return out;
}

std::size_t ToSize(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(ToU64(key, v));
}

bool ToBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  BadValue(key, v, "true/false");
}

std::vector<std::string> SplitList(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

LeakType ToLeakType(const std::string& key, const std::string& v) {
  if (v == "type0" || v == "0") return LeakType::kType0;
  if (v == "type1" || v == "1") return LeakType::kType1;
  if (v == "type2" || v == "2") return LeakType::kType2;
  BadValue(key, v, "type0|type1|type2");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& Setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> s;
    s["seed"] = [](auto& c, auto& k, auto& v) { c.master_seed = ToU64(k, v); };
    s["output"] = [](auto& c, auto&, auto& v) { c.output = v; };

    s["dataset.source"] = [](auto& c, auto& k, auto& v) {
      if (v != "blobs" && v != "images" && v != "idx" && v != "csv")
        BadValue(k, v, "blobs|images|idx|csv");
      c.dataset.source = v;
    };
    s["dataset.classes"] = [](auto& c, auto& k, auto& v) { c.dataset.classes = ToSize(k, v); };
    s["dataset.per_class"] = [](auto& c, auto& k, auto& v) { c.dataset.per_class = ToSize(k, v); };
    s["dataset.dim"] = [](auto& c, auto& k, auto& v) { c.dataset.dim = ToSize(k, v); };
    s["dataset.separation"] = [](auto& c, auto& k, auto& v) {
      c.dataset.separation = ToDouble(k, v);
    };
    s["dataset.side"] = [](auto& c, auto& k, auto& v) { c.dataset.side = ToSize(k, v); };
    s["dataset.jitter"] = [](auto& c, auto& k, auto& v) { c.dataset.jitter = ToDouble(k, v); };
    s["dataset.images"] = [](auto& c, auto&, auto& v) { c.dataset.images = v; };
    s["dataset.labels"] = [](auto& c, auto&, auto& v) { c.dataset.labels = v; };
    s["dataset.path"] = [](auto& c, auto&, auto& v) { c.dataset.csv = v; };
    s["dataset.label_column"] = [](auto& c, auto&, auto& v) { c.dataset.label_column = v; };
    s["dataset.categorical"] = [](auto& c, auto&, auto& v) {
      const auto items = SplitList(v);
      c.dataset.categorical = {items.begin(), items.end()};
    };
    s["dataset.per_client"] = [](auto& c, auto& k, auto& v) {
      c.dataset.per_client = ToSize(k, v);
    };
    s["dataset.classes_per_client"] = [](auto& c, auto& k, auto& v) {
      c.dataset.classes_per_client = ToSize(k, v);
    };
    s["dataset.reuse"] = [](auto& c, auto& k, auto& v) {
      if (v == "disjoint") c.dataset.reuse = ShardReuse::kDisjoint;
      else if (v == "allow") c.dataset.reuse = ShardReuse::kAllowReuse;
      else BadValue(k, v, "disjoint|allow");
    };
    s["dataset.validation_stride"] = [](auto& c, auto& k, auto& v) {
      c.dataset.validation_stride = ToSize(k, v);
    };
    s["dataset.seed"] = [](auto& c, auto& k, auto& v) { c.dataset.seed = ToU64(k, v); };

    s["model.arch"] = [](auto& c, auto&, auto& v) { c.federation.arch = v; };

    s["federation.clients"] = [](auto& c, auto& k, auto& v) { c.federation.clients = ToSize(k, v); };
    s["federation.per_round"] = [](auto& c, auto& k, auto& v) {
      c.federation.per_round = ToSize(k, v);
    };
    s["federation.rounds"] = [](auto& c, auto& k, auto& v) { c.federation.rounds = ToSize(k, v); };
    s["federation.local_iters"] = [](auto& c, auto& k, auto& v) {
      c.federation.local_iters = ToSize(k, v);
    };
    s["federation.batch_size"] = [](auto& c, auto& k, auto& v) {
      c.federation.batch_size = ToSize(k, v);
    };
    s["federation.eta"] = [](auto& c, auto& k, auto& v) { c.federation.eta = ToDouble(k, v); };
    s["federation.aggregation"] = [](auto& c, auto& k, auto& v) {
      if (v == "fedsgd") c.federation.aggregation = Aggregation::kFedSgd;
      else if (v == "fedavg") c.federation.aggregation = Aggregation::kFedAvg;
      else BadValue(k, v, "fedsgd|fedavg");
    };
    s["federation.compression"] = [](auto& c, auto& k, auto& v) {
      c.federation.compression = ToDouble(k, v);
    };

    s["dp.placement"] = [](auto& c, auto& k, auto& v) {
      auto& p = c.federation.dp.placement;
      if (v == "none" || v == "non-private") p = Placement::kNone;
      else if (v == "per-example" || v == "fed-cdp") p = Placement::kPerExample;
      else if (v == "per-client" || v == "fed-sdp") p = Placement::kPerClient;
      else BadValue(k, v, "none|per-example|per-client");
    };
    s["dp.sigma"] = [](auto& c, auto& k, auto& v) { c.federation.dp.sigma = ToDouble(k, v); };
    s["dp.delta"] = [](auto& c, auto& k, auto& v) { c.federation.dp.delta = ToDouble(k, v); };
    s["dp.clip"] = [](auto& c, auto& k, auto& v) {
      auto& s = c.federation.dp.schedule;
      s.start = ToDouble(k, v);
      if (s.kind == ClipSchedule::Kind::kConstant) s.end = s.start;
    };
    s["dp.clip_end"] = [](auto& c, auto& k, auto& v) {
      c.federation.dp.schedule.end = ToDouble(k, v);
    };
    s["dp.schedule"] = [](auto& c, auto& k, auto& v) {
      auto& s = c.federation.dp.schedule;
      if (v == "constant") {
        s.kind = ClipSchedule::Kind::kConstant;
        s.end = s.start;
      } else if (v == "linear-decay") {
        s.kind = ClipSchedule::Kind::kLinearDecay;
      } else {
        BadValue(k, v, "constant|linear-decay");
      }
    };
    s["dp.noise_side"] = [](auto& c, auto& k, auto& v) {
      if (v == "server") c.federation.dp.sdp_noise_side = SdpNoiseSide::kServer;
      else if (v == "client") c.federation.dp.sdp_noise_side = SdpNoiseSide::kClient;
      else BadValue(k, v, "server|client");
    };

    s["attack.types"] = [](auto& c, auto& k, auto& v) {
      c.attack_types.clear();
      for (const auto& item : SplitList(v)) c.attack_types.push_back(ToLeakType(k, item));
      if (c.attack_types.empty()) BadValue(k, v, "a non-empty list");
    };
    s["attack.examples"] = [](auto& c, auto& k, auto& v) {
      c.attack_examples.clear();
      for (const auto& item : SplitList(v)) c.attack_examples.push_back(ToSize(k, item));
      if (c.attack_examples.empty()) BadValue(k, v, "a non-empty list");
    };
    s["attack.round"] = [](auto& c, auto& k, auto& v) { c.attack_round = ToSize(k, v); };
    s["attack.client"] = [](auto& c, auto& k, auto& v) { c.attack_client = ToSize(k, v); };
    s["attack.max_iters"] = [](auto& c, auto& k, auto& v) { c.attack.max_iters = ToSize(k, v); };
    s["attack.threshold"] = [](auto& c, auto& k, auto& v) { c.attack.threshold = ToDouble(k, v); };
    s["attack.step_size"] = [](auto& c, auto& k, auto& v) { c.attack.step_size = ToDouble(k, v); };
    s["attack.fd_step"] = [](auto& c, auto& k, auto& v) { c.attack.fd_step = ToDouble(k, v); };
    s["attack.fd_coordinates"] = [](auto& c, auto& k, auto& v) {
      c.attack.fd_coordinates = ToSize(k, v);
    };
    s["attack.optimizer"] = [](auto& c, auto& k, auto& v) {
      if (v == "gd") c.attack.optimizer = AttackOptimizer::kGradientDescentFd;
      else if (v == "adam") c.attack.optimizer = AttackOptimizer::kAdamFd;
      else BadValue(k, v, "gd|adam");
    };
    s["attack.seed_mode"] = [](auto& c, auto& k, auto& v) {
      if (v == "patterned") c.attack.seed_mode = SeedMode::kPatternedRandom;
      else if (v == "uniform") c.attack.seed_mode = SeedMode::kUniformRandom;
      else if (v == "zeros") c.attack.seed_mode = SeedMode::kZeros;
      else BadValue(k, v, "patterned|uniform|zeros");
    };
    s["attack.labels"] = [](auto& c, auto& k, auto& v) {
      if (v == "known") c.attack.label_mode = LabelMode::kKnown;
      else if (v == "infer") c.attack.label_mode = LabelMode::kInferLastLayer;
      else BadValue(k, v, "known|infer");
    };
    s["attack.match_support"] = [](auto& c, auto& k, auto& v) {
      if (v == "auto") c.attack_match_support.reset();
      else c.attack_match_support = ToBool(k, v);
    };

    s["sweep.axis"] = [](auto& c, auto& k, auto& v) {
      if (v != "clip" && v != "sigma" && v != "compression")
        BadValue(k, v, "clip|sigma|compression");
      c.sweep.axis = v;
    };
    s["sweep.values"] = [](auto& c, auto& k, auto& v) {
      c.sweep.values.clear();
      for (const auto& item : SplitList(v)) c.sweep.values.push_back(ToDouble(k, item));
    };
    s["sweep.seeds"] = [](auto& c, auto& k, auto& v) {
      c.sweep.seeds.clear();
      for (const auto& item : SplitList(v)) c.sweep.seeds.push_back(ToU64(k, item));
    };
    s["sweep.attack"] = [](auto& c, auto& k, auto& v) { c.sweep.attack = ToBool(k, v); };

    s["account.preset"] = [](auto& c, auto&, auto& v) { c.account.preset = v; };
    s["account.q"] = [](auto& c, auto& k, auto& v) { c.account.q = ToDouble(k, v); };
    s["account.sigma"] = [](auto& c, auto& k, auto& v) { c.account.sigma = ToDouble(k, v); };
    s["account.delta"] = [](auto& c, auto& k, auto& v) { c.account.delta = ToDouble(k, v); };
    s["account.steps"] = [](auto& c, auto& k, auto& v) { c.account.steps = ToU64(k, v); };
    return s;
  }();
  return table;
}

struct PresetProfile {
  ConfigEntries desk;
  ConfigEntries full;
};

const std::map<std::string, PresetProfile>& Presets() {
  static const std::map<std::string, PresetProfile> table = [] {
    std::map<std::string, PresetProfile> p;
    const ConfigEntries blobs = {
        {"dataset.source", "blobs"},      {"dataset.classes", "2"},
        {"dataset.dim", "8"},             {"dataset.per_class", "400"},
        {"dataset.separation", "6"},      {"dataset.per_client", "25"},
        {"dataset.classes_per_client", "2"}, {"model.arch", "mlp-tiny"},
        {"federation.clients", "20"},     {"federation.per_round", "10"},
        {"federation.rounds", "20"},      {"federation.local_iters", "5"},
        {"federation.batch_size", "5"},   {"federation.eta", "0.1"},
        {"dp.sigma", "6"},                {"dp.clip", "4"},
    };
    p["blobs"] = {blobs, blobs};

    auto images_desk = [](std::string classes, std::string batch) {
      return ConfigEntries{
          {"dataset.source", "images"},     {"dataset.classes", classes},
          {"dataset.side", "8"},            {"dataset.per_class", "100"},
          {"dataset.jitter", "0.1"},        {"dataset.per_client", "20"},
          {"dataset.classes_per_client", "2"}, {"dataset.reuse", "allow"},
          {"model.arch", "mlp-tiny"},       {"federation.clients", "20"},
          {"federation.per_round", "10"},   {"federation.rounds", "10"},
          {"federation.local_iters", "4"},  {"federation.batch_size", batch},
          {"dp.sigma", "6"},                {"dp.clip", "4"},
      };
    };
    auto full_row = [](ConfigEntries data, std::string per_client, std::string batch,
                        std::string rounds, std::string arch) {
      data.insert(data.end(), {{"dataset.per_client", per_client},
                               {"model.arch", arch},
                               {"federation.clients", "100"},
                               {"federation.per_round", "10"},
                               {"federation.rounds", rounds},
                               {"federation.local_iters", "100"},
                               {"federation.batch_size", batch},
                               {"dp.sigma", "6"},
                               {"dp.clip", "4"}});
      return data;
    };

    p["mnist-like"] = {
        images_desk("10", "5"),
        full_row({{"dataset.source", "images"}, {"dataset.classes", "10"}, {"dataset.side", "28"},
                   {"dataset.per_class", "7000"}, {"dataset.validation_stride", "7"},
                   {"dataset.classes_per_client", "2"}},
                  "500", "5", "100", "cnn-small")};
    p["cifar-like"] = {
        images_desk("10", "4"),
        full_row({{"dataset.source", "images"}, {"dataset.classes", "10"}, {"dataset.side", "32"},
                   {"dataset.per_class", "6000"}, {"dataset.validation_stride", "6"},
                   {"dataset.classes_per_client", "2"}},
                  "400", "4", "100", "cnn-small")};
    auto lfw_desk = images_desk("12", "3");
    lfw_desk.insert(lfw_desk.end(), {{"dataset.per_class", "40"},
                                     {"dataset.per_client", "15"},
                                     {"dataset.classes_per_client", "3"}});
    p["lfw-like"] = {
        lfw_desk,
        full_row({{"dataset.source", "images"}, {"dataset.classes", "62"}, {"dataset.side", "32"},
                   {"dataset.per_class", "49"}, {"dataset.validation_stride", "4"},
                   {"dataset.classes_per_client", "10"}, {"dataset.reuse", "allow"}},
                  "300", "3", "60", "cnn-small")};

    auto tabular_desk = [](std::string dim, std::string batch) {
      return ConfigEntries{
          {"dataset.source", "blobs"},     {"dataset.classes", "2"},
          {"dataset.dim", dim},            {"dataset.per_class", "300"},
          {"dataset.separation", "3"},     {"dataset.per_client", "20"},
          {"dataset.classes_per_client", "2"}, {"model.arch", "mlp-2h"},
          {"federation.clients", "20"},    {"federation.per_round", "10"},
          {"federation.rounds", "10"},     {"federation.local_iters", "4"},
          {"federation.batch_size", batch}, {"dp.sigma", "6"},
          {"dp.clip", "4"},
      };
    };
    p["adult"] = {
        tabular_desk("16", "3"),
        full_row({{"dataset.source", "blobs"}, {"dataset.classes", "2"}, {"dataset.dim", "105"},
                   {"dataset.per_class", "24421"}, {"dataset.validation_stride", "4"},
                   {"dataset.classes_per_client", "2"}},
                  "300", "3", "10", "mlp-2h")};
    p["cancer"] = {
        tabular_desk("8", "4"),
        full_row({{"dataset.source", "blobs"}, {"dataset.classes", "2"}, {"dataset.dim", "30"},
                   {"dataset.per_class", "285"}, {"dataset.validation_stride", "4"},
                   {"dataset.classes_per_client", "2"}, {"dataset.reuse", "allow"}},
                  "400", "4", "3", "mlp-2h")};
    return p;
  }();
  return table;
}

void RequireConfig(bool ok, const std::string& msg) { Require(ok, ErrorCode::kConfig, msg); }

FederationConfig WithSeed(const ExperimentConfig& c) {
  FederationConfig f = c.federation;
  f.master_seed = *c.master_seed;
  return f;
}

ExperimentConfig ApplySweepValue(ExperimentConfig c, const std::string& axis, double value) {
  if (axis == "clip") {
    c.federation.dp.schedule = ClipSchedule::Constant(value);
  } else if (axis == "sigma") {
    c.federation.dp.sigma = value;
  } else {
    c.federation.compression = value;
  }
  return c;
}

void CheckWritableDir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  RequireConfig(!ec && std::filesystem::is_directory(dir),
            "output directory " + dir.string() + " cannot be created");
  const auto probe = dir / ".dpfl-write-probe";
  {
    std::ofstream out(probe);
    RequireConfig(static_cast<bool>(out), "output directory " + dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

void ValidateRunnable(const ExperimentConfig& c, const PreparedData& data) {
  const FederationConfig f = WithSeed(c);
  ValidateFederation(f, data.shards);
  InitialModel(f, data.validation.feature_shape, data.validation.classes);
}

std::ofstream OpenOutput(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  std::ofstream out(path, std::ios::binary | mode);
  Require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string());
  return out;
}

}  // namespace

ConfigEntries ParseConfigText(std::string_view text) {
  ConfigEntries entries;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const std::string line = Trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    Require(eq != std::string::npos, ErrorCode::kConfig,
            "line " + std::to_string(line_no) + ": expected key=value");
    std::string key = Trim(std::string_view(line).substr(0, eq));
    std::string value = Trim(std::string_view(line).substr(eq + 1));
    Require(!key.empty(), ErrorCode::kConfig, "line " + std::to_string(line_no) + ": empty key");
    Require(seen.insert(key).second, ErrorCode::kConfig,
            "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

ConfigEntries ReadConfigFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorCode::kConfig, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseConfigText(ss.str());
}

ConfigEntries PresetEntries(std::string_view name) {
  std::string base(name);
  std::string profile = "desk";
  if (const auto colon = base.find(':'); colon != std::string::npos) {
    profile = base.substr(colon + 1);
    base.resize(colon);
  }
  const auto& table = Presets();
  const auto it = table.find(base);
  Require(it != table.end(), ErrorCode::kConfig, "unknown preset '" + base + "'");
  Require(profile == "desk" || profile == "full", ErrorCode::kConfig,
          "unknown preset profile '" + profile + "' (desk|full)");
  return profile == "desk" ? it->second.desk : it->second.full;
}

std::vector<std::string> PresetNames() {
  std::vector<std::string> names;
  for (const auto& [name, _] : Presets()) names.push_back(name);
  return names;
}

const std::vector<AccountPreset>& AccountPresets() {
  static const std::vector<AccountPreset> presets = [] {
    std::vector<AccountPreset> out;
    const std::vector<std::pair<std::string, std::uint64_t>> rounds = {
        {"mnist", 100}, {"cifar", 100}, {"lfw", 60}, {"adult", 10}, {"cancer", 3}};
    for (const auto& [name, t] : rounds) {
      out.push_back({name + "-cdp-L100", 0.01, 6.0, 1e-5, t * 100});
      out.push_back({name + "-cdp-L1", 0.01, 6.0, 1e-5, t});
      out.push_back({name + "-sdp", 0.1, 6.0, 1e-5, t});
    }
    return out;
  }();
  return presets;
}

const AccountPreset& FindAccountPreset(std::string_view name) {
  for (const auto& p : AccountPresets())
    if (p.name == name) return p;
  throw Error(ErrorCode::kConfig, "unknown account preset '" + std::string(name) + "'");
}

ExperimentConfig BuildConfig(const ConfigEntries& entries) {
  ExperimentConfig config;
  const auto& setters = Setters();
  for (const auto& [key, value] : entries) {
    const auto it = setters.find(key);
    Require(it != setters.end(), ErrorCode::kConfig, "unknown config key '" + key + "'");
    it->second(config, key, value);
  }
  return config;
}

const std::vector<std::string>& ConfigKeys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [k, _] : Setters()) out.push_back(k);
    return out;
  }();
  return keys;
}

PreparedData PrepareData(const ExperimentConfig& config) {
  RequireConfig(config.master_seed.has_value(), "seed is required (config key 'seed' or --seed)");
  const auto& d = config.dataset;
  const std::uint64_t seed = d.seed.value_or(*config.master_seed);
  Dataset full;
  if (d.source == "blobs") {
    full = SyntheticBlobs(d.classes, d.per_class, d.dim, d.separation, seed);
  } else if (d.source == "images") {
    full = SyntheticImages(d.classes, d.per_class, d.side, d.jitter, seed);
  } else if (d.source == "idx") {
    RequireConfig(!d.images.empty() && !d.labels.empty(),
              "dataset.source=idx needs dataset.images and dataset.labels");
    full = LoadIdx(d.images, d.labels);
  } else {
    RequireConfig(!d.csv.empty() && !d.label_column.empty(),
              "dataset.source=csv needs dataset.path and dataset.label_column");
    full = LoadCsv(d.csv, d.label_column, CsvSchema{d.categorical});
  }
  auto [train, validation] = SplitEvery(full, d.validation_stride);
  PreparedData out;
  out.shards = MakeShards(train, config.federation.clients, d.per_client, d.classes_per_client,
                          SplitMix64(seed ^ kShardSalt), d.reuse);
  out.validation = std::move(validation);
  return out;
}

std::vector<LeakSpec> ResolveTargets(const ExperimentConfig& config) {
  RequireConfig(config.master_seed.has_value(), "seed is required (config key 'seed' or --seed)");
  const FederationConfig f = WithSeed(config);
  RequireConfig(config.attack_round < f.rounds, "attack.round " + std::to_string(config.attack_round) +
                                                " outside [0, " + std::to_string(f.rounds) + ")");
  const auto participants = ParticipantsAt(f, config.attack_round);
  const std::size_t client = config.attack_client.value_or(participants.front());
  RequireConfig(std::binary_search(participants.begin(), participants.end(), client),
            "client " + std::to_string(client) + " does not participate in round " +
                std::to_string(config.attack_round));
  std::vector<LeakSpec> targets;
  for (LeakType type : config.attack_types) {
    if (type != LeakType::kType2) {
      LeakSpec spec{type, config.attack_round, client, 0};
      const bool dup = std::any_of(targets.begin(), targets.end(),
                                   [&](const LeakSpec& s) { return s.type == type; });
      if (!dup) targets.push_back(spec);
      continue;
    }
    for (std::size_t e : config.attack_examples) {
      RequireConfig(e < f.batch_size, "attack example " + std::to_string(e) +
                                      " outside the local batch of size " +
                                      std::to_string(f.batch_size));
      const bool dup = std::any_of(targets.begin(), targets.end(), [&](const LeakSpec& s) {
        return s.type == type && s.example == e;
      });
      if (!dup) targets.push_back({type, config.attack_round, client, e});
    }
  }
  return targets;
}

std::vector<AttackOutcome> RunAttacks(const ExperimentConfig& config, const PreparedData& data,
                                      std::size_t threads) {
  const auto targets = ResolveTargets(config);
  const FederationConfig f = WithSeed(config);
  ModelParams model;
  if (config.attack_round == 0) {
    model = InitialModel(f, data.validation.feature_shape, data.validation.classes);
  } else {
    RunOptions options;
    options.threads = threads;
    options.stop_after = config.attack_round;
    model = RunTraining(f, data.shards, data.validation, options).model;
  }
  AttackConfig attack = config.attack;
  attack.match_support = config.attack_match_support.value_or(f.compression > 0.0);
  const NoiseStream root(f.master_seed);
  std::vector<AttackOutcome> outcomes(targets.size());
  ParallelFor(targets.size(), threads, [&](std::size_t k) {
    const LeakSpec& spec = targets[k];
    const LeakTarget leak = CaptureLeak(f, model, data.shards[spec.client], spec);
    const NoiseStream stream = root.derive({kAttackStream, spec.round, spec.client,
                                            static_cast<std::uint64_t>(spec.type), spec.example});
    outcomes[k] = {spec, DefenseName(f.dp),
                   RunAttack(model, leak.gradient, leak.truth, attack, stream, leak.scale)};
  });
  return outcomes;
}

std::string FormatNumber(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void WriteMetricsCsv(std::ostream& out, const TrainingResult& result) {
  const std::size_t layers = result.model.trainable_count();
  out << "round,epsilon,accuracy";
  for (std::size_t m = 1; m <= layers; ++m) out << ",mean_grad_norm_layer_" << m;
  out << ",clip_bound,wall_ms\n";
  for (const auto& r : result.rounds) {
    out << r.round << ',' << FormatNumber(r.epsilon) << ',' << FormatNumber(r.accuracy);
    for (double g : r.mean_grad_norms) out << ',' << FormatNumber(g);
    out << ',' << FormatNumber(r.clip_bound) << ',' << FormatNumber(r.wall_ms) << '\n';
  }
}

void WriteBoundCsv(std::ostream& out, const MarginBoundReport& report) {
  const auto misclassified =
      std::count_if(report.margins.begin(), report.margins.end(), [](double m) { return m <= 0.0; });
  const double min_margin = report.margins.empty()
                                ? 0.0
                                : *std::min_element(report.margins.begin(), report.margins.end());
  out << "probes,misclassified,min_margin,lipschitz,bound\n";
  out << report.margins.size() << ',' << misclassified << ',' << FormatNumber(min_margin) << ','
      << FormatNumber(report.lipschitz) << ',' << FormatNumber(report.bound) << '\n';
}

std::string AttackCsvHeader() {
  return "type,defense,round,client,example,success,iterations,distance,final_loss";
}

std::string AttackCsvRow(const AttackOutcome& o) {
  std::ostringstream s;
  s << LeakTypeName(o.spec.type) << ',' << o.defense << ',' << o.spec.round << ','
    << o.spec.client << ',' << o.spec.example << ',' << (o.report.success ? 'Y' : 'N') << ','
    << o.report.iterations_used << ',' << FormatNumber(o.report.reconstruction_distance) << ','
    << FormatNumber(o.report.final_gradient_loss);
  return s.str();
}

std::string AttackReportFileName(const LeakSpec& spec) {
  return "attack_" + std::string(LeakTypeName(spec.type)) + "_r" + std::to_string(spec.round) +
         "_c" + std::to_string(spec.client) + "_e" + std::to_string(spec.example) + ".txt";
}

Experiment Experiment::Prepare(ExperimentConfig config, Command command) {
  RequireConfig(config.master_seed.has_value(), "seed is required (config key 'seed' or --seed)");
  config.federation.master_seed = *config.master_seed;
  config.attack.validate();
  Experiment e;
  e.config_ = config;
  if (command == Command::kSweep) {
    const auto& sw = config.sweep;
    RequireConfig(!sw.axis.empty(), "sweep.axis is required (clip|sigma|compression)");
    RequireConfig(sw.values.size() >= 2, "a sweep needs at least two values");
    auto sorted = sw.values;
    std::sort(sorted.begin(), sorted.end());
    RequireConfig(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
              "duplicate sweep values");
    auto seeds = sw.seeds;
    if (seeds.empty()) seeds.push_back(*config.master_seed);
    for (double v : sw.values) {
      for (std::uint64_t seed : seeds) {
        SweepPoint point;
        point.value = v;
        point.seed = seed;
        point.config = ApplySweepValue(config, sw.axis, v);
        point.config.master_seed = seed;
        point.config.federation.master_seed = seed;
        point.data = PrepareData(point.config);
        ValidateRunnable(point.config, point.data);
        if (sw.attack) ResolveTargets(point.config);
        e.points_.push_back(std::move(point));
      }
    }
  } else {
    e.data_ = PrepareData(config);
    ValidateRunnable(config, e.data_);
    if (command == Command::kAttack) ResolveTargets(config);
  }
  CheckWritableDir(config.output);
  return e;
}

void Experiment::train(std::size_t threads) const {
  RunOptions options;
  options.threads = threads;
  const TrainingResult result =
      RunTraining(config_.federation, data_.shards, data_.validation, options);
  auto metrics = OpenOutput(config_.output / "metrics.csv");
  WriteMetricsCsv(metrics, result);
  SaveModel(config_.output / "model.bin", result.model);
  auto bound = OpenOutput(config_.output / "bound.csv");
  WriteBoundCsv(bound, NoiseBound(result.model, data_.validation.examples));
}

void Experiment::attack(std::size_t threads) const {
  const auto outcomes = RunAttacks(config_, data_, threads);
  const auto csv_path = config_.output / "attacks.csv";
  const bool fresh = !std::filesystem::exists(csv_path);
  auto csv = OpenOutput(csv_path, std::ios::app);
  if (fresh) csv << AttackCsvHeader() << '\n';
  for (const auto& o : outcomes) {
    const std::vector<std::pair<std::string, std::string>> context = {
        {"type", std::string(LeakTypeName(o.spec.type))},
        {"defense", o.defense},
        {"round", std::to_string(o.spec.round)},
        {"client", std::to_string(o.spec.client)},
        {"example", std::to_string(o.spec.example)},
    };
    auto report = OpenOutput(config_.output / AttackReportFileName(o.spec));
    WriteAttackReport(report, o.report, context);
    csv << AttackCsvRow(o) << '\n';
  }
}

void Experiment::sweep(std::size_t threads) const {
  const bool with_attack = config_.sweep.attack;
  auto csv = OpenOutput(config_.output / "sweep.csv");
  csv << "axis,value,seed,final_accuracy,final_epsilon";
  if (with_attack) csv << ",attack_targets,attack_success_rate,attack_mean_distance";
  csv << '\n';
  for (const auto& p : points_) {
    RunOptions options;
    options.threads = threads;
    const TrainingResult result =
        RunTraining(p.config.federation, p.data.shards, p.data.validation, options);
    const auto& last = result.rounds.back();
    csv << config_.sweep.axis << ',' << FormatNumber(p.value) << ',' << p.seed << ','
        << FormatNumber(last.accuracy) << ',' << FormatNumber(last.epsilon);
    if (with_attack) {
      const auto outcomes = RunAttacks(p.config, p.data, threads);
      double successes = 0.0, distance = 0.0;
      for (const auto& o : outcomes) {
        successes += o.report.success ? 1.0 : 0.0;
        distance += o.report.reconstruction_distance;
      }
      const double n = static_cast<double>(outcomes.size());
      csv << ',' << outcomes.size() << ',' << FormatNumber(successes / n) << ','
          << FormatNumber(distance / n);
    }
    csv << '\n';
  }
}

double AccountEpsilon(const AccountSpec& spec) {
  if (spec.preset) {
    const auto& p = FindAccountPreset(*spec.preset);
    return EpsilonFor(p.q, p.sigma, p.delta, p.steps);
  }
  Require(spec.q >= 0.0 && spec.q <= 1.0, ErrorCode::kConfig, "q must lie in [0, 1]");
  Require(spec.sigma > 0.0, ErrorCode::kConfig, "sigma must be > 0");
  Require(spec.delta > 0.0 && spec.delta < 1.0, ErrorCode::kConfig, "delta must lie in (0, 1)");
  return EpsilonFor(spec.q, spec.sigma, spec.delta, spec.steps);
}

}  // namespace dpfl
