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
#ifndef DPFL_EXPERIMENT_HPP_
#define DPFL_EXPERIMENT_HPP_

// Experiment orchestration behind the command-line tool: config parsing,
// presets, data preparation and the train / attack / account / sweep drivers.
// The config grammar and every output format are documented in
// docs/formats.md.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dpfl/attack.hpp"
#include "dpfl/data.hpp"
#include "dpfl/federation.hpp"
#include "dpfl/tradeoff.hpp"

namespace dpfl {

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

// `key = value` lines; blank lines and lines starting with '#' are skipped.
// Throws kConfig (with the line number) on a line without '=', an empty key or
// a key repeated within the text.
ConfigEntries ParseConfigText(std::string_view text);
ConfigEntries ReadConfigFile(const std::filesystem::path& path);

// Training presets: "blobs", "mnist-like", "cifar-like", "lfw-like", "adult",
// "cancer", each optionally suffixed ":desk" (default) or ":full".
ConfigEntries PresetEntries(std::string_view name);
std::vector<std::string> PresetNames();

struct AccountPreset {
  std::string name;
  double q = 0.0;
  double sigma = 0.0;
  double delta = 0.0;
  std::uint64_t steps = 0;
};

const std::vector<AccountPreset>& AccountPresets();
const AccountPreset& FindAccountPreset(std::string_view name);

struct DatasetSpec {
  std::string source = "blobs";  // blobs | images | idx | csv
  std::size_t classes = 2;
  std::size_t per_class = 300;
  std::size_t dim = 8;
  double separation = 3.0;
  std::size_t side = 8;
  double jitter = 0.1;
  std::filesystem::path images;
  std::filesystem::path labels;
  std::filesystem::path csv;
  std::string label_column;
  std::set<std::string> categorical;
  std::size_t per_client = 20;
  std::size_t classes_per_client = 2;
  ShardReuse reuse = ShardReuse::kDisjoint;
  std::size_t validation_stride = 5;
  // Generation and partition seed; the master seed when unset.
  std::optional<std::uint64_t> seed;
};

struct SweepSpec {
  std::string axis;  // clip | sigma | compression
  std::vector<double> values;
  // Master seeds to run at every value; the config's seed when empty.
  std::vector<std::uint64_t> seeds;
  bool attack = false;
};

struct AccountSpec {
  std::optional<std::string> preset;
  double q = 0.01;
  double sigma = 6.0;
  double delta = 1e-5;
  std::uint64_t steps = 0;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  FederationConfig federation;
  AttackConfig attack;
  std::vector<LeakType> attack_types{LeakType::kType2};
  std::vector<std::size_t> attack_examples{0};
  std::size_t attack_round = 0;
  // First participant of the leak round when unset.
  std::optional<std::size_t> attack_client;
  // Restrict pruned targets to their support; on by default iff compression > 0.
  std::optional<bool> attack_match_support;
  SweepSpec sweep;
  AccountSpec account;
  std::filesystem::path output = ".";
  std::optional<std::uint64_t> master_seed;
};

// Applies entries in order over the defaults (later keys win). Unknown keys
// and malformed values throw kConfig.
ExperimentConfig BuildConfig(const ConfigEntries& entries);
// Every key BuildConfig accepts.
const std::vector<std::string>& ConfigKeys();

struct PreparedData {
  std::vector<ClientShard> shards;
  Dataset validation;
};

PreparedData PrepareData(const ExperimentConfig& config);

struct AttackOutcome {
  LeakSpec spec;  // client resolved
  std::string defense;
  AttackReport report;
};

// Attacks every configured target of round config.attack_round against the
// round-start broadcast model. Throws kConfig if the targeted client does not
// participate in that round or a target lies outside the local batch.
std::vector<AttackOutcome> RunAttacks(const ExperimentConfig& config, const PreparedData& data,
                                      std::size_t threads);
// Target validation alone (no training).
std::vector<LeakSpec> ResolveTargets(const ExperimentConfig& config);

// Shortest round-trip decimal; "inf" / "nan" for non-finite values.
std::string FormatNumber(double v);

void WriteMetricsCsv(std::ostream& out, const TrainingResult& result);
// Margin-bound diagnostics of a trained model over its validation probes.
void WriteBoundCsv(std::ostream& out, const MarginBoundReport& report);
std::string AttackCsvHeader();
std::string AttackCsvRow(const AttackOutcome& outcome);
std::string AttackReportFileName(const LeakSpec& spec);

// One validated experiment. Prepare() throws only for configuration problems
// (exit code 1); the run methods throw for runtime failures (exit code 2).
class Experiment {
 public:
  enum class Command { kTrain, kAttack, kSweep };

  static Experiment Prepare(ExperimentConfig config, Command command);

  // metrics.csv, model.bin and bound.csv.
  void train(std::size_t threads) const;
  // One report file per target + rows appended to attacks.csv.
  void attack(std::size_t threads) const;
  // sweep.csv.
  void sweep(std::size_t threads) const;

  const ExperimentConfig& config() const { return config_; }

 private:
  struct SweepPoint {
    double value = 0.0;
    std::uint64_t seed = 0;
    ExperimentConfig config;
    PreparedData data;
  };

  ExperimentConfig config_;
  PreparedData data_;
  std::vector<SweepPoint> points_;
};

// The epsilon of an account spec (preset values take precedence).
double AccountEpsilon(const AccountSpec& spec);

}  // namespace dpfl

#endif  // DPFL_EXPERIMENT_HPP_
