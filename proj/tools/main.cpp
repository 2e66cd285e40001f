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
// dpfl-cli: train | attack | account | sweep.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dpfl/error.hpp"
#include "dpfl/experiment.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonFlags {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 1;
};

void AddCommonFlags(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("--config", f.config, "key=value config file");
  cmd.add_option("--preset", f.preset, "preset applied before the config file (NAME[:desk|:full])");
  cmd.add_option("--seed", f.seed, "master seed (overrides the config)");
  cmd.add_option("--out", f.out, "output directory (overrides the config)");
  cmd.add_option("--threads", f.threads, "worker threads for clients within a round")
      ->check(CLI::PositiveNumber);
}

dpfl::ExperimentConfig LoadConfig(const CommonFlags& f) {
  dpfl::ConfigEntries entries;
  if (!f.preset.empty()) entries = dpfl::PresetEntries(f.preset);
  if (!f.config.empty()) {
    const auto file = dpfl::ReadConfigFile(f.config);
    entries.insert(entries.end(), file.begin(), file.end());
  }
  if (f.seed) entries.emplace_back("seed", std::to_string(*f.seed));
  if (!f.out.empty()) entries.emplace_back("output", f.out);
  return dpfl::BuildConfig(entries);
}

int RunExperiment(const CommonFlags& flags, dpfl::Experiment::Command command) {
  std::optional<dpfl::Experiment> experiment;
  try {
    experiment.emplace(dpfl::Experiment::Prepare(LoadConfig(flags), command));
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    switch (command) {
      case dpfl::Experiment::Command::kTrain: experiment->train(flags.threads); break;
      case dpfl::Experiment::Command::kAttack: experiment->attack(flags.threads); break;
      case dpfl::Experiment::Command::kSweep: experiment->sweep(flags.threads); break;
    }
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private federated learning simulator"};
  app.require_subcommand(1);

  CommonFlags train_flags, attack_flags, sweep_flags;
  auto* train = app.add_subcommand("train", "federated training; writes metrics.csv and model.bin");
  AddCommonFlags(*train, train_flags);
  auto* attack = app.add_subcommand("attack", "gradient leakage attack; writes reports and attacks.csv");
  AddCommonFlags(*attack, attack_flags);
  auto* sweep = app.add_subcommand("sweep", "training runs over sweep.axis/sweep.values; writes sweep.csv");
  AddCommonFlags(*sweep, sweep_flags);

  auto* account = app.add_subcommand("account", "print epsilon of the subsampled Gaussian ledger");
  std::string account_config, account_preset;
  std::optional<double> q, sigma, delta;
  std::optional<std::uint64_t> steps;
  account->add_option("--config", account_config, "config file with account.* keys");
  account->add_option("--preset", account_preset, "named accounting preset, e.g. mnist-cdp-L100");
  account->add_option("--q", q, "sampling rate");
  account->add_option("--sigma", sigma, "noise scale");
  account->add_option("--delta", delta, "target delta");
  account->add_option("--steps", steps, "number of composed steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (train->parsed()) return RunExperiment(train_flags, dpfl::Experiment::Command::kTrain);
  if (attack->parsed()) return RunExperiment(attack_flags, dpfl::Experiment::Command::kAttack);
  if (sweep->parsed()) return RunExperiment(sweep_flags, dpfl::Experiment::Command::kSweep);

  dpfl::AccountSpec spec;
  try {
    if (!account_config.empty()) spec = dpfl::BuildConfig(dpfl::ReadConfigFile(account_config)).account;
    if (!account_preset.empty()) spec.preset = account_preset;
    if (q) spec.q = *q;
    if (sigma) spec.sigma = *sigma;
    if (delta) spec.delta = *delta;
    if (steps) spec.steps = *steps;
    std::cout << dpfl::FormatNumber(dpfl::AccountEpsilon(spec)) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
