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
#ifndef DPFL_ACCOUNTANT_HPP_
#define DPFL_ACCOUNTANT_HPP_

// Privacy accounting for the subsampled Gaussian mechanism.
//
// The moments accountant is realised through Renyi-DP bookkeeping: each step
// of the sampled Gaussian mechanism with sampling rate q and noise multiplier
// sigma costs rdp(alpha) at every order alpha; costs add across steps, and
//   epsilon = min_alpha  steps * rdp(alpha) + ln(1/delta) / (alpha - 1).

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace dpfl {

// Integer orders 2..64 followed by 128, 256, 512.
const std::vector<int>& DefaultOrders();

struct RdpCurve {
  std::vector<int> orders;
  std::vector<double> values;  // per-step cost at each order
};

// Stable log-domain binomial expansion of E[(1 - q + q * exp(...))^alpha]
// for integer alpha. q == 1 gives alpha / (2 sigma^2); q == 0 gives zeros.
RdpCurve RdpSubsampledGaussian(double q, double sigma, std::span<const int> orders);
RdpCurve RdpSubsampledGaussian(double q, double sigma);

struct EpsilonResult {
  double epsilon = 0.0;
  int order = 0;  // minimising order; 0 when steps == 0
};

EpsilonResult ComputeEpsilon(double q, double sigma, double delta, std::uint64_t steps,
                             std::span<const int> orders);

double EpsilonFor(double q, double sigma, double delta, std::uint64_t steps);

// The moments-accountant analysis assumes q < 1 / (16 sigma). Callers warn and
// proceed when this is false.
bool InMomentsRegime(double q, double sigma);

// Amplification by subsampling with rate q.
double AmplifiedEpsilon(double epsilon, double q);
double AmplifiedDelta(double delta, double q);

struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 0.0;
};

// (sum epsilon, sum delta).
PrivacyBudget NaiveComposition(std::span<const PrivacyBudget> parts);

enum class LedgerScope { kInstance, kClient };

struct LedgerEntry {
  double q = 0.0;
  double sigma = 0.0;
  std::uint64_t steps = 0;
};

// Immutable record of mechanism invocations; extended by copy.
class PrivacyLedger {
 public:
  PrivacyLedger(double delta, LedgerScope scope);

  [[nodiscard]] PrivacyLedger with_steps(double q, double sigma, std::uint64_t steps) const;
  [[nodiscard]] PrivacyLedger rescoped(LedgerScope scope) const;

  double delta() const { return delta_; }
  LedgerScope scope() const { return scope_; }
  const std::vector<LedgerEntry>& entries() const { return entries_; }
  std::uint64_t total_steps() const;
  bool empty() const { return entries_.empty(); }

 private:
  double delta_;
  LedgerScope scope_;
  std::vector<LedgerEntry> entries_;
};

// epsilon spent so far. Entries must share one sigma (otherwise
// kInvalidArgument); differing q are composed by adding their RDP curves.
// An empty ledger spends 0.
double LedgerQuery(const PrivacyLedger& ledger);

}  // namespace dpfl

#endif  // DPFL_ACCOUNTANT_HPP_
