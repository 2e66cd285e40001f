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
#include "dpfl/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpfl/error.hpp"

namespace dpfl {
namespace {

double LogAddExp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log A_alpha for the sampled Gaussian, integer alpha:
//   A = sum_i C(alpha, i) q^i (1-q)^(alpha-i) exp((i^2 - i) / (2 sigma^2)).
double LogMomentInteger(double q, double sigma, int alpha) {
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double inv_2s2 = 1.0 / (2.0 * sigma * sigma);
  double acc = -std::numeric_limits<double>::infinity();
  const double lg_alpha = std::lgamma(alpha + 1.0);
  for (int i = 0; i <= alpha; ++i) {
    const double log_binom = lg_alpha - std::lgamma(i + 1.0) - std::lgamma(alpha - i + 1.0);
    const double term = log_binom + i * log_q + (alpha - i) * log_1mq +
                        (static_cast<double>(i) * i - i) * inv_2s2;
    acc = LogAddExp(acc, term);
  }
  return acc;
}

void CheckRdpArgs(double q, double sigma, std::span<const int> orders) {
  Require(q >= 0.0 && q <= 1.0, ErrorCode::kInvalidArgument, "sampling rate q must lie in [0, 1]");
  Require(sigma > 0.0 && std::isfinite(sigma), ErrorCode::kInvalidArgument,
          "noise multiplier sigma must be > 0");
  Require(!orders.empty(), ErrorCode::kInvalidArgument, "no RDP orders given");
  for (int a : orders) Require(a >= 2, ErrorCode::kInvalidArgument, "RDP orders must be >= 2");
}

}  // namespace

const std::vector<int>& DefaultOrders() {
  static const std::vector<int> orders = [] {
    std::vector<int> o;
    for (int a = 2; a <= 64; ++a) o.push_back(a);
    o.insert(o.end(), {128, 256, 512});
    return o;
  }();
  return orders;
}

RdpCurve RdpSubsampledGaussian(double q, double sigma, std::span<const int> orders) {
  CheckRdpArgs(q, sigma, orders);
  RdpCurve curve;
  curve.orders.assign(orders.begin(), orders.end());
  curve.values.reserve(orders.size());
  for (int a : orders) {
    double v = 0.0;
    if (q == 0.0) {
      v = 0.0;
    } else if (q == 1.0) {
      v = a / (2.0 * sigma * sigma);
    } else {
      v = LogMomentInteger(q, sigma, a) / (a - 1);
    }
    // Rounding in the log-sum can leave a tiny negative residue.
    curve.values.push_back(std::max(v, 0.0));
  }
  return curve;
}

RdpCurve RdpSubsampledGaussian(double q, double sigma) {
  return RdpSubsampledGaussian(q, sigma, DefaultOrders());
}

EpsilonResult ComputeEpsilon(double q, double sigma, double delta, std::uint64_t steps,
                             std::span<const int> orders) {
  Require(delta > 0.0 && delta < 1.0, ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
  const RdpCurve curve = RdpSubsampledGaussian(q, sigma, orders);
  if (steps == 0) return {};
  EpsilonResult best{std::numeric_limits<double>::infinity(), 0};
  const double log_inv_delta = std::log(1.0 / delta);
  for (std::size_t k = 0; k < curve.orders.size(); ++k) {
    const double eps = static_cast<double>(steps) * curve.values[k] +
                       log_inv_delta / (curve.orders[k] - 1);
    if (eps < best.epsilon) best = {eps, curve.orders[k]};
  }
  return best;
}

double EpsilonFor(double q, double sigma, double delta, std::uint64_t steps) {
  return ComputeEpsilon(q, sigma, delta, steps, DefaultOrders()).epsilon;
}

bool InMomentsRegime(double q, double sigma) { return q < 1.0 / (16.0 * sigma); }

double AmplifiedEpsilon(double epsilon, double q) {
  Require(epsilon >= 0.0, ErrorCode::kInvalidArgument, "epsilon must be >= 0");
  Require(q >= 0.0 && q <= 1.0, ErrorCode::kInvalidArgument, "q must lie in [0, 1]");
  return std::log1p(q * std::expm1(epsilon));
}

double AmplifiedDelta(double delta, double q) {
  Require(q >= 0.0 && q <= 1.0, ErrorCode::kInvalidArgument, "q must lie in [0, 1]");
  return q * delta;
}

PrivacyBudget NaiveComposition(std::span<const PrivacyBudget> parts) {
  PrivacyBudget total;
  for (const auto& p : parts) {
    Require(p.epsilon >= 0.0 && p.delta >= 0.0, ErrorCode::kInvalidArgument,
            "composition entries must be non-negative");
    total.epsilon += p.epsilon;
    total.delta += p.delta;
  }
  return total;
}

PrivacyLedger::PrivacyLedger(double delta, LedgerScope scope) : delta_(delta), scope_(scope) {
  Require(delta > 0.0 && delta < 1.0, ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
}

PrivacyLedger PrivacyLedger::with_steps(double q, double sigma, std::uint64_t steps) const {
  Require(q > 0.0 && q <= 1.0, ErrorCode::kInvalidArgument, "ledger q must lie in (0, 1]");
  Require(sigma > 0.0, ErrorCode::kInvalidArgument, "ledger sigma must be > 0");
  PrivacyLedger out = *this;
  if (!out.entries_.empty() && out.entries_.back().q == q && out.entries_.back().sigma == sigma) {
    out.entries_.back().steps += steps;
  } else {
    out.entries_.push_back({q, sigma, steps});
  }
  return out;
}

PrivacyLedger PrivacyLedger::rescoped(LedgerScope scope) const {
  PrivacyLedger out = *this;
  out.scope_ = scope;
  return out;
}

std::uint64_t PrivacyLedger::total_steps() const {
  std::uint64_t n = 0;
  for (const auto& e : entries_) n += e.steps;
  return n;
}

double LedgerQuery(const PrivacyLedger& ledger) {
  if (ledger.empty() || ledger.total_steps() == 0) return 0.0;
  const double sigma = ledger.entries().front().sigma;
  for (const auto& e : ledger.entries()) {
    Require(e.sigma == sigma, ErrorCode::kInvalidArgument,
            "ledger mixes noise multipliers; heterogeneous sigma is not supported");
  }
  const auto& orders = DefaultOrders();
  std::vector<double> total(orders.size(), 0.0);
  for (const auto& e : ledger.entries()) {
    const RdpCurve c = RdpSubsampledGaussian(e.q, e.sigma, orders);
    for (std::size_t k = 0; k < orders.size(); ++k) total[k] += static_cast<double>(e.steps) * c.values[k];
  }
  const double log_inv_delta = std::log(1.0 / ledger.delta());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < orders.size(); ++k)
    best = std::min(best, total[k] + log_inv_delta / (orders[k] - 1));
  return best;
}

}  // namespace dpfl
