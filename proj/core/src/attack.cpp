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
#include "dpfl/attack.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dpfl/dp_mechanism.hpp"
#include "dpfl/error.hpp"
#include "dpfl/tradeoff.hpp"

namespace dpfl {
namespace {

constexpr std::size_t kPatchSide = 4;
constexpr std::size_t kMaxExhaustiveMatch = 6;

// Sum of squared differences over all layers, optionally restricted to the
// target's non-zero support.
double MatchDistance(const std::vector<std::vector<double>>& dummy, const GradientUpdate& target,
                     bool support_only) {
  double acc = 0.0;
  for (std::size_t m = 0; m < dummy.size(); ++m) {
    const auto t = target.layer(m);
    const auto& d = dummy[m];
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (support_only && t[i] == 0.0) continue;
      const double diff = d[i] - t[i];
      acc += diff * diff;
    }
  }
  return acc;
}

// Gradient-matching objective over a batch of dummies with cached per-dummy
// gradients so that a finite-difference probe re-runs a single backward pass.
class MatchObjective {
 public:
  MatchObjective(const ModelParams& model, const GradientUpdate& target,
                 std::vector<std::size_t> labels, bool support_only)
      : model_(model), target_(target), labels_(std::move(labels)), support_only_(support_only) {}

  double evaluate(const std::vector<std::vector<double>>& xs) {
    grads_.clear();
    for (std::size_t k = 0; k < xs.size(); ++k) grads_.push_back(dummy_gradient(xs[k], k));
    sum_ = grads_.front();
    for (std::size_t k = 1; k < grads_.size(); ++k) accumulate(sum_, grads_[k], 1.0);
    return distance_of_sum(sum_);
  }

  // Loss with dummy k replaced by `xk`, reusing the cache from evaluate().
  double probe(std::size_t k, std::span<const double> xk) {
    auto g = dummy_gradient(xk, k);
    scratch_ = sum_;
    accumulate(scratch_, grads_[k], -1.0);
    accumulate(scratch_, g, 1.0);
    return distance_of_sum(scratch_);
  }

 private:
  std::vector<std::vector<double>> dummy_gradient(std::span<const double> x, std::size_t k) const {
    Example ex;
    ex.features.assign(x.begin(), x.end());
    ex.label = labels_[k];
    return BackwardExample(model_, ex).grad.layers();
  }

  static void accumulate(std::vector<std::vector<double>>& dst,
                         const std::vector<std::vector<double>>& src, double factor) {
    for (std::size_t m = 0; m < dst.size(); ++m)
      for (std::size_t i = 0; i < dst[m].size(); ++i) dst[m][i] += factor * src[m][i];
  }

  double distance_of_sum(std::vector<std::vector<double>>& sum) const {
    const double n = static_cast<double>(labels_.size());
    if (labels_.size() == 1) return MatchDistance(sum, target_, support_only_);
    auto mean = sum;
    for (auto& l : mean)
      for (double& v : l) v /= n;
    return MatchDistance(mean, target_, support_only_);
  }

  const ModelParams& model_;
  const GradientUpdate& target_;
  std::vector<std::size_t> labels_;
  bool support_only_;
  std::vector<std::vector<std::vector<double>>> grads_;
  std::vector<std::vector<double>> sum_;
  std::vector<std::vector<double>> scratch_;
};

void Project(std::vector<double>& x) {
  for (double& v : x) v = std::clamp(v, 0.0, 1.0);
}

double BatchDistance(std::span<const Example> truth, const std::vector<std::vector<double>>& recon) {
  const std::size_t n = truth.size();
  std::vector<std::vector<double>> cost(n, std::vector<double>(n));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) cost[a][b] = ReconstructionDistance(truth[a].features, recon[b]);
  double best = std::numeric_limits<double>::infinity();
  if (n <= kMaxExhaustiveMatch) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      double total = 0.0;
      for (std::size_t a = 0; a < n; ++a) total += cost[a][perm[a]];
      best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<char> used(n, 0);
    best = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      std::size_t pick = n;
      for (std::size_t b = 0; b < n; ++b)
        if (!used[b] && (pick == n || cost[a][b] < cost[a][pick])) pick = b;
      used[pick] = 1;
      best += cost[a][pick];
    }
  }
  return best / static_cast<double>(n);
}

}  // namespace

void AttackConfig::validate() const {
  Require(max_iters >= 1, ErrorCode::kInvalidArgument, "attack needs max_iters >= 1");
  Require(threshold > 0.0, ErrorCode::kInvalidArgument, "attack threshold must be > 0");
  Require(step_size > 0.0 && std::isfinite(step_size), ErrorCode::kInvalidArgument,
          "attack step size must be > 0");
  Require(fd_step > 0.0, ErrorCode::kInvalidArgument, "finite-difference step must be > 0");
}

std::vector<double> MakeSeed(SeedMode mode, const Shape3& shape, Generator& gen) {
  Require(shape.size() > 0, ErrorCode::kInvalidArgument, "seed shape must be non-empty");
  std::vector<double> x(shape.size(), 0.0);
  switch (mode) {
    case SeedMode::kZeros:
      break;
    case SeedMode::kUniformRandom:
      for (double& v : x) v = gen.uniform();
      break;
    case SeedMode::kPatternedRandom: {
      const bool image = shape.height > 1 || shape.width > 1;
      if (!image) {
        double patch[kPatchSide];
        for (double& v : patch) v = gen.uniform();
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = patch[i % kPatchSide];
        break;
      }
      for (std::size_t c = 0; c < shape.channels; ++c) {
        double patch[kPatchSide][kPatchSide];
        for (auto& row : patch)
          for (double& v : row) v = gen.uniform();
        for (std::size_t y = 0; y < shape.height; ++y)
          for (std::size_t w = 0; w < shape.width; ++w)
            x[(c * shape.height + y) * shape.width + w] = patch[y % kPatchSide][w % kPatchSide];
      }
      break;
    }
  }
  Project(x);
  return x;
}

double GradientMatchLoss(const ModelParams& model, std::span<const double> x_dummy,
                         std::size_t label, const GradientUpdate& target_grad) {
  Require(target_grad.congruent_with(model), ErrorCode::kShapeMismatch,
          "target gradient is not congruent with the model");
  Example ex;
  ex.features.assign(x_dummy.begin(), x_dummy.end());
  ex.label = label;
  return MatchDistance(BackwardExample(model, ex).grad.layers(), target_grad, false);
}

double ReconstructionDistance(std::span<const double> x, std::span<const double> x_rec) {
  Require(x.size() == x_rec.size() && !x.empty(), ErrorCode::kShapeMismatch,
          "reconstruction distance needs equal, non-empty shapes");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - x_rec[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(x.size()));
}

std::size_t InferLabel(const ModelParams& model, const GradientUpdate& grad) {
  Require(grad.congruent_with(model), ErrorCode::kShapeMismatch,
          "gradient is not congruent with the model");
  const auto last = grad.layer(grad.layer_count() - 1);
  const auto bias = last.subspan(last.size() - model.classes);
  return static_cast<std::size_t>(std::min_element(bias.begin(), bias.end()) - bias.begin());
}

AttackReport RunAttack(const ModelParams& model, const GradientUpdate& target_grad,
                       std::span<const Example> truth, const AttackConfig& config,
                       const NoiseStream& stream, double target_scale) {
  config.validate();
  Require(!truth.empty(), ErrorCode::kInvalidArgument, "attack needs at least one target example");
  Require(target_grad.congruent_with(model), ErrorCode::kShapeMismatch,
          "target gradient is not congruent with the model");
  const std::size_t n = truth.size();
  const std::size_t dim = model.input_shape.size();

  AttackReport report;
  report.threshold = config.threshold;
  report.target_scale = target_scale;
  report.labels.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    report.labels[k] =
        config.label_mode == LabelMode::kKnown ? truth[k].label : InferLabel(model, target_grad);
  }

  std::vector<std::vector<double>> xs;
  if (config.initial_inputs) {
    Require(config.initial_inputs->size() == n, ErrorCode::kShapeMismatch,
            "initial_inputs must provide one input per target example");
    xs = *config.initial_inputs;
    for (auto& x : xs) {
      Require(x.size() == dim, ErrorCode::kShapeMismatch, "initial input has wrong size");
      Project(x);
    }
  } else {
    for (std::size_t k = 0; k < n; ++k) {
      Generator gen = stream.derive({1, k}).generator();
      xs.push_back(MakeSeed(config.seed_mode, model.input_shape, gen));
    }
  }

  MatchObjective objective(model, target_grad, report.labels, config.match_support);
  double loss = objective.evaluate(xs);
  double step = 0.0;  // gradient descent: current step multiplier, set on first use
  std::vector<std::vector<double>> adam_m(n, std::vector<double>(dim, 0.0));
  std::vector<std::vector<double>> adam_v = adam_m;
  std::vector<std::vector<double>> grad(n, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> coords(n * dim);
  std::iota(coords.begin(), coords.end(), 0);

  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    Require(std::isfinite(loss), ErrorCode::kNumericFailure,
            "attack loss became non-finite at iteration " + std::to_string(it));
    report.loss_trajectory.push_back(loss);
    report.iterations_used = it;
    if (loss < config.threshold) {
      report.success = true;
      break;
    }
    if (it == config.max_iters) break;

    // Central finite differences w.r.t. the dummy inputs.
    std::span<const std::size_t> probe_set(coords);
    std::vector<std::size_t> subset;
    if (config.fd_coordinates > 0 && config.fd_coordinates < coords.size()) {
      subset = coords;
      Generator gen = stream.derive({2, it}).generator();
      for (std::size_t i = 0; i < config.fd_coordinates; ++i)
        std::swap(subset[i], subset[i + gen.uniform_index(subset.size() - i)]);
      subset.resize(config.fd_coordinates);
      probe_set = subset;
    }
    for (auto& g : grad) std::fill(g.begin(), g.end(), 0.0);
    double grad_inf = 0.0;
    for (std::size_t c : probe_set) {
      const std::size_t k = c / dim, a = c % dim;
      std::vector<double> xk = xs[k];
      xk[a] = xs[k][a] + config.fd_step;
      const double up = objective.probe(k, xk);
      xk[a] = xs[k][a] - config.fd_step;
      const double down = objective.probe(k, xk);
      grad[k][a] = (up - down) / (2.0 * config.fd_step);
      grad_inf = std::max(grad_inf, std::abs(grad[k][a]));
    }
    Require(std::isfinite(grad_inf), ErrorCode::kNumericFailure,
            "attack gradient became non-finite at iteration " + std::to_string(it));
    if (grad_inf == 0.0) continue;

    if (config.optimizer == AttackOptimizer::kAdamFd) {
      constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
      const double t = static_cast<double>(it);
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t a = 0; a < dim; ++a) {
          adam_m[k][a] = kBeta1 * adam_m[k][a] + (1 - kBeta1) * grad[k][a];
          adam_v[k][a] = kBeta2 * adam_v[k][a] + (1 - kBeta2) * grad[k][a] * grad[k][a];
          const double mh = adam_m[k][a] / (1 - std::pow(kBeta1, t));
          const double vh = adam_v[k][a] / (1 - std::pow(kBeta2, t));
          xs[k][a] -= config.step_size * mh / (std::sqrt(vh) + kEps);
        }
        Project(xs[k]);
      }
      loss = objective.evaluate(xs);
      continue;
    }

    // Projected gradient descent with backtracking: halve until the loss does
    // not increase (at most 10 halvings); grow again after acceptance.
    if (step == 0.0) step = config.step_size / grad_inf;
    bool accepted = false;
    for (int halving = 0; halving <= 10; ++halving) {
      auto trial = xs;
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t a = 0; a < dim; ++a) trial[k][a] -= step * grad[k][a];
        Project(trial[k]);
      }
      const double trial_loss = objective.evaluate(trial);
      if (std::isfinite(trial_loss) && trial_loss <= loss) {
        xs = std::move(trial);
        loss = trial_loss;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (accepted) {
      step *= 2.0;
    } else {
      objective.evaluate(xs);  // restore the cache for the unchanged point
    }
  }

  report.final_gradient_loss = loss;
  report.reconstructed = xs;
  report.reconstruction_distance = BatchDistance(truth, xs);
  return report;
}

std::string_view LeakTypeName(LeakType type) {
  switch (type) {
    case LeakType::kType0: return "type0";
    case LeakType::kType1: return "type1";
    case LeakType::kType2: return "type2";
  }
  return "unknown";
}

std::string DefenseName(const DpConfig& dp) {
  switch (dp.placement) {
    case Placement::kNone: return "non-private";
    case Placement::kPerClient: return "fed-sdp";
    case Placement::kPerExample:
      return dp.schedule.kind == ClipSchedule::Kind::kLinearDecay ? "fed-cdp-decay" : "fed-cdp";
  }
  return "unknown";
}

LeakTarget CaptureLeak(const FederationConfig& config, const ModelParams& model,
                       const ClientShard& shard, const LeakSpec& spec) {
  Require(spec.round < config.rounds, ErrorCode::kOutOfRange, "leak round outside [0, T)");
  Require(shard.client_id == spec.client, ErrorCode::kInvalidArgument,
          "shard does not belong to the targeted client");
  const auto& dp = config.dp;
  const NoiseStream root(config.master_seed);
  const NoiseStream client_stream = ClientRoundStream(root, spec.round, spec.client);
  const double clip = dp.placement == Placement::kNone
                          ? 0.0
                          : ClipBoundAt(dp.schedule, spec.round, config.rounds);

  LeakTarget leak;
  if (spec.type == LeakType::kType2) {
    Require(spec.example < config.batch_size, ErrorCode::kOutOfRange,
            "type-2 example index outside the local batch");
    Generator gen = client_stream.derive({stream_tags::kBatch, 0}).generator();
    const auto idx = SampleBatchIndices(shard.size(), config.batch_size, gen);
    const Example& ex = shard.examples[idx[spec.example]];
    GradientUpdate g = BackwardExample(model, ex).grad;
    if (dp.placement == Placement::kPerExample) {
      g = AddGaussianNoise(ClipPerLayer(g, clip), dp.sigma * clip,
                           client_stream.derive({stream_tags::kExampleNoise, 0}).derive(spec.example));
    }
    if (config.compression > 0.0) g = PruneUpdate(g, config.compression);
    leak.gradient = std::move(g);
    leak.truth = {ex};
    return leak;
  }

  auto local = LocalTrain(model, shard, config.local_iters, config.batch_size, config.eta, dp,
                          clip, client_stream);
  GradientUpdate delta = std::move(local.delta);
  if (config.compression > 0.0) delta = PruneUpdate(delta, config.compression);
  if (dp.placement == Placement::kPerClient) {
    const bool noisy = spec.type == LeakType::kType0 || dp.sdp_noise_side == SdpNoiseSide::kClient;
    if (noisy) {
      delta = SanitizeClientUpdate(delta, clip, dp.sigma,
                                   ServerNoiseStream(root, spec.round).derive(spec.client));
    }
  }
  leak.scale = -1.0 / (config.eta * static_cast<double>(config.local_iters));
  leak.gradient = Scale(delta, leak.scale);
  std::vector<std::size_t> seen;
  for (const auto& batch : local.batches) {
    for (std::size_t i : batch) {
      if (std::find(seen.begin(), seen.end(), i) == seen.end()) {
        seen.push_back(i);
        leak.truth.push_back(shard.examples[i]);
      }
    }
  }
  return leak;
}

void WriteAttackReport(std::ostream& out, const AttackReport& report,
                       std::span<const std::pair<std::string, std::string>> context) {
  std::ostringstream s;
  s << std::setprecision(17);
  for (const auto& [k, v] : context) s << k << '=' << v << '\n';
  s << "success=" << (report.success ? "true" : "false") << '\n';
  s << "iterations_used=" << report.iterations_used << '\n';
  s << "final_gradient_loss=" << report.final_gradient_loss << '\n';
  s << "reconstruction_distance=" << report.reconstruction_distance << '\n';
  s << "threshold=" << report.threshold << '\n';
  s << "target_scale=" << report.target_scale << '\n';
  s << "labels=";
  for (std::size_t k = 0; k < report.labels.size(); ++k) s << (k ? "," : "") << report.labels[k];
  s << '\n';
  s << "dummies=" << report.reconstructed.size() << '\n';
  s << "features_per_dummy=" << (report.reconstructed.empty() ? 0 : report.reconstructed[0].size())
    << '\n';
  s << "loss_trajectory=";
  for (std::size_t i = 0; i < report.loss_trajectory.size(); ++i)
    s << (i ? "," : "") << report.loss_trajectory[i];
  s << '\n';
  s << "reconstruction=";
  bool first = true;
  for (const auto& x : report.reconstructed)
    for (double v : x) {
      s << (first ? "" : ",") << v;
      first = false;
    }
  s << '\n';
  out << s.str();
}

}  // namespace dpfl
