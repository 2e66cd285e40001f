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
#include "dpfl/tensor_nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dpfl/error.hpp"
#include "dpfl/random.hpp"

namespace dpfl {
namespace {

void ForwardLayer(const LayerParams& layer, std::span<const double> in,
                  std::vector<double>& out) {
  out.assign(layer.output.size(), 0.0);
  switch (layer.kind) {
    case LayerKind::kDense: {
      const std::size_t n_in = in.size();
      for (std::size_t o = 0; o < out.size(); ++o) {
        const double* w = layer.weights.data() + o * n_in;
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < n_in; ++i) acc += w[i] * in[i];
        out[o] = acc;
      }
      break;
    }
    case LayerKind::kConv: {
      const std::size_t k = layer.kernel;
      const std::size_t ic_n = layer.input.channels;
      const std::size_t ih = layer.input.height, iw = layer.input.width;
      const std::size_t oh = layer.output.height, ow = layer.output.width;
      for (std::size_t oc = 0; oc < layer.output.channels; ++oc) {
        double* plane = out.data() + oc * oh * ow;
        std::fill(plane, plane + oh * ow, layer.bias[oc]);
        for (std::size_t ic = 0; ic < ic_n; ++ic) {
          const double* src = in.data() + ic * ih * iw;
          const double* w = layer.weights.data() + ((oc * ic_n + ic) * k * k);
          for (std::size_t u = 0; u < k; ++u) {
            for (std::size_t v = 0; v < k; ++v) {
              const double wv = w[u * k + v];
              for (std::size_t y = 0; y < oh; ++y) {
                const double* row = src + (y + u) * iw + v;
                double* dst = plane + y * ow;
                for (std::size_t x = 0; x < ow; ++x) dst[x] += wv * row[x];
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::kMaxPool: {
      const std::size_t k = layer.kernel;
      const std::size_t ih = layer.input.height, iw = layer.input.width;
      const std::size_t oh = layer.output.height, ow = layer.output.width;
      for (std::size_t c = 0; c < layer.output.channels; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t x = 0; x < ow; ++x) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v)
                best = std::max(best, in[(c * ih + y * k + u) * iw + x * k + v]);
            out[(c * oh + y) * ow + x] = best;
          }
        }
      }
      break;
    }
    case LayerKind::kRelu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
    case LayerKind::kSigmoid:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
      break;
  }
}

// Back-propagates `dout` through one layer. Writes the parameter gradient (if
// trainable) to `grad` and, when `din` is non-null, the input gradient.
void BackwardLayer(const LayerParams& layer, std::span<const double> in,
                   std::span<const double> out, std::span<const double> dout,
                   std::vector<double>* grad, std::vector<double>* din) {
  if (din != nullptr) din->assign(in.size(), 0.0);
  switch (layer.kind) {
    case LayerKind::kDense: {
      const std::size_t n_in = in.size();
      const std::size_t n_out = dout.size();
      grad->assign(layer.parameter_count(), 0.0);
      for (std::size_t o = 0; o < n_out; ++o) {
        const double d = dout[o];
        double* gw = grad->data() + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) gw[i] = d * in[i];
        (*grad)[n_out * n_in + o] = d;
      }
      if (din != nullptr) {
        for (std::size_t o = 0; o < n_out; ++o) {
          const double d = dout[o];
          const double* w = layer.weights.data() + o * n_in;
          for (std::size_t i = 0; i < n_in; ++i) (*din)[i] += w[i] * d;
        }
      }
      break;
    }
    case LayerKind::kConv: {
      const std::size_t k = layer.kernel;
      const std::size_t ic_n = layer.input.channels;
      const std::size_t ih = layer.input.height, iw = layer.input.width;
      const std::size_t oh = layer.output.height, ow = layer.output.width;
      grad->assign(layer.parameter_count(), 0.0);
      double* gbias = grad->data() + layer.weights.size();
      for (std::size_t oc = 0; oc < layer.output.channels; ++oc) {
        const double* dplane = dout.data() + oc * oh * ow;
        gbias[oc] = std::accumulate(dplane, dplane + oh * ow, 0.0);
        for (std::size_t ic = 0; ic < ic_n; ++ic) {
          const double* src = in.data() + ic * ih * iw;
          const std::size_t woff = (oc * ic_n + ic) * k * k;
          for (std::size_t u = 0; u < k; ++u) {
            for (std::size_t v = 0; v < k; ++v) {
              double acc = 0.0;
              for (std::size_t y = 0; y < oh; ++y) {
                const double* row = src + (y + u) * iw + v;
                const double* drow = dplane + y * ow;
                for (std::size_t x = 0; x < ow; ++x) acc += drow[x] * row[x];
              }
              (*grad)[woff + u * k + v] = acc;
              if (din != nullptr) {
                const double wv = layer.weights[woff + u * k + v];
                double* dsrc = din->data() + ic * ih * iw;
                for (std::size_t y = 0; y < oh; ++y) {
                  double* drow_in = dsrc + (y + u) * iw + v;
                  const double* drow = dplane + y * ow;
                  for (std::size_t x = 0; x < ow; ++x) drow_in[x] += wv * drow[x];
                }
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::kMaxPool: {
      if (din == nullptr) break;
      const std::size_t k = layer.kernel;
      const std::size_t ih = layer.input.height, iw = layer.input.width;
      const std::size_t oh = layer.output.height, ow = layer.output.width;
      for (std::size_t c = 0; c < layer.output.channels; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t x = 0; x < ow; ++x) {
            const double target = out[(c * oh + y) * ow + x];
            // Route to the first maximal position in window order.
            bool routed = false;
            for (std::size_t u = 0; u < k && !routed; ++u) {
              for (std::size_t v = 0; v < k && !routed; ++v) {
                const std::size_t idx = (c * ih + y * k + u) * iw + x * k + v;
                if (in[idx] == target) {
                  (*din)[idx] += dout[(c * oh + y) * ow + x];
                  routed = true;
                }
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::kRelu:
      if (din != nullptr)
        for (std::size_t i = 0; i < in.size(); ++i) (*din)[i] = in[i] > 0.0 ? dout[i] : 0.0;
      break;
    case LayerKind::kSigmoid:
      if (din != nullptr)
        for (std::size_t i = 0; i < in.size(); ++i) (*din)[i] = dout[i] * out[i] * (1.0 - out[i]);
      break;
  }
}

void CheckInput(const ModelParams& model, std::span<const double> x) {
  Require(x.size() == model.input_shape.size(), ErrorCode::kShapeMismatch,
          "input has " + std::to_string(x.size()) + " features, model expects " +
              ToString(model.input_shape));
}

// activations[0] = x, activations[k + 1] = output of layer k.
std::vector<std::vector<double>> Trace(const ModelParams& model, std::span<const double> x) {
  CheckInput(model, x);
  std::vector<std::vector<double>> acts(model.layers.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    ForwardLayer(model.layers[k], acts[k], acts[k + 1]);
  }
  return acts;
}

GradientUpdate Backprop(const ModelParams& model,
                        const std::vector<std::vector<double>>& acts,
                        std::span<const double> logit_grad) {
  const std::size_t n = model.layers.size();
  std::vector<std::vector<double>> grads;
  grads.reserve(model.trainable_count());
  std::vector<double> upstream(logit_grad.begin(), logit_grad.end());
  std::vector<double> next;
  // Walk backwards; trainable gradients are collected in reverse.
  std::size_t first_trainable = n;
  for (std::size_t k = 0; k < n; ++k) {
    if (model.layers[k].trainable()) {
      first_trainable = k;
      break;
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    const LayerParams& layer = model.layers[k];
    std::vector<double> g;
    const bool need_din = k > first_trainable;
    BackwardLayer(layer, acts[k], acts[k + 1], upstream, layer.trainable() ? &g : nullptr,
                  need_din ? &next : nullptr);
    if (layer.trainable()) grads.push_back(std::move(g));
    if (!need_din) break;
    upstream.swap(next);
  }
  std::reverse(grads.begin(), grads.end());
  return GradientUpdate(std::move(grads));
}

double LogSumExp(std::span<const double> z) {
  const double peak = *std::max_element(z.begin(), z.end());
  double acc = 0.0;
  for (double v : z) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

LayerParams MakeDense(std::size_t in, std::size_t out) {
  LayerParams layer;
  layer.kind = LayerKind::kDense;
  layer.input = {in, 1, 1};
  layer.output = {out, 1, 1};
  layer.weights.assign(in * out, 0.0);
  layer.bias.assign(out, 0.0);
  return layer;
}

LayerParams MakeConv(const Shape3& in, std::size_t filters, std::size_t k) {
  Require(in.height >= k && in.width >= k, ErrorCode::kInvalidArgument,
          "conv kernel larger than input " + ToString(in));
  LayerParams layer;
  layer.kind = LayerKind::kConv;
  layer.kernel = k;
  layer.input = in;
  layer.output = {filters, in.height - k + 1, in.width - k + 1};
  layer.weights.assign(filters * in.channels * k * k, 0.0);
  layer.bias.assign(filters, 0.0);
  return layer;
}

LayerParams MakePool(const Shape3& in, std::size_t k) {
  Require(in.height >= k && in.width >= k, ErrorCode::kInvalidArgument,
          "pool window larger than input " + ToString(in));
  LayerParams layer;
  layer.kind = LayerKind::kMaxPool;
  layer.kernel = k;
  layer.input = in;
  layer.output = {in.channels, in.height / k, in.width / k};
  return layer;
}

LayerParams MakeActivation(LayerKind kind, const Shape3& shape) {
  LayerParams layer;
  layer.kind = kind;
  layer.input = shape;
  layer.output = shape;
  return layer;
}

}  // namespace

std::string ToString(const Shape3& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

std::string_view LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv: return "conv";
    case LayerKind::kMaxPool: return "pool";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kSigmoid: return "sigmoid";
  }
  return "unknown";
}

std::size_t ModelParams::trainable_count() const {
  return static_cast<std::size_t>(
      std::count_if(layers.begin(), layers.end(), [](const LayerParams& l) { return l.trainable(); }));
}

std::size_t ModelParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers) total += l.parameter_count();
  return total;
}

std::vector<std::size_t> ModelParams::trainable_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < layers.size(); ++k)
    if (layers[k].trainable()) idx.push_back(k);
  return idx;
}

bool operator==(const LayerParams& a, const LayerParams& b) {
  return a.kind == b.kind && a.input == b.input && a.output == b.output &&
         a.kernel == b.kernel && a.weights == b.weights && a.bias == b.bias;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  return a.input_shape == b.input_shape && a.classes == b.classes && a.layers == b.layers;
}

double L2Norm(std::span<const double> values) {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc);
}

GradientUpdate::GradientUpdate(std::vector<std::vector<double>> layers)
    : layers_(std::move(layers)) {
  norms_.reserve(layers_.size());
  for (const auto& l : layers_) norms_.push_back(L2Norm(l));
}

GradientUpdate GradientUpdate::ZerosLike(const ModelParams& model) {
  std::vector<std::vector<double>> layers;
  for (const auto& l : model.layers)
    if (l.trainable()) layers.emplace_back(l.parameter_count(), 0.0);
  return GradientUpdate(std::move(layers));
}

std::size_t GradientUpdate::size() const {
  std::size_t total = 0;
  for (const auto& l : layers_) total += l.size();
  return total;
}

double GradientUpdate::global_norm() const {
  double acc = 0.0;
  for (double n : norms_) acc += n * n;
  return std::sqrt(acc);
}

std::vector<double> GradientUpdate::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  for (const auto& l : layers_) flat.insert(flat.end(), l.begin(), l.end());
  return flat;
}

bool GradientUpdate::all_finite() const {
  for (const auto& l : layers_)
    for (double v : l)
      if (!std::isfinite(v)) return false;
  return true;
}

bool GradientUpdate::congruent_with(const ModelParams& model) const {
  const auto idx = model.trainable_indices();
  if (idx.size() != layers_.size()) return false;
  for (std::size_t m = 0; m < idx.size(); ++m)
    if (model.layers[idx[m]].parameter_count() != layers_[m].size()) return false;
  return true;
}

bool GradientUpdate::congruent_with(const GradientUpdate& other) const {
  if (other.layers_.size() != layers_.size()) return false;
  for (std::size_t m = 0; m < layers_.size(); ++m)
    if (other.layers_[m].size() != layers_[m].size()) return false;
  return true;
}

GradientUpdate AddScaled(const GradientUpdate& a, const GradientUpdate& b, double factor) {
  Require(a.congruent_with(b), ErrorCode::kShapeMismatch, "AddScaled: incongruent updates");
  std::vector<std::vector<double>> out = a.layers();
  for (std::size_t m = 0; m < out.size(); ++m) {
    const auto src = b.layer(m);
    for (std::size_t i = 0; i < out[m].size(); ++i) out[m][i] += factor * src[i];
  }
  return GradientUpdate(std::move(out));
}

GradientUpdate Scale(const GradientUpdate& g, double factor) {
  std::vector<std::vector<double>> out = g.layers();
  for (auto& l : out)
    for (double& v : l) v *= factor;
  return GradientUpdate(std::move(out));
}

GradientUpdate MeanUpdate(std::span<const GradientUpdate> updates) {
  Require(!updates.empty(), ErrorCode::kEmptyInput, "mean of zero updates");
  std::vector<std::vector<double>> acc = updates.front().layers();
  for (std::size_t k = 1; k < updates.size(); ++k) {
    Require(updates[k].congruent_with(updates.front()), ErrorCode::kShapeMismatch,
            "mean over incongruent updates");
    for (std::size_t m = 0; m < acc.size(); ++m) {
      const auto src = updates[k].layer(m);
      for (std::size_t i = 0; i < acc[m].size(); ++i) acc[m][i] += src[i];
    }
  }
  const double n = static_cast<double>(updates.size());
  for (auto& l : acc)
    for (double& v : l) v /= n;
  return GradientUpdate(std::move(acc));
}

GradientUpdate ParameterDelta(const ModelParams& after, const ModelParams& before) {
  const auto idx = before.trainable_indices();
  Require(after.layers.size() == before.layers.size() && after.trainable_indices() == idx,
          ErrorCode::kShapeMismatch, "ParameterDelta: different architectures");
  std::vector<std::vector<double>> layers;
  layers.reserve(idx.size());
  for (std::size_t k : idx) {
    const auto& a = after.layers[k];
    const auto& b = before.layers[k];
    Require(a.weights.size() == b.weights.size() && a.bias.size() == b.bias.size(),
            ErrorCode::kShapeMismatch, "ParameterDelta: layer size mismatch");
    std::vector<double> d(a.parameter_count());
    for (std::size_t i = 0; i < a.weights.size(); ++i) d[i] = a.weights[i] - b.weights[i];
    for (std::size_t i = 0; i < a.bias.size(); ++i)
      d[a.weights.size() + i] = a.bias[i] - b.bias[i];
    layers.push_back(std::move(d));
  }
  return GradientUpdate(std::move(layers));
}

ModelParams ApplyUpdate(const ModelParams& model, const GradientUpdate& update, double factor) {
  Require(update.congruent_with(model), ErrorCode::kShapeMismatch,
          "update is not shape-congruent with the model");
  ModelParams out = model;
  std::size_t m = 0;
  for (auto& layer : out.layers) {
    if (!layer.trainable()) continue;
    const auto g = update.layer(m++);
    const std::size_t nw = layer.weights.size();
    for (std::size_t i = 0; i < nw; ++i) layer.weights[i] += factor * g[i];
    for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] += factor * g[nw + i];
  }
  return out;
}

ModelParams BuildModel(const Architecture& arch, std::uint64_t seed) {
  Require(arch.input.size() > 0, ErrorCode::kInvalidArgument, "input dims must be positive");
  Require(arch.classes > 0, ErrorCode::kInvalidArgument, "output dims must be positive");
  ModelParams model;
  model.input_shape = arch.input;
  model.classes = arch.classes;
  const std::size_t in = arch.input.size();
  if (arch.name == "mlp-tiny") {
    model.layers.push_back(MakeDense(in, 16));
    model.layers.push_back(MakeActivation(LayerKind::kSigmoid, {16, 1, 1}));
    model.layers.push_back(MakeDense(16, arch.classes));
  } else if (arch.name == "mlp-2h") {
    model.layers.push_back(MakeDense(in, 32));
    model.layers.push_back(MakeActivation(LayerKind::kSigmoid, {32, 1, 1}));
    model.layers.push_back(MakeDense(32, 16));
    model.layers.push_back(MakeActivation(LayerKind::kSigmoid, {16, 1, 1}));
    model.layers.push_back(MakeDense(16, arch.classes));
  } else if (arch.name == "cnn-small") {
    Shape3 shape = arch.input;
    model.layers.push_back(MakeConv(shape, 16, 3));
    shape = model.layers.back().output;
    model.layers.push_back(MakeActivation(LayerKind::kRelu, shape));
    model.layers.push_back(MakePool(shape, 2));
    shape = model.layers.back().output;
    model.layers.push_back(MakeConv(shape, 32, 3));
    shape = model.layers.back().output;
    model.layers.push_back(MakeActivation(LayerKind::kRelu, shape));
    model.layers.push_back(MakePool(shape, 2));
    shape = model.layers.back().output;
    model.layers.push_back(MakeDense(shape.size(), arch.classes));
  } else {
    throw Error(ErrorCode::kUnknownArchitecture, "unknown architecture '" + arch.name + "'");
  }

  Generator gen = NoiseStream(seed).derive({0x696E6974ull}).generator();
  for (auto& layer : model.layers) {
    if (!layer.trainable()) continue;
    const std::size_t fan_in = layer.kind == LayerKind::kDense
                                   ? layer.input.size()
                                   : layer.input.channels * layer.kernel * layer.kernel;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& w : layer.weights) w = (2.0 * gen.uniform() - 1.0) * limit;
  }
  return model;
}

std::vector<double> Logits(const ModelParams& model, std::span<const double> x) {
  auto acts = Trace(model, x);
  return std::move(acts.back());
}

std::vector<double> Forward(const ModelParams& model, std::span<const double> x) {
  std::vector<double> z = Logits(model, x);
  const double lse = LogSumExp(z);
  for (double& v : z) v = std::exp(v - lse);
  return z;
}

std::size_t Predict(const ModelParams& model, std::span<const double> x) {
  const auto z = Logits(model, x);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

ExampleGradient BackwardExample(const ModelParams& model, const Example& ex) {
  Require(ex.label < model.classes, ErrorCode::kOutOfRange,
          "label " + std::to_string(ex.label) + " outside [0, " + std::to_string(model.classes) +
              ")");
  const auto acts = Trace(model, ex.features);
  const auto& z = acts.back();
  const double lse = LogSumExp(z);
  std::vector<double> dz(z.size());
  for (std::size_t c = 0; c < z.size(); ++c) dz[c] = std::exp(z[c] - lse);
  dz[ex.label] -= 1.0;
  ExampleGradient out;
  out.loss = lse - z[ex.label];
  out.grad = Backprop(model, acts, dz);
  return out;
}

GradientUpdate ParameterGradient(const ModelParams& model, std::span<const double> x,
                                 std::span<const double> logit_grad) {
  Require(logit_grad.size() == model.classes, ErrorCode::kShapeMismatch,
          "logit gradient has wrong length");
  const auto acts = Trace(model, x);
  return Backprop(model, acts, logit_grad);
}

double CrossEntropyLoss(const ModelParams& model, const Example& ex) {
  Require(ex.label < model.classes, ErrorCode::kOutOfRange, "label out of range");
  const auto z = Logits(model, ex.features);
  return LogSumExp(z) - z[ex.label];
}

double Accuracy(const ModelParams& model, std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : examples)
    if (Predict(model, ex.features) == ex.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

ModelParams SgdStep(const ModelParams& model, const GradientUpdate& grad, double eta) {
  Require(eta > 0.0, ErrorCode::kInvalidArgument, "learning rate must be positive");
  return ApplyUpdate(model, grad, -eta);
}

bool AllFinite(const ModelParams& model) {
  for (const auto& l : model.layers) {
    for (double v : l.weights)
      if (!std::isfinite(v)) return false;
    for (double v : l.bias)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace dpfl
