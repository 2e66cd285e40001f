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
#ifndef DPFL_TENSOR_NN_HPP_
#define DPFL_TENSOR_NN_HPP_

// Minimal feed-forward network core: dense / conv / pool / activation layers,
// softmax cross-entropy, and exact per-example backpropagation. Everything is
// a pure function over value types, in 64-bit floats.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dpfl {

struct Shape3 {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

std::string ToString(const Shape3& shape);

enum class LayerKind : std::uint32_t {
  kDense = 1,
  kConv = 2,
  kMaxPool = 3,
  kRelu = 4,
  kSigmoid = 5,
};

std::string_view LayerKindName(LayerKind kind);

struct LayerParams {
  LayerKind kind = LayerKind::kDense;
  Shape3 input;
  Shape3 output;
  // Conv: square kernel side; pool: window side. Unused otherwise.
  std::size_t kernel = 0;
  // Dense: output x input, row-major. Conv: out_c x in_c x k x k.
  std::vector<double> weights;
  std::vector<double> bias;

  bool trainable() const { return kind == LayerKind::kDense || kind == LayerKind::kConv; }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }
};

struct ModelParams {
  Shape3 input_shape;
  std::size_t classes = 0;
  std::vector<LayerParams> layers;

  // M: number of trainable layers.
  std::size_t trainable_count() const;
  std::size_t parameter_count() const;
  // Positions of trainable layers inside `layers`, in order.
  std::vector<std::size_t> trainable_indices() const;

  friend bool operator==(const ModelParams&, const ModelParams&);
};

bool operator==(const LayerParams& a, const LayerParams& b);

struct Example {
  std::vector<double> features;
  std::size_t label = 0;
};

// Per-trainable-layer gradient (or parameter delta). Each layer is stored
// flattened as weights followed by bias, mirroring LayerParams. The L2 norm of
// every layer is computed on construction and kept in sync.
class GradientUpdate {
 public:
  GradientUpdate() = default;
  explicit GradientUpdate(std::vector<std::vector<double>> layers);

  static GradientUpdate ZerosLike(const ModelParams& model);

  std::size_t layer_count() const { return layers_.size(); }
  std::span<const double> layer(std::size_t m) const { return layers_.at(m); }
  const std::vector<std::vector<double>>& layers() const { return layers_; }
  const std::vector<double>& layer_norms() const { return norms_; }
  // Total coordinate count across layers.
  std::size_t size() const;
  // L2 norm over every coordinate of every layer.
  double global_norm() const;
  std::vector<double> flatten() const;
  bool all_finite() const;

  // True when layer sizes match `model`'s trainable layers.
  bool congruent_with(const ModelParams& model) const;
  bool congruent_with(const GradientUpdate& other) const;

  friend bool operator==(const GradientUpdate& a, const GradientUpdate& b) {
    return a.layers_ == b.layers_;
  }

 private:
  std::vector<std::vector<double>> layers_;
  std::vector<double> norms_;
};

double L2Norm(std::span<const double> values);

// a + factor * b, coordinate-wise.
GradientUpdate AddScaled(const GradientUpdate& a, const GradientUpdate& b, double factor);
GradientUpdate Scale(const GradientUpdate& g, double factor);
// Coordinate-wise mean; sums in the given order, then divides by the count.
GradientUpdate MeanUpdate(std::span<const GradientUpdate> updates);

// after - before, per trainable layer.
GradientUpdate ParameterDelta(const ModelParams& after, const ModelParams& before);
// model + factor * update.
ModelParams ApplyUpdate(const ModelParams& model, const GradientUpdate& update, double factor);

struct Architecture {
  // One of "cnn-small", "mlp-2h", "mlp-tiny".
  std::string name;
  Shape3 input;
  std::size_t classes = 0;
};

// Deterministic He-style uniform initialisation U(-sqrt(6/fan_in), +) for
// weights, zero bias.
//   mlp-tiny : in -> 16 -> Z (sigmoid hidden unit)
//   mlp-2h   : in -> 32 -> 16 -> Z (sigmoid hidden units)
//   cnn-small: conv3x3x16, relu, pool2, conv3x3x32, relu, pool2, dense -> Z
ModelParams BuildModel(const Architecture& arch, std::uint64_t seed);

// Pre-softmax scores.
std::vector<double> Logits(const ModelParams& model, std::span<const double> x);
// Softmax probabilities; log-sum-exp stabilised.
std::vector<double> Forward(const ModelParams& model, std::span<const double> x);
std::size_t Predict(const ModelParams& model, std::span<const double> x);

struct ExampleGradient {
  double loss = 0.0;
  GradientUpdate grad;
};

// Cross-entropy loss of Forward(model, ex.features) at ex.label and its exact
// gradient with respect to every trainable parameter.
ExampleGradient BackwardExample(const ModelParams& model, const Example& ex);

// Gradient of <logit_grad, Logits(model, x)> w.r.t. the parameters, i.e.
// backpropagation seeded with an arbitrary upstream gradient on the scores.
GradientUpdate ParameterGradient(const ModelParams& model, std::span<const double> x,
                                 std::span<const double> logit_grad);

double CrossEntropyLoss(const ModelParams& model, const Example& ex);
double Accuracy(const ModelParams& model, std::span<const Example> examples);

// p' = p - eta * g for every trainable parameter.
ModelParams SgdStep(const ModelParams& model, const GradientUpdate& grad, double eta);

bool AllFinite(const ModelParams& model);

}  // namespace dpfl

#endif  // DPFL_TENSOR_NN_HPP_
