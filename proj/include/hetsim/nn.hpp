// Copyright 2026 The hetsim Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hetsim {

enum class LayerKind { kConv2d, kDense, kRelu, kMaxPool, kFlatten, kSoftmaxXent };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

// kernel/filters apply to conv2d (stride 1, zero "same" padding, odd kernel);
// units to dense; pool to maxpool (window == stride).
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int kernel = 0;
  int filters = 0;
  int units = 0;
  int pool = 0;

  static LayerSpec conv2d(int kernel, int filters) { return {LayerKind::kConv2d, kernel, filters, 0, 0}; }
  static LayerSpec dense(int units) { return {LayerKind::kDense, 0, 0, units, 0}; }
  static LayerSpec relu() { return {LayerKind::kRelu, 0, 0, 0, 0}; }
  static LayerSpec maxpool(int pool) { return {LayerKind::kMaxPool, 0, 0, 0, pool}; }
  static LayerSpec flatten() { return {LayerKind::kFlatten, 0, 0, 0, 0}; }
  static LayerSpec softmax_xent() { return {LayerKind::kSoftmaxXent, 0, 0, 0, 0}; }

  bool operator==(const LayerSpec&) const = default;
};

struct Shape3 {
  int h = 0;
  int w = 0;
  int c = 0;
  std::size_t size() const { return static_cast<std::size_t>(h) * w * c; }
  bool operator==(const Shape3&) const = default;
};

// Architecture descriptor. Construction validates shape consistency and
// precomputes each layer's output shape and parameter offsets.
class ModelSpec {
 public:
  ModelSpec(Shape3 input, int classes, std::vector<LayerSpec> layers);

  // conv 3x3x8 -> relu -> maxpool 2 -> conv 3x3x16 -> relu -> maxpool 2 -> dense -> head
  static ModelSpec small_cnn(Shape3 input, int classes);

  const Shape3& input() const { return input_; }
  int classes() const { return classes_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t param_count() const { return param_count_; }

  // Shape entering layer i; out_shape(layers().size() - 1) is the logit shape.
  const Shape3& in_shape(std::size_t i) const { return shapes_[i]; }
  const Shape3& out_shape(std::size_t i) const { return shapes_[i + 1]; }
  // Offset of layer i's weights in the flat vector, then bias follows.
  std::size_t weight_offset(std::size_t i) const { return offsets_[i]; }
  std::size_t weight_count(std::size_t i) const { return weight_counts_[i]; }
  std::size_t bias_count(std::size_t i) const { return bias_counts_[i]; }
  std::size_t fan_in(std::size_t i) const;

  std::string to_text() const;
  static ModelSpec from_text(const std::string& text);

  bool operator==(const ModelSpec& o) const {
    return input_ == o.input_ && classes_ == o.classes_ && layers_ == o.layers_;
  }

 private:
  Shape3 input_;
  int classes_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape3> shapes_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> weight_counts_;
  std::vector<std::size_t> bias_counts_;
  std::size_t param_count_ = 0;
};

struct ModelState {
  std::shared_ptr<const ModelSpec> spec;
  std::vector<double> params;

  std::span<const double> weights(std::size_t layer) const;
  std::span<const double> bias(std::size_t layer) const;
};

struct Gradient {
  std::vector<double> values;
};

// Inputs are flat HWC tensors of the spec's input size.
struct Batch {
  std::vector<std::span<const double>> inputs;
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
};

struct ForwardResult {
  double loss = 0.0;
  std::vector<double> logits;  // size() x classes, row-major
};

struct BackwardResult {
  double loss = 0.0;
  Gradient grad;
};

ModelState init_params(const ModelSpec& spec, std::uint64_t seed);

ForwardResult forward_loss(const ModelState& state, const Batch& batch);
BackwardResult backward(const ModelState& state, const Batch& batch);

ModelState sgd_step(const ModelState& state, const Gradient& grad, double eta);
// params -= eta * grad, in place. Same arithmetic as sgd_step.
void sgd_step_inplace(ModelState& state, const Gradient& grad, double eta);

// Index of the largest logit; the lowest index wins ties.
std::uint32_t argmax(std::span<const double> logits);

// Fraction of samples classified correctly. Evaluated in chunks so the whole
// set need not be materialised as one batch.
double accuracy(const ModelState& state, const Batch& dataset);

// Mean cross-entropy over an arbitrarily large set (chunked forward passes).
double dataset_loss(const ModelState& state, const Batch& dataset);

// Per-layer weight/bias tensors, in layer order. Layers without parameters
// contribute empty entries.
struct LayerTensors {
  std::vector<double> weights;
  std::vector<double> bias;
};
std::vector<LayerTensors> unflatten(const ModelState& state);
ModelState flatten(std::shared_ptr<const ModelSpec> spec, const std::vector<LayerTensors>& layers);

// Little-endian blob: u64 count followed by count IEEE-754 doubles.
void write_params(std::ostream& out, std::span<const double> params);
std::vector<double> read_params(std::istream& in);

}  // namespace hetsim
