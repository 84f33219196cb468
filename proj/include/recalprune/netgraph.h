/* Copyright 2026 The Recalprune Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef RECALPRUNE_NETGRAPH_H_
#define RECALPRUNE_NETGRAPH_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "recalprune/batchnorm.h"
#include "recalprune/kernels.h"
#include "recalprune/tensor.h"

namespace recalprune {

enum class LayerKind {
  kConv,
  kDepthwiseConv,
  kFC,
  kReLU,
  kMaxPool,
  kGlobalAvgPool,
  kBatchNorm,
};

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::kReLU;
  // Output channels (Conv) or units (FC). Unused for other kinds.
  int64_t units = 0;
  int64_t kernel = 0;
  int64_t stride = 1;
  int64_t padding = 0;
  bool prunable = false;
  bool bias = false;  // only the final classifier carries one
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.9;

  bool has_weight() const {
    return kind == LayerKind::kConv || kind == LayerKind::kDepthwiseConv ||
           kind == LayerKind::kFC;
  }
  ConvGeometry geometry() const { return {stride, padding}; }

  static LayerSpec conv(int64_t units, int64_t kernel, int64_t stride,
                        int64_t padding, bool prunable = true);
  static LayerSpec depthwise(int64_t kernel, int64_t stride, int64_t padding);
  static LayerSpec fc(int64_t units, bool prunable, bool bias);
  static LayerSpec batch_norm();
  static LayerSpec relu();
  static LayerSpec max_pool();
  static LayerSpec global_avg_pool();

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  std::string name;
  std::vector<LayerSpec> layers;
  Shape input_shape;  // per-sample C,H,W
  int64_t class_count = 0;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Per-sample output shape of every layer (C,H,W or a single feature axis).
// Throws ShapeError on the first incompatible layer.
std::vector<Shape> infer_shapes(const NetworkSpec& spec);

// Structural rules on top of shape inference: every Conv/DepthwiseConv/FC
// except the final classifier is followed by BatchNorm, the last layer is an
// FC classifier with class_count units, and at least one layer is prunable.
void validate(const NetworkSpec& spec);

std::vector<int> prunable_layer_indices(const NetworkSpec& spec);

// Conv(w)-BN-ReLU-MaxPool x3, GlobalAvgPool, FC.
NetworkSpec micro_cnn(const Shape& input_shape, int64_t class_count,
                      int64_t width = 16);

// Standard conv stem followed by depthwise-separable blocks
// (DW3x3-BN-ReLU-PW1x1-BN-ReLU). Max pooling downsamples after the stem and
// after the first block. `widths` = {stem, block1, ..., blockN}.
NetworkSpec micro_mobilenet(const Shape& input_shape, int64_t class_count,
                            const std::vector<int64_t>& widths = {16, 32, 32,
                                                                  64, 64});

template <typename T>
struct LayerParams {
  Tensor<T> weight;  // conv [C_out,C_in,K,K], depthwise [C,1,K,K], fc [O,F]
  Tensor<T> bias;    // [O] for the classifier, empty otherwise
  std::optional<BNState<T>> bn;

  friend bool operator==(const LayerParams& a, const LayerParams& b) {
    if (!(a.weight == b.weight) || !(a.bias == b.bias)) return false;
    if (a.bn.has_value() != b.bn.has_value()) return false;
    if (!a.bn) return true;
    const auto& x = *a.bn;
    const auto& y = *b.bn;
    return x.gamma == y.gamma && x.beta == y.beta &&
           x.moving_mean == y.moving_mean && x.moving_var == y.moving_var &&
           x.epsilon == y.epsilon && x.momentum == y.momentum;
  }
};

// Parameters of a network, addressable by layer index. Layers without
// parameters hold empty entries.
template <typename T>
struct ParamStore {
  std::vector<LayerParams<T>> layers;

  LayerParams<T>& operator[](size_t i) { return layers.at(i); }
  const LayerParams<T>& operator[](size_t i) const { return layers.at(i); }
  size_t size() const { return layers.size(); }

  template <typename U>
  ParamStore<U> cast() const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;
};

// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero classifier weights
// and bias, gamma = 1, beta = 0, moving stats (0, 1).
template <typename T>
ParamStore<T> init_params(const NetworkSpec& spec, uint64_t seed);

// Throws ShapeError unless every tensor matches the NetworkSpec exactly.
template <typename T>
void check_params(const NetworkSpec& spec, const ParamStore<T>& params);

template <typename T>
int64_t count_parameters(const ParamStore<T>& params);

// Per-layer state kept by a Train-mode forward for backward.
template <typename T>
struct ForwardTrace {
  std::vector<Tensor<T>> inputs;  // input of layer i; back() is the logits
  std::vector<BNCache<T>> bn;
  std::vector<std::vector<int64_t>> pool_argmax;
};

template <typename T>
struct LayerGrads {
  Tensor<T> weight;
  Tensor<T> bias;
  std::vector<T> gamma;
  std::vector<T> beta;
};

template <typename T>
using Gradients = std::vector<LayerGrads<T>>;

// Sets every BN layer to `mode` and runs the network. `trace` may only be
// requested in Train mode; Recalibrate mode never produces gradients.
template <typename T>
Tensor<T> forward(const NetworkSpec& spec, ParamStore<T>& params,
                  const Tensor<T>& input, BNMode mode,
                  ForwardTrace<T>* trace = nullptr);

// Pure Eval-mode inference. Every BN state must already be in Eval mode.
template <typename T>
Tensor<T> infer(const NetworkSpec& spec, const ParamStore<T>& params,
                const Tensor<T>& input);

template <typename T>
Gradients<T> backward(const NetworkSpec& spec, const ParamStore<T>& params,
                      const ForwardTrace<T>& trace,
                      const Tensor<T>& grad_logits);

// Index of the first layer whose output in `trace` holds NaN/Inf, or -1.
template <typename T>
int first_nonfinite_layer(const ForwardTrace<T>& trace);

template <typename T>
void set_bn_mode(ParamStore<T>& params, BNMode mode);

// Multiply-accumulates per sample. 1 FLOP = 1 MAC; BN, ReLU and pooling
// count as zero.
struct FlopsReport {
  std::vector<int64_t> per_layer;
  int64_t total = 0;
};

FlopsReport count_flops(const NetworkSpec& spec);

// Histogram of |w| over the layer's weights. Bins are [edges[i], edges[i+1]);
// values outside every bin are not counted.
template <typename T>
std::vector<int64_t> weight_histogram(const ParamStore<T>& params,
                                      size_t layer_index,
                                      const std::vector<double>& bin_edges);

}  // namespace recalprune

#endif  // RECALPRUNE_NETGRAPH_H_
