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

#include "recalprune/netgraph.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace recalprune {
namespace {

std::string layer_label(const NetworkSpec& spec, size_t i) {
  return "layer " + std::to_string(i) + " (" + to_string(spec.layers[i].kind) +
         ")";
}

int64_t fan_in(const LayerSpec& layer, const Shape& in) {
  switch (layer.kind) {
    case LayerKind::kConv:
      return in[0] * layer.kernel * layer.kernel;
    case LayerKind::kDepthwiseConv:
      return layer.kernel * layer.kernel;
    case LayerKind::kFC:
      return shape_elements(in);
    default:
      return 0;
  }
}

Shape weight_shape(const LayerSpec& layer, const Shape& in) {
  switch (layer.kind) {
    case LayerKind::kConv:
      return {layer.units, in[0], layer.kernel, layer.kernel};
    case LayerKind::kDepthwiseConv:
      return {in[0], 1, layer.kernel, layer.kernel};
    case LayerKind::kFC:
      return {layer.units, shape_elements(in)};
    default:
      return {};
  }
}

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv:
      return "conv";
    case LayerKind::kDepthwiseConv:
      return "depthwise_conv";
    case LayerKind::kFC:
      return "fc";
    case LayerKind::kReLU:
      return "relu";
    case LayerKind::kMaxPool:
      return "max_pool";
    case LayerKind::kGlobalAvgPool:
      return "global_avg_pool";
    case LayerKind::kBatchNorm:
      return "batch_norm";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (LayerKind k :
       {LayerKind::kConv, LayerKind::kDepthwiseConv, LayerKind::kFC,
        LayerKind::kReLU, LayerKind::kMaxPool, LayerKind::kGlobalAvgPool,
        LayerKind::kBatchNorm}) {
    if (name == to_string(k)) return k;
  }
  throw ShapeError("unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::conv(int64_t units, int64_t kernel, int64_t stride,
                          int64_t padding, bool prunable) {
  LayerSpec l;
  l.kind = LayerKind::kConv;
  l.units = units;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.prunable = prunable;
  return l;
}

LayerSpec LayerSpec::depthwise(int64_t kernel, int64_t stride,
                               int64_t padding) {
  LayerSpec l;
  l.kind = LayerKind::kDepthwiseConv;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  return l;
}

LayerSpec LayerSpec::fc(int64_t units, bool prunable, bool bias) {
  LayerSpec l;
  l.kind = LayerKind::kFC;
  l.units = units;
  l.prunable = prunable;
  l.bias = bias;
  return l;
}

LayerSpec LayerSpec::batch_norm() {
  LayerSpec l;
  l.kind = LayerKind::kBatchNorm;
  return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::max_pool() {
  LayerSpec l;
  l.kind = LayerKind::kMaxPool;
  l.kernel = 2;
  l.stride = 2;
  return l;
}

LayerSpec LayerSpec::global_avg_pool() {
  LayerSpec l;
  l.kind = LayerKind::kGlobalAvgPool;
  return l;
}

std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
  if (spec.input_shape.size() != 3) {
    throw ShapeError("network input shape must be C,H,W, got " +
                     shape_string(spec.input_shape));
  }
  std::vector<Shape> out;
  out.reserve(spec.layers.size());
  Shape cur = spec.input_shape;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    auto fail = [&](const std::string& why) {
      throw ShapeError(layer_label(spec, i) + ": " + why + " (input " +
                       shape_string(cur) + ")");
    };
    try {
      switch (l.kind) {
        case LayerKind::kConv:
        case LayerKind::kDepthwiseConv: {
          if (cur.size() != 3) fail("needs a spatial input");
          if (l.kind == LayerKind::kConv && l.units <= 0) fail("no filters");
          const int64_t h = conv_output_extent(cur[1], l.kernel, l.geometry());
          const int64_t w = conv_output_extent(cur[2], l.kernel, l.geometry());
          cur = {l.kind == LayerKind::kConv ? l.units : cur[0], h, w};
          break;
        }
        case LayerKind::kFC:
          if (l.units <= 0) fail("no units");
          cur = {l.units};
          break;
        case LayerKind::kMaxPool:
          if (cur.size() != 3 || cur[1] < 2 || cur[2] < 2) {
            fail("needs a spatial input of at least 2x2");
          }
          cur = {cur[0], cur[1] / 2, cur[2] / 2};
          break;
        case LayerKind::kGlobalAvgPool:
          if (cur.size() != 3) fail("needs a spatial input");
          cur = {cur[0]};
          break;
        case LayerKind::kBatchNorm:
        case LayerKind::kReLU:
          break;
      }
    } catch (const ShapeError& e) {
      const std::string what = e.what();
      if (what.rfind("layer ", 0) == 0) throw;
      fail(what);
    }
    if (shape_elements(cur) <= 0) fail("empty output");
    out.push_back(cur);
  }
  return out;
}

void validate(const NetworkSpec& spec) {
  const std::vector<Shape> shapes = infer_shapes(spec);
  if (spec.layers.empty()) throw ShapeError("network has no layers");
  const LayerSpec& last = spec.layers.back();
  if (last.kind != LayerKind::kFC || last.units != spec.class_count) {
    throw ShapeError("last layer must be an FC classifier with " +
                     std::to_string(spec.class_count) + " units");
  }
  if (last.prunable) throw ShapeError("the classifier is never prunable");
  for (size_t i = 0; i + 1 < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.has_weight() && spec.layers[i + 1].kind != LayerKind::kBatchNorm) {
      throw ShapeError(layer_label(spec, i) + " must be followed by batch_norm");
    }
    if (l.prunable && l.kind == LayerKind::kDepthwiseConv) {
      throw ShapeError(layer_label(spec, i) +
                       ": depthwise layers follow their producer's channels "
                       "and cannot be pruned on their own");
    }
    if (l.bias) {
      throw ShapeError(layer_label(spec, i) +
                       ": only the classifier carries a bias");
    }
  }
  if (prunable_layer_indices(spec).empty()) {
    throw ShapeError("network has no prunable layer");
  }
  (void)shapes;
}

std::vector<int> prunable_layer_indices(const NetworkSpec& spec) {
  std::vector<int> idx;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].prunable) idx.push_back(static_cast<int>(i));
  }
  return idx;
}

NetworkSpec micro_cnn(const Shape& input_shape, int64_t class_count,
                      int64_t width) {
  NetworkSpec spec;
  spec.name = "micro-cnn";
  spec.input_shape = input_shape;
  spec.class_count = class_count;
  for (int stage = 0; stage < 3; ++stage) {
    spec.layers.push_back(LayerSpec::conv(width, 3, 1, 1));
    spec.layers.push_back(LayerSpec::batch_norm());
    spec.layers.push_back(LayerSpec::relu());
    spec.layers.push_back(LayerSpec::max_pool());
  }
  spec.layers.push_back(LayerSpec::global_avg_pool());
  spec.layers.push_back(LayerSpec::fc(class_count, false, true));
  validate(spec);
  return spec;
}

NetworkSpec micro_mobilenet(const Shape& input_shape, int64_t class_count,
                            const std::vector<int64_t>& widths) {
  if (widths.size() < 2) {
    throw ShapeError("micro_mobilenet needs a stem width and >= 1 block width");
  }
  NetworkSpec spec;
  spec.name = "micro-mobilenet";
  spec.input_shape = input_shape;
  spec.class_count = class_count;
  spec.layers.push_back(LayerSpec::conv(widths[0], 3, 1, 1));
  spec.layers.push_back(LayerSpec::batch_norm());
  spec.layers.push_back(LayerSpec::relu());
  spec.layers.push_back(LayerSpec::max_pool());
  for (size_t b = 1; b < widths.size(); ++b) {
    spec.layers.push_back(LayerSpec::depthwise(3, 1, 1));
    spec.layers.push_back(LayerSpec::batch_norm());
    spec.layers.push_back(LayerSpec::relu());
    spec.layers.push_back(LayerSpec::conv(widths[b], 1, 1, 0));
    spec.layers.push_back(LayerSpec::batch_norm());
    spec.layers.push_back(LayerSpec::relu());
    if (b == 1) spec.layers.push_back(LayerSpec::max_pool());
  }
  spec.layers.push_back(LayerSpec::global_avg_pool());
  spec.layers.push_back(LayerSpec::fc(class_count, false, true));
  validate(spec);
  return spec;
}

template <typename T>
template <typename U>
ParamStore<U> ParamStore<T>::cast() const {
  ParamStore<U> out;
  out.layers.resize(layers.size());
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerParams<T>& src = layers[i];
    LayerParams<U>& dst = out.layers[i];
    dst.weight = src.weight.template cast<U>();
    dst.bias = src.bias.template cast<U>();
    if (src.bn) {
      BNState<U> bn;
      bn.gamma.assign(src.bn->gamma.begin(), src.bn->gamma.end());
      bn.beta.assign(src.bn->beta.begin(), src.bn->beta.end());
      bn.moving_mean.assign(src.bn->moving_mean.begin(),
                            src.bn->moving_mean.end());
      bn.moving_var.assign(src.bn->moving_var.begin(),
                           src.bn->moving_var.end());
      bn.epsilon = static_cast<U>(src.bn->epsilon);
      bn.momentum = static_cast<U>(src.bn->momentum);
      bn.mode = src.bn->mode;
      bn.update = src.bn->update;
      bn.updates_since_reset = src.bn->updates_since_reset;
      dst.bn = std::move(bn);
    }
  }
  return out;
}

template <typename T>
ParamStore<T> init_params(const NetworkSpec& spec, uint64_t seed) {
  validate(spec);
  const std::vector<Shape> shapes = infer_shapes(spec);
  std::mt19937_64 rng(seed);
  ParamStore<T> params;
  params.layers.resize(spec.layers.size());
  Shape in = spec.input_shape;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    LayerParams<T>& p = params.layers[i];
    if (l.has_weight()) {
      p.weight = Tensor<T>(weight_shape(l, in));
      // The classifier starts at zero: fresh logits are uniform.
      if (i + 1 < spec.layers.size()) {
        const double bound =
            std::sqrt(6.0 / static_cast<double>(fan_in(l, in)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (T& w : p.weight.values()) w = static_cast<T>(dist(rng));
      }
      if (l.bias) p.bias = Tensor<T>({l.units});
    } else if (l.kind == LayerKind::kBatchNorm) {
      BNState<T> bn = BNState<T>::identity(in[0]);
      bn.epsilon = static_cast<T>(l.bn_epsilon);
      bn.momentum = static_cast<T>(l.bn_momentum);
      p.bn = std::move(bn);
    }
    in = shapes[i];
  }
  return params;
}

template <typename T>
void check_params(const NetworkSpec& spec, const ParamStore<T>& params) {
  const std::vector<Shape> shapes = infer_shapes(spec);
  if (params.size() != spec.layers.size()) {
    throw ShapeError("parameter store has " + std::to_string(params.size()) +
                     " layers, spec has " + std::to_string(spec.layers.size()));
  }
  Shape in = spec.input_shape;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const LayerParams<T>& p = params[i];
    const Shape expect_w = weight_shape(l, in);
    if (p.weight.shape() != expect_w) {
      throw ShapeError(layer_label(spec, i) + ": weight " +
                       shape_string(p.weight.shape()) + ", expected " +
                       shape_string(expect_w));
    }
    const Shape expect_b = l.bias ? Shape{l.units} : Shape{};
    if (p.bias.shape() != expect_b) {
      throw ShapeError(layer_label(spec, i) + ": bias " +
                       shape_string(p.bias.shape()) + ", expected " +
                       shape_string(expect_b));
    }
    if ((l.kind == LayerKind::kBatchNorm) != p.bn.has_value()) {
      throw ShapeError(layer_label(spec, i) + ": batch-norm state mismatch");
    }
    if (p.bn) {
      const auto c = static_cast<size_t>(in[0]);
      if (p.bn->gamma.size() != c || p.bn->beta.size() != c ||
          p.bn->moving_mean.size() != c || p.bn->moving_var.size() != c) {
        throw ShapeError(layer_label(spec, i) + ": BN state length does not "
                         "match " + std::to_string(c) + " channels");
      }
    }
    in = shapes[i];
  }
}

template <typename T>
int64_t count_parameters(const ParamStore<T>& params) {
  int64_t n = 0;
  for (const auto& p : params.layers) {
    n += p.weight.size() + p.bias.size();
    if (p.bn) n += 2 * p.bn->channels();
  }
  return n;
}

template <typename T>
void set_bn_mode(ParamStore<T>& params, BNMode mode) {
  for (auto& p : params.layers) {
    if (p.bn) p.bn->mode = mode;
  }
}

template <typename T>
Tensor<T> forward(const NetworkSpec& spec, ParamStore<T>& params,
                  const Tensor<T>& input, BNMode mode,
                  ForwardTrace<T>* trace) {
  if (trace && mode != BNMode::kTrain) {
    throw ModeError(std::string("gradients are only available in train mode, "
                                "forward requested in ") +
                    to_string(mode) + " mode");
  }
  if (params.size() != spec.layers.size()) {
    throw ShapeError("parameter store does not match the network spec");
  }
  if (input.rank() != 4 ||
      Shape(input.shape().begin() + 1, input.shape().end()) != spec.input_shape) {
    throw ShapeError("network input " + shape_string(input.shape()) +
                     " does not match [N]" + shape_string(spec.input_shape));
  }
  set_bn_mode(params, mode);
  const size_t layers = spec.layers.size();
  if (trace) {
    trace->inputs.assign(layers + 1, Tensor<T>());
    trace->bn.assign(layers, BNCache<T>());
    trace->pool_argmax.assign(layers, {});
  }
  Tensor<T> cur = input;
  for (size_t i = 0; i < layers; ++i) {
    const LayerSpec& l = spec.layers[i];
    LayerParams<T>& p = params[i];
    Tensor<T> next;
    try {
      switch (l.kind) {
        case LayerKind::kConv:
          next = conv2d_forward(cur, p.weight, l.geometry());
          break;
        case LayerKind::kDepthwiseConv:
          next = depthwise_conv2d_forward(cur, p.weight, l.geometry());
          break;
        case LayerKind::kFC:
          next = fc_forward(cur, p.weight, p.bias);
          break;
        case LayerKind::kReLU:
          next = relu_forward(cur);
          break;
        case LayerKind::kMaxPool:
          next = maxpool2x2_forward(cur, trace ? &trace->pool_argmax[i] : nullptr);
          break;
        case LayerKind::kGlobalAvgPool:
          next = global_avgpool_forward(cur);
          break;
        case LayerKind::kBatchNorm:
          next = bn_forward(*p.bn, cur, trace ? &trace->bn[i] : nullptr);
          break;
      }
    } catch (const NumericError& e) {
      throw NumericError(layer_label(spec, i) + ": " + e.what());
    }
    if (trace) trace->inputs[i] = std::move(cur);
    cur = std::move(next);
  }
  if (trace) trace->inputs[layers] = cur;
  return cur;
}

template <typename T>
Tensor<T> infer(const NetworkSpec& spec, const ParamStore<T>& params,
                const Tensor<T>& input) {
  if (params.size() != spec.layers.size()) {
    throw ShapeError("parameter store does not match the network spec");
  }
  if (input.rank() != 4 ||
      Shape(input.shape().begin() + 1, input.shape().end()) != spec.input_shape) {
    throw ShapeError("network input " + shape_string(input.shape()) +
                     " does not match [N]" + shape_string(spec.input_shape));
  }
  Tensor<T> cur = input;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const LayerParams<T>& p = params[i];
    switch (l.kind) {
      case LayerKind::kConv:
        cur = conv2d_forward(cur, p.weight, l.geometry());
        break;
      case LayerKind::kDepthwiseConv:
        cur = depthwise_conv2d_forward(cur, p.weight, l.geometry());
        break;
      case LayerKind::kFC:
        cur = fc_forward(cur, p.weight, p.bias);
        break;
      case LayerKind::kReLU:
        cur = relu_forward(cur);
        break;
      case LayerKind::kMaxPool:
        cur = maxpool2x2_forward(cur, nullptr);
        break;
      case LayerKind::kGlobalAvgPool:
        cur = global_avgpool_forward(cur);
        break;
      case LayerKind::kBatchNorm:
        cur = bn_forward(*p.bn, cur);
        break;
    }
  }
  return cur;
}

template <typename T>
Gradients<T> backward(const NetworkSpec& spec, const ParamStore<T>& params,
                      const ForwardTrace<T>& trace,
                      const Tensor<T>& grad_logits) {
  const size_t layers = spec.layers.size();
  if (trace.inputs.size() != layers + 1) {
    throw ModeError("backward needs the trace of a train-mode forward");
  }
  if (grad_logits.shape() != trace.inputs[layers].shape()) {
    throw ShapeError("grad_logits " + shape_string(grad_logits.shape()) +
                     " does not match logits " +
                     shape_string(trace.inputs[layers].shape()));
  }
  Gradients<T> grads(layers);
  Tensor<T> g = grad_logits;
  for (size_t r = layers; r-- > 0;) {
    const LayerSpec& l = spec.layers[r];
    const LayerParams<T>& p = params[r];
    const Tensor<T>& in = trace.inputs[r];
    try {
      switch (l.kind) {
        case LayerKind::kConv: {
          ConvGrads<T> cg = conv2d_backward(g, in, p.weight, l.geometry());
          grads[r].weight = std::move(cg.weight);
          g = std::move(cg.input);
          break;
        }
        case LayerKind::kDepthwiseConv: {
          ConvGrads<T> cg =
              depthwise_conv2d_backward(g, in, p.weight, l.geometry());
          grads[r].weight = std::move(cg.weight);
          g = std::move(cg.input);
          break;
        }
        case LayerKind::kFC: {
          FcGrads<T> fg = fc_backward(g, in, p.weight, !p.bias.empty());
          grads[r].weight = std::move(fg.weight);
          grads[r].bias = std::move(fg.bias);
          g = std::move(fg.input);
          break;
        }
        case LayerKind::kReLU:
          g = relu_backward(g, in);
          break;
        case LayerKind::kMaxPool:
          g = maxpool2x2_backward(g, trace.pool_argmax[r], in.shape());
          break;
        case LayerKind::kGlobalAvgPool:
          g = global_avgpool_backward(g, in.shape());
          break;
        case LayerKind::kBatchNorm: {
          BNGrads<T> bg = bn_backward(*p.bn, g, trace.bn[r]);
          grads[r].gamma = std::move(bg.gamma);
          grads[r].beta = std::move(bg.beta);
          g = std::move(bg.input);
          break;
        }
      }
    } catch (const NumericError& e) {
      throw NumericError(layer_label(spec, r) + " backward: " + e.what());
    }
  }
  return grads;
}

template <typename T>
int first_nonfinite_layer(const ForwardTrace<T>& trace) {
  for (size_t i = 1; i < trace.inputs.size(); ++i) {
    if (!trace.inputs[i].all_finite()) return static_cast<int>(i) - 1;
  }
  return -1;
}

FlopsReport count_flops(const NetworkSpec& spec) {
  const std::vector<Shape> shapes = infer_shapes(spec);
  FlopsReport r;
  r.per_layer.assign(spec.layers.size(), 0);
  Shape in = spec.input_shape;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const Shape& out = shapes[i];
    switch (l.kind) {
      case LayerKind::kConv:
        r.per_layer[i] = out[0] * in[0] * l.kernel * l.kernel * out[1] * out[2];
        break;
      case LayerKind::kDepthwiseConv:
        r.per_layer[i] = out[0] * l.kernel * l.kernel * out[1] * out[2];
        break;
      case LayerKind::kFC:
        r.per_layer[i] = shape_elements(in) * l.units;
        break;
      default:
        break;
    }
    r.total += r.per_layer[i];
    in = out;
  }
  return r;
}

template <typename T>
std::vector<int64_t> weight_histogram(const ParamStore<T>& params,
                                      size_t layer_index,
                                      const std::vector<double>& bin_edges) {
  if (layer_index >= params.size() || params[layer_index].weight.empty()) {
    throw ShapeError("layer " + std::to_string(layer_index) +
                     " has no weights to histogram");
  }
  if (bin_edges.size() < 2) throw ShapeError("histogram needs >= 2 bin edges");
  for (size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i] > bin_edges[i - 1])) {
      throw ShapeError("histogram bin edges must be strictly increasing");
    }
  }
  std::vector<int64_t> counts(bin_edges.size() - 1, 0);
  for (T w : params[layer_index].weight.values()) {
    const double v = std::abs(static_cast<double>(w));
    auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), v);
    if (it == bin_edges.begin() || it == bin_edges.end()) continue;
    counts[static_cast<size_t>(it - bin_edges.begin() - 1)] += 1;
  }
  return counts;
}

#define RECALPRUNE_INSTANTIATE_NET(T)                                              \
  template ParamStore<T> init_params(const NetworkSpec&, uint64_t);           \
  template void check_params(const NetworkSpec&, const ParamStore<T>&);       \
  template int64_t count_parameters(const ParamStore<T>&);                    \
  template void set_bn_mode(ParamStore<T>&, BNMode);                          \
  template Tensor<T> forward(const NetworkSpec&, ParamStore<T>&,              \
                             const Tensor<T>&, BNMode, ForwardTrace<T>*);     \
  template Tensor<T> infer(const NetworkSpec&, const ParamStore<T>&,          \
                           const Tensor<T>&);                                 \
  template Gradients<T> backward(const NetworkSpec&, const ParamStore<T>&,    \
                                 const ForwardTrace<T>&, const Tensor<T>&);   \
  template int first_nonfinite_layer(const ForwardTrace<T>&);                 \
  template std::vector<int64_t> weight_histogram(                             \
      const ParamStore<T>&, size_t, const std::vector<double>&);

RECALPRUNE_INSTANTIATE_NET(float)
RECALPRUNE_INSTANTIATE_NET(double)
template ParamStore<double> ParamStore<float>::cast<double>() const;
template ParamStore<float> ParamStore<double>::cast<float>() const;
template ParamStore<float> ParamStore<float>::cast<float>() const;
template ParamStore<double> ParamStore<double>::cast<double>() const;

}  // namespace recalprune
