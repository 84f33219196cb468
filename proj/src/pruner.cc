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

#include "recalprune/pruner.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "recalprune/errors.h"

namespace recalprune {
namespace {

void check_ratio_count(const NetworkSpec& spec,
                       const std::vector<double>& ratios) {
  const size_t expected = prunable_layer_indices(spec).size();
  if (ratios.size() != expected) {
    throw PruningError("strategy has " + std::to_string(ratios.size()) +
                       " ratios, network has " + std::to_string(expected) +
                       " prunable layers");
  }
}

// Gathers `indices` along `axis` of a row-major tensor.
template <typename T>
Tensor<T> take(const Tensor<T>& t, size_t axis,
               const std::vector<int64_t>& indices) {
  const Shape& s = t.shape();
  int64_t outer = 1, inner = 1;
  for (size_t a = 0; a < axis; ++a) outer *= s[a];
  for (size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  const int64_t extent = s[axis];
  Shape out_shape = s;
  out_shape[axis] = static_cast<int64_t>(indices.size());
  Tensor<T> out(out_shape);
  T* dst = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t idx : indices) {
      const T* src = t.data() + (o * extent + idx) * inner;
      dst = std::copy_n(src, inner, dst);
    }
  }
  return out;
}

template <typename T>
std::vector<T> take(const std::vector<T>& v,
                    const std::vector<int64_t>& indices) {
  std::vector<T> out;
  out.reserve(indices.size());
  for (int64_t i : indices) out.push_back(v[static_cast<size_t>(i)]);
  return out;
}

std::vector<int64_t> all_indices(int64_t n) {
  std::vector<int64_t> v(static_cast<size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

const char* to_string(Criterion c) {
  return c == Criterion::kL1Norm ? "l1" : "l2";
}

Criterion criterion_from_string(const std::string& name) {
  if (name == "l1") return Criterion::kL1Norm;
  if (name == "l2") return Criterion::kL2Norm;
  throw ConfigError("unknown pruning criterion '" + name +
                    "' (expected l1 or l2)");
}

int64_t filters_to_remove(int64_t channels, double ratio) {
  if (!(ratio >= 0.0)) {
    throw PruningError("pruning ratio " + std::to_string(ratio) +
                       " is negative");
  }
  if (ratio >= 1.0) {
    throw PruningError("pruning ratio " + std::to_string(ratio) +
                       " would empty a layer of " + std::to_string(channels) +
                       " filters");
  }
  const auto k = static_cast<int64_t>(
      std::floor(ratio * static_cast<double>(channels)));
  return std::min(k, channels - 1);
}

template <typename T>
std::vector<double> filter_norms(const NetworkSpec& spec,
                                 const ParamStore<T>& params, int layer_index,
                                 Criterion criterion) {
  if (layer_index < 0 ||
      static_cast<size_t>(layer_index) >= spec.layers.size() ||
      !spec.layers[static_cast<size_t>(layer_index)].prunable) {
    throw PruningError("layer " + std::to_string(layer_index) +
                       " is not prunable");
  }
  const Tensor<T>& w = params[static_cast<size_t>(layer_index)].weight;
  const int64_t filters = w.dim(0);
  const int64_t per = filters ? w.size() / filters : 0;
  std::vector<double> norms(static_cast<size_t>(filters), 0.0);
  for (int64_t f = 0; f < filters; ++f) {
    double acc = 0;
    for (int64_t j = 0; j < per; ++j) {
      const double v = static_cast<double>(w[f * per + j]);
      acc += criterion == Criterion::kL1Norm ? std::abs(v) : v * v;
    }
    norms[static_cast<size_t>(f)] =
        criterion == Criterion::kL1Norm ? acc : std::sqrt(acc);
  }
  return norms;
}

template <typename T>
std::vector<int64_t> rank_filters(const NetworkSpec& spec,
                                  const ParamStore<T>& params, int layer_index,
                                  Criterion criterion) {
  const std::vector<double> norms =
      filter_norms(spec, params, layer_index, criterion);
  std::vector<int64_t> order = all_indices(static_cast<int64_t>(norms.size()));
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return norms[static_cast<size_t>(a)] < norms[static_cast<size_t>(b)];
  });
  return order;
}

NetworkSpec pruned_spec(const NetworkSpec& spec,
                        const std::vector<double>& ratios) {
  validate(spec);
  check_ratio_count(spec, ratios);
  NetworkSpec out = spec;
  size_t r = 0;
  for (LayerSpec& l : out.layers) {
    if (!l.prunable) continue;
    l.units -= filters_to_remove(l.units, ratios[r++]);
  }
  return out;
}

template <typename T>
PrunedModel<T> apply_strategy(const NetworkSpec& spec,
                              const ParamStore<T>& params,
                              const PruningStrategy& strategy,
                              Criterion criterion) {
  validate(spec);
  check_params(spec, params);
  check_ratio_count(spec, strategy.ratios);
  const std::vector<Shape> shapes = infer_shapes(spec);

  PrunedModel<T> out;
  out.spec = spec;
  out.params.layers.resize(params.size());
  out.kept.resize(spec.layers.size());
  Shape in = spec.input_shape;
  std::vector<int64_t> cur = all_indices(in[0]);
  size_t ratio_index = 0;

  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const LayerParams<T>& src = params[i];
    LayerParams<T>& dst = out.params[i];
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kFC: {
        std::vector<int64_t> inputs = cur;
        if (l.kind == LayerKind::kFC && in.size() == 3) {
          // Flattened spatial input: channel c owns features
          // [c*H*W, (c+1)*H*W).
          const int64_t plane = in[1] * in[2];
          inputs.clear();
          for (int64_t c : cur) {
            for (int64_t j = 0; j < plane; ++j) inputs.push_back(c * plane + j);
          }
        }
        Tensor<T> w = take(src.weight, 1, inputs);
        std::vector<int64_t> outputs = all_indices(l.units);
        if (l.prunable) {
          const int64_t remove =
              filters_to_remove(l.units, strategy.ratios[ratio_index++]);
          std::vector<int64_t> order =
              rank_filters(spec, params, static_cast<int>(i), criterion);
          outputs.assign(order.begin() + remove, order.end());
          std::sort(outputs.begin(), outputs.end());
        }
        dst.weight = take(w, 0, outputs);
        if (!src.bias.empty()) dst.bias = take(src.bias, 0, outputs);
        out.spec.layers[i].units = static_cast<int64_t>(outputs.size());
        cur = std::move(outputs);
        out.kept[i] = cur;
        break;
      }
      case LayerKind::kDepthwiseConv:
        dst.weight = take(src.weight, 0, cur);
        out.coupled_layers.push_back(static_cast<int>(i));
        out.kept[i] = cur;
        break;
      case LayerKind::kBatchNorm: {
        BNState<T> bn = *src.bn;
        bn.gamma = take(src.bn->gamma, cur);
        bn.beta = take(src.bn->beta, cur);
        bn.moving_mean = take(src.bn->moving_mean, cur);
        bn.moving_var = take(src.bn->moving_var, cur);
        dst.bn = std::move(bn);
        out.kept[i] = cur;
        break;
      }
      case LayerKind::kReLU:
      case LayerKind::kMaxPool:
      case LayerKind::kGlobalAvgPool:
        break;
    }
    in = shapes[i];
  }
  check_params(out.spec, out.params);
  return out;
}

double strategy_flops_ratio(const NetworkSpec& spec,
                            const std::vector<double>& ratios) {
  const int64_t full = count_flops(spec).total;
  const int64_t pruned = count_flops(pruned_spec(spec, ratios)).total;
  return static_cast<double>(pruned) / static_cast<double>(full);
}

#define RECALPRUNE_INSTANTIATE_PRUNER(T)                                           \
  template std::vector<double> filter_norms(const NetworkSpec&,               \
                                            const ParamStore<T>&, int,        \
                                            Criterion);                       \
  template std::vector<int64_t> rank_filters(const NetworkSpec&,              \
                                             const ParamStore<T>&, int,       \
                                             Criterion);                      \
  template PrunedModel<T> apply_strategy(const NetworkSpec&,                  \
                                         const ParamStore<T>&,                \
                                         const PruningStrategy&, Criterion);

RECALPRUNE_INSTANTIATE_PRUNER(float)
RECALPRUNE_INSTANTIATE_PRUNER(double)

}  // namespace recalprune
