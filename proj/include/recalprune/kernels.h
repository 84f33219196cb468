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

#ifndef RECALPRUNE_KERNELS_H_
#define RECALPRUNE_KERNELS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "recalprune/tensor.h"

namespace recalprune {

struct ConvGeometry {
  int64_t stride = 1;
  int64_t padding = 0;
};

// Output extent of a convolution/pooling window; throws ShapeError when the
// window does not tile the padded input.
int64_t conv_output_extent(int64_t in, int64_t kernel, ConvGeometry geom);

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
};

template <typename T>
struct FcGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;  // empty when the layer has no bias
};

template <typename T>
struct LossAndGrad {
  T loss = 0;
  Tensor<T> grad;  // d(mean loss)/d(logits)
};

// Cross-correlation (no kernel flip), bias-free.
// input [N,C_in,H,W], weight [C_out,C_in,K,K] -> [N,C_out,H',W'].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight,
                         ConvGeometry geom);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                             const Tensor<T>& weight, ConvGeometry geom);

// Channel-wise convolution: weight [C,1,K,K].
template <typename T>
Tensor<T> depthwise_conv2d_forward(const Tensor<T>& input,
                                   const Tensor<T>& weight, ConvGeometry geom);

template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const Tensor<T>& grad_out,
                                       const Tensor<T>& input,
                                       const Tensor<T>& weight,
                                       ConvGeometry geom);

// input [N, F] (or any rank, flattened after the batch axis), weight [O, F],
// bias [O] or empty -> [N, O].
template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weight,
                     const Tensor<T>& bias);

template <typename T>
FcGrads<T> fc_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                       const Tensor<T>& weight, bool has_bias);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& input);

// 2x2 window, stride 2, floor semantics for odd extents. `argmax` receives the
// flat input index chosen for every output element.
template <typename T>
Tensor<T> maxpool2x2_forward(const Tensor<T>& input,
                             std::vector<int64_t>* argmax);

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& grad_out,
                              std::span<const int64_t> argmax,
                              const Shape& input_shape);

// [N,C,H,W] -> [N,C]
template <typename T>
Tensor<T> global_avgpool_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> global_avgpool_backward(const Tensor<T>& grad_out,
                                  const Shape& input_shape);

// Mean softmax cross-entropy over the batch. logits [N,K].
template <typename T>
LossAndGrad<T> softmax_cross_entropy(const Tensor<T>& logits,
                                     std::span<const int32_t> labels);

}  // namespace recalprune

#endif  // RECALPRUNE_KERNELS_H_
