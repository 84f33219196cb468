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

#include "recalprune/kernels.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

namespace recalprune {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

void expect_rank(const Shape& s, size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " +
                     std::to_string(rank) + ", got " + shape_string(s));
  }
}

void expect_same(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape " + shape_string(a) +
                     " does not match " + shape_string(b));
  }
}

struct ConvDims {
  int64_t n, c_in, h, w, c_out, k, out_h, out_w;
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& input, const Tensor<T>& weight,
                   ConvGeometry geom, bool depthwise, const char* what) {
  expect_rank(input.shape(), 4, what);
  expect_rank(weight.shape(), 4, what);
  ConvDims d{};
  d.n = input.dim(0);
  d.c_in = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.c_out = weight.dim(0);
  d.k = weight.dim(2);
  if (weight.dim(3) != d.k) {
    throw ShapeError(std::string(what) + ": non-square kernel " +
                     shape_string(weight.shape()));
  }
  if (depthwise) {
    if (weight.dim(1) != 1 || d.c_out != d.c_in) {
      throw ShapeError(std::string(what) + ": depthwise weight " +
                       shape_string(weight.shape()) + " incompatible with input " +
                       shape_string(input.shape()));
    }
  } else if (weight.dim(1) != d.c_in) {
    throw ShapeError(std::string(what) + ": weight " +
                     shape_string(weight.shape()) + " expects " +
                     std::to_string(weight.dim(1)) + " input channels, input " +
                     shape_string(input.shape()) + " has " +
                     std::to_string(d.c_in));
  }
  d.out_h = conv_output_extent(d.h, d.k, geom);
  d.out_w = conv_output_extent(d.w, d.k, geom);
  return d;
}

// Unfolds one sample [C,H,W] into a [C*K*K, OH*OW] row-major matrix.
template <typename T>
void im2col(const T* img, const ConvDims& d, ConvGeometry g, T* cols) {
  const int64_t plane = d.out_h * d.out_w;
  for (int64_t c = 0; c < d.c_in; ++c) {
    const T* chan = img + c * d.h * d.w;
    for (int64_t kh = 0; kh < d.k; ++kh) {
      for (int64_t kw = 0; kw < d.k; ++kw) {
        T* row = cols + ((c * d.k + kh) * d.k + kw) * plane;
        for (int64_t oh = 0; oh < d.out_h; ++oh) {
          const int64_t ih = oh * g.stride - g.padding + kh;
          T* dst = row + oh * d.out_w;
          if (ih < 0 || ih >= d.h) {
            std::fill(dst, dst + d.out_w, T(0));
            continue;
          }
          const T* src = chan + ih * d.w;
          for (int64_t ow = 0; ow < d.out_w; ++ow) {
            const int64_t iw = ow * g.stride - g.padding + kw;
            dst[ow] = (iw >= 0 && iw < d.w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds columns back into an image.
template <typename T>
void col2im(const T* cols, const ConvDims& d, ConvGeometry g, T* img) {
  const int64_t plane = d.out_h * d.out_w;
  for (int64_t c = 0; c < d.c_in; ++c) {
    T* chan = img + c * d.h * d.w;
    for (int64_t kh = 0; kh < d.k; ++kh) {
      for (int64_t kw = 0; kw < d.k; ++kw) {
        const T* row = cols + ((c * d.k + kh) * d.k + kw) * plane;
        for (int64_t oh = 0; oh < d.out_h; ++oh) {
          const int64_t ih = oh * g.stride - g.padding + kh;
          if (ih < 0 || ih >= d.h) continue;
          const T* src = row + oh * d.out_w;
          T* dst = chan + ih * d.w;
          for (int64_t ow = 0; ow < d.out_w; ++ow) {
            const int64_t iw = ow * g.stride - g.padding + kw;
            if (iw >= 0 && iw < d.w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvDims& d, ConvGeometry g) {
  return d.k == 1 && g.stride == 1 && g.padding == 0;
}

}  // namespace

int64_t conv_output_extent(int64_t in, int64_t kernel, ConvGeometry geom) {
  if (geom.stride <= 0 || geom.padding < 0 || kernel <= 0) {
    throw ShapeError("invalid window: kernel " + std::to_string(kernel) +
                     ", stride " + std::to_string(geom.stride) + ", padding " +
                     std::to_string(geom.padding));
  }
  const int64_t span = in + 2 * geom.padding - kernel;
  if (span < 0 || span % geom.stride != 0) {
    throw ShapeError("window (kernel " + std::to_string(kernel) + ", stride " +
                     std::to_string(geom.stride) + ", padding " +
                     std::to_string(geom.padding) +
                     ") does not tile input extent " + std::to_string(in));
  }
  return span / geom.stride + 1;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight,
                         ConvGeometry geom) {
  const ConvDims d = conv_dims(input, weight, geom, false, "conv2d_forward");
  Tensor<T> out({d.n, d.c_out, d.out_h, d.out_w});
  const int64_t plane = d.out_h * d.out_w;
  const int64_t patch = d.c_in * d.k * d.k;
  ConstMatMap<T> w(weight.data(), d.c_out, patch);
  std::vector<T> cols;
  if (!is_pointwise(d, geom)) cols.resize(static_cast<size_t>(patch * plane));
  for (int64_t n = 0; n < d.n; ++n) {
    const T* img = input.data() + n * d.c_in * d.h * d.w;
    const T* col_ptr = img;
    if (!is_pointwise(d, geom)) {
      im2col(img, d, geom, cols.data());
      col_ptr = cols.data();
    }
    MatMap<T> y(out.data() + n * d.c_out * plane, d.c_out, plane);
    y.noalias() = w * ConstMatMap<T>(col_ptr, patch, plane);
  }
  check_finite(out, "conv2d_forward");
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                             const Tensor<T>& weight, ConvGeometry geom) {
  const ConvDims d = conv_dims(input, weight, geom, false, "conv2d_backward");
  expect_same(grad_out.shape(), {d.n, d.c_out, d.out_h, d.out_w},
              "conv2d_backward grad_out");
  ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weight.shape())};
  const int64_t plane = d.out_h * d.out_w;
  const int64_t patch = d.c_in * d.k * d.k;
  ConstMatMap<T> w(weight.data(), d.c_out, patch);
  MatMap<T> gw(g.weight.data(), d.c_out, patch);
  const bool pointwise = is_pointwise(d, geom);
  std::vector<T> cols(pointwise ? 0 : static_cast<size_t>(patch * plane));
  std::vector<T> grad_cols(pointwise ? 0 : static_cast<size_t>(patch * plane));
  for (int64_t n = 0; n < d.n; ++n) {
    const T* img = input.data() + n * d.c_in * d.h * d.w;
    T* gimg = g.input.data() + n * d.c_in * d.h * d.w;
    ConstMatMap<T> go(grad_out.data() + n * d.c_out * plane, d.c_out, plane);
    if (pointwise) {
      gw.noalias() += go * ConstMatMap<T>(img, patch, plane).transpose();
      MatMap<T>(gimg, patch, plane).noalias() = w.transpose() * go;
      continue;
    }
    im2col(img, d, geom, cols.data());
    gw.noalias() += go * ConstMatMap<T>(cols.data(), patch, plane).transpose();
    MatMap<T>(grad_cols.data(), patch, plane).noalias() = w.transpose() * go;
    col2im(grad_cols.data(), d, geom, gimg);
  }
  check_finite(g.input, "conv2d_backward");
  check_finite(g.weight, "conv2d_backward");
  return g;
}

template <typename T>
Tensor<T> depthwise_conv2d_forward(const Tensor<T>& input,
                                   const Tensor<T>& weight, ConvGeometry geom) {
  const ConvDims d =
      conv_dims(input, weight, geom, true, "depthwise_conv2d_forward");
  Tensor<T> out({d.n, d.c_in, d.out_h, d.out_w});
  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t c = 0; c < d.c_in; ++c) {
      const T* chan = input.data() + (n * d.c_in + c) * d.h * d.w;
      const T* ker = weight.data() + c * d.k * d.k;
      T* dst = out.data() + (n * d.c_in + c) * d.out_h * d.out_w;
      for (int64_t oh = 0; oh < d.out_h; ++oh) {
        for (int64_t ow = 0; ow < d.out_w; ++ow) {
          T acc = 0;
          for (int64_t kh = 0; kh < d.k; ++kh) {
            const int64_t ih = oh * geom.stride - geom.padding + kh;
            if (ih < 0 || ih >= d.h) continue;
            for (int64_t kw = 0; kw < d.k; ++kw) {
              const int64_t iw = ow * geom.stride - geom.padding + kw;
              if (iw < 0 || iw >= d.w) continue;
              acc += chan[ih * d.w + iw] * ker[kh * d.k + kw];
            }
          }
          dst[oh * d.out_w + ow] = acc;
        }
      }
    }
  }
  check_finite(out, "depthwise_conv2d_forward");
  return out;
}

template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const Tensor<T>& grad_out,
                                       const Tensor<T>& input,
                                       const Tensor<T>& weight,
                                       ConvGeometry geom) {
  const ConvDims d =
      conv_dims(input, weight, geom, true, "depthwise_conv2d_backward");
  expect_same(grad_out.shape(), {d.n, d.c_in, d.out_h, d.out_w},
              "depthwise_conv2d_backward grad_out");
  ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weight.shape())};
  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t c = 0; c < d.c_in; ++c) {
      const T* chan = input.data() + (n * d.c_in + c) * d.h * d.w;
      T* gchan = g.input.data() + (n * d.c_in + c) * d.h * d.w;
      const T* ker = weight.data() + c * d.k * d.k;
      T* gker = g.weight.data() + c * d.k * d.k;
      const T* go = grad_out.data() + (n * d.c_in + c) * d.out_h * d.out_w;
      for (int64_t oh = 0; oh < d.out_h; ++oh) {
        for (int64_t ow = 0; ow < d.out_w; ++ow) {
          const T gv = go[oh * d.out_w + ow];
          for (int64_t kh = 0; kh < d.k; ++kh) {
            const int64_t ih = oh * geom.stride - geom.padding + kh;
            if (ih < 0 || ih >= d.h) continue;
            for (int64_t kw = 0; kw < d.k; ++kw) {
              const int64_t iw = ow * geom.stride - geom.padding + kw;
              if (iw < 0 || iw >= d.w) continue;
              gker[kh * d.k + kw] += gv * chan[ih * d.w + iw];
              gchan[ih * d.w + iw] += gv * ker[kh * d.k + kw];
            }
          }
        }
      }
    }
  }
  check_finite(g.input, "depthwise_conv2d_backward");
  check_finite(g.weight, "depthwise_conv2d_backward");
  return g;
}

template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weight,
                     const Tensor<T>& bias) {
  expect_rank(weight.shape(), 2, "fc_forward weight");
  if (input.rank() < 2) {
    throw ShapeError("fc_forward: input needs a batch axis, got " +
                     shape_string(input.shape()));
  }
  const int64_t n = input.dim(0);
  const int64_t features = n ? input.size() / n : 0;
  const int64_t outputs = weight.dim(0);
  if (features != weight.dim(1)) {
    throw ShapeError("fc_forward: input " + shape_string(input.shape()) +
                     " has " + std::to_string(features) +
                     " features, weight expects " +
                     std::to_string(weight.dim(1)));
  }
  if (!bias.empty() && bias.shape() != Shape{outputs}) {
    throw ShapeError("fc_forward: bias " + shape_string(bias.shape()) +
                     " does not match " + std::to_string(outputs) + " outputs");
  }
  Tensor<T> out({n, outputs});
  MatMap<T> y(out.data(), n, outputs);
  y.noalias() = ConstMatMap<T>(input.data(), n, features) *
                ConstMatMap<T>(weight.data(), outputs, features).transpose();
  if (!bias.empty()) {
    y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(
        bias.data(), outputs);
  }
  check_finite(out, "fc_forward");
  return out;
}

template <typename T>
FcGrads<T> fc_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                       const Tensor<T>& weight, bool has_bias) {
  expect_rank(weight.shape(), 2, "fc_backward weight");
  const int64_t n = input.dim(0);
  const int64_t features = weight.dim(1);
  const int64_t outputs = weight.dim(0);
  if (input.size() != n * features) {
    throw ShapeError("fc_backward: input " + shape_string(input.shape()) +
                     " incompatible with weight " + shape_string(weight.shape()));
  }
  expect_same(grad_out.shape(), {n, outputs}, "fc_backward grad_out");
  FcGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weight.shape()),
               has_bias ? Tensor<T>({outputs}) : Tensor<T>()};
  ConstMatMap<T> go(grad_out.data(), n, outputs);
  MatMap<T>(g.weight.data(), outputs, features).noalias() =
      go.transpose() * ConstMatMap<T>(input.data(), n, features);
  MatMap<T>(g.input.data(), n, features).noalias() =
      go * ConstMatMap<T>(weight.data(), outputs, features);
  if (has_bias) {
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.bias.data(), outputs) =
        go.colwise().sum();
  }
  check_finite(g.input, "fc_backward");
  check_finite(g.weight, "fc_backward");
  return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (int64_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] < T(0) ? T(0) : input[i];  // NaN propagates
  }
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& input) {
  expect_same(grad_out.shape(), input.shape(), "relu_backward");
  Tensor<T> g(input.shape());
  for (int64_t i = 0; i < input.size(); ++i) {
    g[i] = input[i] > T(0) ? grad_out[i] : T(0);
  }
  return g;
}

template <typename T>
Tensor<T> maxpool2x2_forward(const Tensor<T>& input,
                             std::vector<int64_t>* argmax) {
  expect_rank(input.shape(), 4, "maxpool2x2_forward");
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2),
                w = input.dim(3);
  const int64_t oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) {
    throw ShapeError("maxpool2x2_forward: input " +
                     shape_string(input.shape()) + " too small");
  }
  Tensor<T> out({n, c, oh, ow});
  if (argmax) argmax->assign(static_cast<size_t>(out.size()), 0);
  int64_t o = 0;
  for (int64_t plane = 0; plane < n * c; ++plane) {
    const int64_t base = plane * h * w;
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t x = 0; x < ow; ++x, ++o) {
        int64_t best = base + (2 * y) * w + 2 * x;
        for (int64_t dy = 0; dy < 2; ++dy) {
          for (int64_t dx = 0; dx < 2; ++dx) {
            const int64_t idx = base + (2 * y + dy) * w + 2 * x + dx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        out[o] = input[best];
        if (argmax) (*argmax)[static_cast<size_t>(o)] = best;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& grad_out,
                              std::span<const int64_t> argmax,
                              const Shape& input_shape) {
  if (static_cast<int64_t>(argmax.size()) != grad_out.size()) {
    throw ShapeError("maxpool2x2_backward: argmax length " +
                     std::to_string(argmax.size()) + " does not match grad " +
                     shape_string(grad_out.shape()));
  }
  Tensor<T> g(input_shape);
  for (int64_t i = 0; i < grad_out.size(); ++i) {
    g[argmax[static_cast<size_t>(i)]] += grad_out[i];
  }
  return g;
}

template <typename T>
Tensor<T> global_avgpool_forward(const Tensor<T>& input) {
  expect_rank(input.shape(), 4, "global_avgpool_forward");
  const int64_t n = input.dim(0), c = input.dim(1),
                plane = input.dim(2) * input.dim(3);
  Tensor<T> out({n, c});
  for (int64_t i = 0; i < n * c; ++i) {
    T acc = 0;
    const T* src = input.data() + i * plane;
    for (int64_t j = 0; j < plane; ++j) acc += src[j];
    out[i] = acc / static_cast<T>(plane);
  }
  return out;
}

template <typename T>
Tensor<T> global_avgpool_backward(const Tensor<T>& grad_out,
                                  const Shape& input_shape) {
  expect_rank(input_shape, 4, "global_avgpool_backward");
  expect_same(grad_out.shape(), {input_shape[0], input_shape[1]},
              "global_avgpool_backward grad_out");
  const int64_t plane = input_shape[2] * input_shape[3];
  Tensor<T> g(input_shape);
  for (int64_t i = 0; i < grad_out.size(); ++i) {
    const T v = grad_out[i] / static_cast<T>(plane);
    std::fill(g.data() + i * plane, g.data() + (i + 1) * plane, v);
  }
  return g;
}

template <typename T>
LossAndGrad<T> softmax_cross_entropy(const Tensor<T>& logits,
                                     std::span<const int32_t> labels) {
  expect_rank(logits.shape(), 2, "softmax_cross_entropy");
  const int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(n));
  }
  LossAndGrad<T> r{T(0), Tensor<T>(logits.shape())};
  for (int64_t i = 0; i < n; ++i) {
    const int32_t label = labels[static_cast<size_t>(i)];
    if (label < 0 || label >= k) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) +
                       " outside [0, " + std::to_string(k) + ")");
    }
    const T* row = logits.data() + i * k;
    T* grow = r.grad.data() + i * k;
    const T peak = *std::max_element(row, row + k);
    T total = 0;
    for (int64_t j = 0; j < k; ++j) {
      grow[j] = std::exp(row[j] - peak);
      total += grow[j];
    }
    r.loss += std::log(total) - (row[label] - peak);
    for (int64_t j = 0; j < k; ++j) {
      grow[j] = grow[j] / total / static_cast<T>(n);
    }
    grow[label] -= T(1) / static_cast<T>(n);
  }
  r.loss /= static_cast<T>(n);
  return r;
}

#define RECALPRUNE_INSTANTIATE_KERNELS(T)                                          \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&,       \
                                    ConvGeometry);                            \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&,   \
                                        const Tensor<T>&, ConvGeometry);      \
  template Tensor<T> depthwise_conv2d_forward(const Tensor<T>&,               \
                                              const Tensor<T>&, ConvGeometry); \
  template ConvGrads<T> depthwise_conv2d_backward(                            \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvGeometry);    \
  template Tensor<T> fc_forward(const Tensor<T>&, const Tensor<T>&,           \
                                const Tensor<T>&);                            \
  template FcGrads<T> fc_backward(const Tensor<T>&, const Tensor<T>&,         \
                                  const Tensor<T>&, bool);                    \
  template Tensor<T> relu_forward(const Tensor<T>&);                          \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> maxpool2x2_forward(const Tensor<T>&,                     \
                                        std::vector<int64_t>*);               \
  template Tensor<T> maxpool2x2_backward(const Tensor<T>&,                    \
                                         std::span<const int64_t>,            \
                                         const Shape&);                       \
  template Tensor<T> global_avgpool_forward(const Tensor<T>&);                \
  template Tensor<T> global_avgpool_backward(const Tensor<T>&, const Shape&); \
  template LossAndGrad<T> softmax_cross_entropy(const Tensor<T>&,             \
                                                std::span<const int32_t>);

RECALPRUNE_INSTANTIATE_KERNELS(float)
RECALPRUNE_INSTANTIATE_KERNELS(double)

}  // namespace recalprune
