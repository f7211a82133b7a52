// Copyright 2026 The vapnev Authors. All Rights Reserved.
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

#ifndef VAPNEV_OPS_HPP_
#define VAPNEV_OPS_HPP_

#include <cstddef>
#include <vector>

#include "vapnev/autodiff.hpp"
#include "vapnev/tensor.hpp"

namespace vapnev {

// Binary elementwise ops accept equal shapes, or one operand whose shape is a
// trailing suffix of the other's (e.g. a per-channel [C] vector against an
// NHWC tensor). The result always has the larger operand's shape.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> add_scalar(const Var<T>& a, T s);
template <typename T> Var<T> mul_scalar(const Var<T>& a, T s);
template <typename T> Var<T> neg(const Var<T>& a);
template <typename T> Var<T> square(const Var<T>& a);
// DomainError if any result overflows.
template <typename T> Var<T> exp(const Var<T>& a);
// DomainError on non-positive input.
template <typename T> Var<T> log(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> tanh(const Var<T>& a);
template <typename T> Var<T> leaky_relu(const Var<T>& a, T slope);
// Gradient passes where lo <= a <= hi, zero elsewhere.
template <typename T> Var<T> clamp(const Var<T>& a, T lo, T hi);

// Reductions.
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
// [N, ...] -> [N]
template <typename T> Var<T> sum_per_sample(const Var<T>& a);

template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);

// [m,k] x [k,n] -> [m,n]
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

enum class Padding { kValid, kSame };

// Spatial geometry of a 2-D cross-correlation over NHWC input. "Same" padding
// is zero padding split symmetrically, with the odd extra pixel placed at the
// bottom/right; output extent is ceil(in / stride).
struct ConvGeometry {
  std::size_t batch = 0, in_h = 0, in_w = 0, in_c = 0;
  std::size_t out_h = 0, out_w = 0, out_c = 0;
  std::size_t kernel_h = 0, kernel_w = 0, stride = 1;
  std::size_t pad_top = 0, pad_left = 0;

  static ConvGeometry make(std::size_t batch, std::size_t in_h, std::size_t in_w,
                           std::size_t in_c, std::size_t kernel_h,
                           std::size_t kernel_w, std::size_t out_c,
                           std::size_t stride, Padding padding);
};

// input [N,H,W,C], kernel [kh,kw,C,F] -> [N,oh,ow,F]
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, std::size_t stride,
              Padding padding);

// Transposed convolution, the adjoint of conv2d with the same kernel:
// input [N,h,w,F], kernel [kh,kw,C,F] -> [N,H,W,C] where conv2d over
// [N,H,W,C] with (stride, padding) yields [N,h,w,F]. Valid padding gives
// H = (h-1)*stride + kh; same padding gives H = h*stride.
template <typename T>
Var<T> deconv2d(const Var<T>& input, const Var<T>& kernel, std::size_t stride,
                Padding padding);
template <typename T>
Var<T> deconv2d(const Var<T>& input, const Var<T>& kernel, std::size_t stride,
                Padding padding, std::size_t out_h, std::size_t out_w);

// Per-sample index maps on [N, ...] tensors.
//   gather:  out[n, j] = in[n, index[j]],  out shape [N] + sample_shape
//   scatter: out[n, index[j]] = in[n, j],  zeros elsewhere
// gather and scatter with the same index are adjoint.
template <typename T>
Var<T> gather(const Var<T>& input, const std::vector<std::size_t>& index,
              const Shape& sample_shape);
template <typename T>
Var<T> scatter(const Var<T>& input, const std::vector<std::size_t>& index,
               const Shape& sample_shape);

// Keeps the top-left [h, w] window of an NHWC tensor.
template <typename T> Var<T> crop(const Var<T>& input, std::size_t h, std::size_t w);

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a) { return neg(a); }

// Raw kernels shared by the differentiable ops and by test oracles.
namespace kernels {

template <typename T>
void matmul(const T* a, const T* b, T* out, std::size_t m, std::size_t k,
            std::size_t n, bool transpose_a, bool transpose_b, bool accumulate);

// NHWC input -> [N*oh*ow, kh*kw*C] patch matrix.
template <typename T>
void im2col(const T* input, const ConvGeometry& g, T* cols);
// Adjoint of im2col: scatter-adds patches back into an NHWC buffer, which
// must be zeroed by the caller.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* input);

}  // namespace kernels

// Number of worker threads used inside conv kernels. Defaults to the
// VAPNEV_THREADS environment variable, or 1.
std::size_t num_threads();
void set_num_threads(std::size_t n);

}  // namespace vapnev

#endif  // VAPNEV_OPS_HPP_
