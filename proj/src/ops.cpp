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

#include "vapnev/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

namespace vapnev {
namespace {

std::atomic<std::size_t>& thread_setting() {
  static std::atomic<std::size_t> threads = [] {
    const char* env = std::getenv("VAPNEV_THREADS");
    if (env == nullptr) return std::size_t{1};
    long v = std::strtol(env, nullptr, 10);
    return v > 0 ? static_cast<std::size_t>(v) : std::size_t{1};
  }();
  return threads;
}

// Runs fn(chunk) for chunk in [0, chunks) on up to num_threads() threads.
template <typename Fn>
void parallel_for(std::size_t chunks, Fn fn) {
  std::size_t workers = std::min(num_threads(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < chunks; c = next++) fn(c);
    });
  }
  for (auto& th : pool) th.join();
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename T>
Shape broadcast_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw ShapeError(std::string(op) + ": cannot broadcast " +
                   shape_string(a.shape()) + " with " + shape_string(b.shape()));
}

// da(x, y) and db(x, y) are the partial derivatives of the result w.r.t. the
// a and b elements that produced it.
template <typename T, typename F, typename Da, typename Db>
Var<T> binary_op(const Var<T>& a, const Var<T>& b, const char* name, F f,
                 Da da, Db db) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Shape shape = broadcast_shape(av, bv, name);
  const std::size_t na = av.size(), nb = bv.size();
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i % na], bv[i % nb]);
  return a.tape().record(
      std::move(out), {a, b}, [a, b, da, db](Tape<T>& tape, const Tensor<T>& g) {
        const Tensor<T>& x = a.value();
        const Tensor<T>& y = b.value();
        const std::size_t na = x.size(), nb = y.size();
        if (a.requires_grad()) {
          Tensor<T> ga(x.shape());
          for (std::size_t i = 0; i < g.size(); ++i)
            ga[i % na] += g[i] * da(x[i % na], y[i % nb]);
          tape.accumulate(a, ga);
        }
        if (b.requires_grad()) {
          Tensor<T> gb(y.shape());
          for (std::size_t i = 0; i < g.size(); ++i)
            gb[i % nb] += g[i] * db(x[i % na], y[i % nb]);
          tape.accumulate(b, gb);
        }
      });
}

// dfdx(x, y) is the derivative at input x with output y.
template <typename T, typename F, typename D>
Var<T> unary_op(const Var<T>& a, F f, D dfdx) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  std::size_t out_id = a.tape().size();
  return a.tape().record(
      std::move(out), {a}, [a, out_id, dfdx](Tape<T>& tape, const Tensor<T>& g) {
        const Tensor<T>& x = a.value();
        const Tensor<T>& y = tape.value(out_id);
        Tensor<T> ga(x.shape());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * dfdx(x[i], y[i]);
        tape.accumulate(a, ga);
      });
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

std::size_t num_threads() { return thread_setting().load(); }
void set_num_threads(std::size_t n) { thread_setting().store(n == 0 ? 1 : n); }

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary_op(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T{1}; },
      [](T, T) { return T{1}; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary_op(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T{1}; },
      [](T, T) { return T{-1}; });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary_op(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return unary_op(a, [s](T x) { return x + s; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T s) {
  return unary_op(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return mul_scalar(a, T{-1});
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return unary_op(a, [](T x) { return x * x; }, [](T x, T) { return 2 * x; });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  for (T v : a.value().data()) {
    if (!std::isfinite(std::exp(v))) {
      throw DomainError("exp: argument " + std::to_string(v) +
                        " overflows or is not finite");
    }
  }
  return unary_op(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  for (T v : a.value().data()) {
    if (!(v > T{0})) {
      throw DomainError("log: argument " + std::to_string(v) + " is not positive");
    }
  }
  return unary_op(a, [](T x) { return std::log(x); }, [](T x, T) { return 1 / x; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary_op(
      a,
      [](T x) {
        if (x >= 0) return 1 / (1 + std::exp(-x));
        T e = std::exp(x);
        return e / (1 + e);
      },
      [](T, T y) { return y * (1 - y); });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return unary_op(a, [](T x) { return std::tanh(x); },
                  [](T, T y) { return 1 - y * y; });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  return unary_op(
      a, [slope](T x) { return x > 0 ? x : slope * x; },
      [slope](T x, T) { return x > 0 ? T{1} : slope; });
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return unary_op(
      a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T{1} : T{0}; });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  Tensor<T> out = Tensor<T>::scalar(a.value().sum());
  return a.tape().record(std::move(out), {a},
                         [a](Tape<T>& tape, const Tensor<T>& g) {
                           tape.accumulate(a, Tensor<T>(a.shape(), g[0]));
                         });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return mul_scalar(sum(a), T{1} / static_cast<T>(a.value().size()));
}

template <typename T>
Var<T> sum_per_sample(const Var<T>& a) {
  const Tensor<T>& av = a.value();
  if (av.rank() == 0) throw ShapeError("sum_per_sample needs a batch axis");
  const std::size_t n = av.dim(0);
  const std::size_t per = n == 0 ? 0 : av.size() / n;
  Tensor<T> out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    T acc{0};
    for (std::size_t j = 0; j < per; ++j) acc += av[i * per + j];
    out[i] = acc;
  }
  return a.tape().record(std::move(out), {a},
                         [a, n, per](Tape<T>& tape, const Tensor<T>& g) {
                           Tensor<T> ga(a.shape());
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < per; ++j)
                               ga[i * per + j] = g[i];
                           tape.accumulate(a, ga);
                         });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a},
                         [a](Tape<T>& tape, const Tensor<T>& g) {
                           tape.accumulate(a, g.reshaped(a.shape()));
                         });
}

namespace kernels {

template <typename T>
void matmul(const T* a, const T* b, T* out, std::size_t m, std::size_t k,
            std::size_t n, bool transpose_a, bool transpose_b, bool accumulate) {
  using Map = Eigen::Map<const RowMat<T>>;
  Eigen::Map<RowMat<T>> c(out, static_cast<Eigen::Index>(m),
                          static_cast<Eigen::Index>(n));
  const auto em = static_cast<Eigen::Index>(m);
  const auto ek = static_cast<Eigen::Index>(k);
  const auto en = static_cast<Eigen::Index>(n);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      c.noalias() += lhs * rhs;
    } else {
      c.noalias() = lhs * rhs;
    }
  };
  if (!transpose_a && !transpose_b) run(Map(a, em, ek), Map(b, ek, en));
  if (!transpose_a && transpose_b) run(Map(a, em, ek), Map(b, en, ek).transpose());
  if (transpose_a && !transpose_b) run(Map(a, ek, em).transpose(), Map(b, ek, en));
  if (transpose_a && transpose_b)
    run(Map(a, ek, em).transpose(), Map(b, en, ek).transpose());
}

template <typename T>
void im2col(const T* input, const ConvGeometry& g, T* cols) {
  const std::size_t row_len = g.kernel_h * g.kernel_w * g.in_c;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        T* row = cols + ((n * g.out_h + oy) * g.out_w + ox) * row_len;
        for (std::size_t i = 0; i < g.kernel_h; ++i) {
          const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad_top);
          for (std::size_t j = 0; j < g.kernel_w; ++j) {
            const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad_left);
            T* dst = row + (i * g.kernel_w + j) * g.in_c;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) ||
                ix >= static_cast<long>(g.in_w)) {
              std::fill(dst, dst + g.in_c, T{0});
              continue;
            }
            const T* src = input + ((n * g.in_h + iy) * g.in_w + ix) * g.in_c;
            std::copy(src, src + g.in_c, dst);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* input) {
  const std::size_t row_len = g.kernel_h * g.kernel_w * g.in_c;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const T* row = cols + ((n * g.out_h + oy) * g.out_w + ox) * row_len;
        for (std::size_t i = 0; i < g.kernel_h; ++i) {
          const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad_top);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          for (std::size_t j = 0; j < g.kernel_w; ++j) {
            const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad_left);
            if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
            const T* src = row + (i * g.kernel_w + j) * g.in_c;
            T* dst = input + ((n * g.in_h + iy) * g.in_w + ix) * g.in_c;
            for (std::size_t c = 0; c < g.in_c; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

}  // namespace kernels

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(av.shape()) +
                     " x " + shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out(Shape{m, n});
  kernels::matmul(av.raw(), bv.raw(), out.raw(), m, k, n, false, false, false);
  return a.tape().record(
      std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& tape, const Tensor<T>& g) {
        if (a.requires_grad()) {
          Tensor<T> ga(Shape{m, k});
          kernels::matmul(g.raw(), b.value().raw(), ga.raw(), m, n, k, false, true, false);
          tape.accumulate(a, ga);
        }
        if (b.requires_grad()) {
          Tensor<T> gb(Shape{k, n});
          kernels::matmul(a.value().raw(), g.raw(), gb.raw(), k, m, n, true, false, false);
          tape.accumulate(b, gb);
        }
      });
}

ConvGeometry ConvGeometry::make(std::size_t batch, std::size_t in_h,
                                std::size_t in_w, std::size_t in_c,
                                std::size_t kernel_h, std::size_t kernel_w,
                                std::size_t out_c, std::size_t stride,
                                Padding padding) {
  if (stride == 0) throw ShapeError("conv: stride must be >= 1");
  if (kernel_h == 0 || kernel_w == 0) throw ShapeError("conv: empty kernel");
  ConvGeometry g;
  g.batch = batch;
  g.in_h = in_h;
  g.in_w = in_w;
  g.in_c = in_c;
  g.out_c = out_c;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  auto axis = [&](std::size_t in, std::size_t k, std::size_t& out, std::size_t& pad) {
    if (padding == Padding::kValid) {
      if (k > in) {
        throw ShapeError("conv: kernel extent " + std::to_string(k) +
                         " exceeds input extent " + std::to_string(in));
      }
      out = (in - k) / stride + 1;
      pad = 0;
      return;
    }
    if (in == 0) throw ShapeError("conv: empty input");
    out = (in + stride - 1) / stride;
    const long total = static_cast<long>((out - 1) * stride + k) - static_cast<long>(in);
    pad = total > 0 ? static_cast<std::size_t>(total) / 2 : 0;
    if (in + static_cast<std::size_t>(std::max(total, 0L)) < k) {
      throw ShapeError("conv: kernel larger than padded input");
    }
  };
  axis(in_h, kernel_h, g.out_h, g.pad_top);
  axis(in_w, kernel_w, g.out_w, g.pad_left);
  return g;
}

namespace {

// Splits the batch so every chunk's patch matrix stays around 4M entries.
std::size_t images_per_chunk(const ConvGeometry& g) {
  const std::size_t per_image =
      std::max<std::size_t>(1, g.out_h * g.out_w * g.kernel_h * g.kernel_w * g.in_c);
  return std::clamp<std::size_t>((std::size_t{1} << 22) / per_image, 1,
                                 std::max<std::size_t>(g.batch, 1));
}

ConvGeometry chunk_geometry(const ConvGeometry& g, std::size_t images) {
  ConvGeometry c = g;
  c.batch = images;
  return c;
}

// out[N*oh*ow, F] = im2col(input) * K
template <typename T>
void conv_forward(const T* input, const T* kernel, const ConvGeometry& g, T* out) {
  const std::size_t per = images_per_chunk(g);
  const std::size_t chunks = (g.batch + per - 1) / per;
  const std::size_t rows_per_image = g.out_h * g.out_w;
  const std::size_t row_len = g.kernel_h * g.kernel_w * g.in_c;
  const std::size_t in_image = g.in_h * g.in_w * g.in_c;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t first = c * per;
    const std::size_t count = std::min(per, g.batch - first);
    ConvGeometry cg = chunk_geometry(g, count);
    std::vector<T> cols(count * rows_per_image * row_len);
    kernels::im2col(input + first * in_image, cg, cols.data());
    kernels::matmul(cols.data(), kernel, out + first * rows_per_image * g.out_c,
                    count * rows_per_image, row_len, g.out_c, false, false, false);
  });
}

// input += col2im(out_grad * K^T)
template <typename T>
void conv_backward_input(const T* out_grad, const T* kernel, const ConvGeometry& g,
                         T* input_grad) {
  const std::size_t per = images_per_chunk(g);
  const std::size_t chunks = (g.batch + per - 1) / per;
  const std::size_t rows_per_image = g.out_h * g.out_w;
  const std::size_t row_len = g.kernel_h * g.kernel_w * g.in_c;
  const std::size_t in_image = g.in_h * g.in_w * g.in_c;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t first = c * per;
    const std::size_t count = std::min(per, g.batch - first);
    ConvGeometry cg = chunk_geometry(g, count);
    std::vector<T> cols(count * rows_per_image * row_len);
    kernels::matmul(out_grad + first * rows_per_image * g.out_c, kernel, cols.data(),
                    count * rows_per_image, g.out_c, row_len, false, true, false);
    kernels::col2im(cols.data(), cg, input_grad + first * in_image);
  });
}

// kernel_grad += im2col(input)^T * out_grad, summed over chunks in order.
template <typename T>
void conv_backward_kernel(const T* input, const T* out_grad, const ConvGeometry& g,
                          T* kernel_grad) {
  const std::size_t per = images_per_chunk(g);
  const std::size_t chunks = (g.batch + per - 1) / per;
  const std::size_t rows_per_image = g.out_h * g.out_w;
  const std::size_t row_len = g.kernel_h * g.kernel_w * g.in_c;
  const std::size_t in_image = g.in_h * g.in_w * g.in_c;
  const std::size_t kernel_size = row_len * g.out_c;
  std::vector<std::vector<T>> partial(chunks, std::vector<T>(kernel_size, T{0}));
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t first = c * per;
    const std::size_t count = std::min(per, g.batch - first);
    ConvGeometry cg = chunk_geometry(g, count);
    std::vector<T> cols(count * rows_per_image * row_len);
    kernels::im2col(input + first * in_image, cg, cols.data());
    kernels::matmul(cols.data(), out_grad + first * rows_per_image * g.out_c,
                    partial[c].data(), row_len, count * rows_per_image, g.out_c, true,
                    false, false);
  });
  for (const auto& p : partial)
    for (std::size_t i = 0; i < kernel_size; ++i) kernel_grad[i] += p[i];
}

void check_kernel(const Shape& kernel, std::size_t channels, std::size_t axis,
                  const char* op) {
  if (kernel.size() != 4 || kernel[axis] != channels) {
    throw ShapeError(std::string(op) + ": kernel " + shape_string(kernel) +
                     " does not match " + std::to_string(channels) + " channels");
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, std::size_t stride,
              Padding padding) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& k = kernel.value();
  if (x.rank() != 4) throw ShapeError("conv2d: input must be NHWC, got " + shape_string(x.shape()));
  check_kernel(k.shape(), x.dim(3), 2, "conv2d");
  const ConvGeometry g = ConvGeometry::make(x.dim(0), x.dim(1), x.dim(2), x.dim(3),
                                            k.dim(0), k.dim(1), k.dim(3), stride, padding);
  Tensor<T> out(Shape{g.batch, g.out_h, g.out_w, g.out_c});
  conv_forward(x.raw(), k.raw(), g, out.raw());
  return input.tape().record(
      std::move(out), {input, kernel},
      [input, kernel, g](Tape<T>& tape, const Tensor<T>& grad) {
        if (input.requires_grad()) {
          Tensor<T> gx(input.shape());
          conv_backward_input(grad.raw(), kernel.value().raw(), g, gx.raw());
          tape.accumulate(input, gx);
        }
        if (kernel.requires_grad()) {
          Tensor<T> gk(kernel.shape());
          conv_backward_kernel(input.value().raw(), grad.raw(), g, gk.raw());
          tape.accumulate(kernel, gk);
        }
      });
}

template <typename T>
Var<T> deconv2d(const Var<T>& input, const Var<T>& kernel, std::size_t stride,
                Padding padding) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& k = kernel.value();
  if (x.rank() != 4 || k.rank() != 4) throw ShapeError("deconv2d: expected NHWC input and 4-D kernel");
  if (stride == 0) throw ShapeError("deconv2d: stride must be >= 1");
  std::size_t out_h, out_w;
  if (padding == Padding::kValid) {
    out_h = (x.dim(1) - 1) * stride + k.dim(0);
    out_w = (x.dim(2) - 1) * stride + k.dim(1);
  } else {
    out_h = x.dim(1) * stride;
    out_w = x.dim(2) * stride;
  }
  return deconv2d(input, kernel, stride, padding, out_h, out_w);
}

template <typename T>
Var<T> deconv2d(const Var<T>& input, const Var<T>& kernel, std::size_t stride,
                Padding padding, std::size_t out_h, std::size_t out_w) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& k = kernel.value();
  if (x.rank() != 4) throw ShapeError("deconv2d: input must be NHWC, got " + shape_string(x.shape()));
  check_kernel(k.shape(), x.dim(3), 3, "deconv2d");
  const ConvGeometry g = ConvGeometry::make(x.dim(0), out_h, out_w, k.dim(2), k.dim(0),
                                            k.dim(1), k.dim(3), stride, padding);
  if (g.out_h != x.dim(1) || g.out_w != x.dim(2)) {
    throw ShapeError("deconv2d: output " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " is inconsistent with input " +
                     shape_string(x.shape()));
  }
  Tensor<T> out(Shape{g.batch, out_h, out_w, g.in_c});
  conv_backward_input(x.raw(), k.raw(), g, out.raw());
  return input.tape().record(
      std::move(out), {input, kernel},
      [input, kernel, g](Tape<T>& tape, const Tensor<T>& grad) {
        if (input.requires_grad()) {
          Tensor<T> gx(input.shape());
          conv_forward(grad.raw(), kernel.value().raw(), g, gx.raw());
          tape.accumulate(input, gx);
        }
        if (kernel.requires_grad()) {
          Tensor<T> gk(kernel.shape());
          conv_backward_kernel(grad.raw(), input.value().raw(), g, gk.raw());
          tape.accumulate(kernel, gk);
        }
      });
}

template <typename T>
Var<T> gather(const Var<T>& input, const std::vector<std::size_t>& index,
              const Shape& sample_shape) {
  const Tensor<T>& x = input.value();
  if (x.rank() == 0) throw ShapeError("gather needs a batch axis");
  if (shape_volume(sample_shape) != index.size()) {
    throw ShapeError("gather: index length does not match sample shape " +
                     shape_string(sample_shape));
  }
  const std::size_t n = x.dim(0);
  const std::size_t per_in = n == 0 ? 0 : x.size() / n;
  for (std::size_t i : index) {
    if (i >= per_in) throw ShapeError("gather: index out of range");
  }
  Shape shape{n};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor<T> out(shape);
  const std::size_t per_out = index.size();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < per_out; ++j) out[s * per_out + j] = x[s * per_in + index[j]];
  return input.tape().record(
      std::move(out), {input},
      [input, index, n, per_in, per_out](Tape<T>& tape, const Tensor<T>& g) {
        Tensor<T> gx(input.shape());
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t j = 0; j < per_out; ++j)
            gx[s * per_in + index[j]] += g[s * per_out + j];
        tape.accumulate(input, gx);
      });
}

template <typename T>
Var<T> scatter(const Var<T>& input, const std::vector<std::size_t>& index,
               const Shape& sample_shape) {
  const Tensor<T>& x = input.value();
  if (x.rank() == 0) throw ShapeError("scatter needs a batch axis");
  const std::size_t n = x.dim(0);
  const std::size_t per_in = n == 0 ? 0 : x.size() / n;
  const std::size_t per_out = shape_volume(sample_shape);
  if (per_in != index.size()) throw ShapeError("scatter: index length does not match input");
  for (std::size_t i : index) {
    if (i >= per_out) throw ShapeError("scatter: index out of range");
  }
  Shape shape{n};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor<T> out(shape);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < per_in; ++j) out[s * per_out + index[j]] += x[s * per_in + j];
  return input.tape().record(
      std::move(out), {input},
      [input, index, n, per_in, per_out](Tape<T>& tape, const Tensor<T>& g) {
        Tensor<T> gx(input.shape());
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t j = 0; j < per_in; ++j)
            gx[s * per_in + j] = g[s * per_out + index[j]];
        tape.accumulate(input, gx);
      });
}

template <typename T>
Var<T> crop(const Var<T>& input, std::size_t h, std::size_t w) {
  const Tensor<T>& x = input.value();
  if (x.rank() != 4 || h > x.dim(1) || w > x.dim(2)) {
    throw ShapeError("crop: cannot take " + std::to_string(h) + "x" + std::to_string(w) +
                     " from " + shape_string(x.shape()));
  }
  if (h == x.dim(1) && w == x.dim(2)) return input;
  const std::size_t n = x.dim(0), c = x.dim(3);
  std::vector<std::size_t> index;
  index.reserve(h * w * c);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx)
      for (std::size_t ch = 0; ch < c; ++ch) index.push_back((y * x.dim(2) + xx) * c + ch);
  (void)n;
  return gather(input, index, Shape{h, w, c});
}

#define VAPNEV_INSTANTIATE_OPS(T)                                                  \
  template Var<T> add(const Var<T>&, const Var<T>&);                               \
  template Var<T> sub(const Var<T>&, const Var<T>&);                               \
  template Var<T> mul(const Var<T>&, const Var<T>&);                               \
  template Var<T> add_scalar(const Var<T>&, T);                                    \
  template Var<T> mul_scalar(const Var<T>&, T);                                    \
  template Var<T> neg(const Var<T>&);                                              \
  template Var<T> square(const Var<T>&);                                           \
  template Var<T> exp(const Var<T>&);                                              \
  template Var<T> log(const Var<T>&);                                              \
  template Var<T> sigmoid(const Var<T>&);                                          \
  template Var<T> tanh(const Var<T>&);                                             \
  template Var<T> leaky_relu(const Var<T>&, T);                                    \
  template Var<T> clamp(const Var<T>&, T, T);                                      \
  template Var<T> sum(const Var<T>&);                                              \
  template Var<T> mean(const Var<T>&);                                             \
  template Var<T> sum_per_sample(const Var<T>&);                                   \
  template Var<T> reshape(const Var<T>&, Shape);                                   \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                            \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, std::size_t, Padding);      \
  template Var<T> deconv2d(const Var<T>&, const Var<T>&, std::size_t, Padding);    \
  template Var<T> deconv2d(const Var<T>&, const Var<T>&, std::size_t, Padding,     \
                           std::size_t, std::size_t);                              \
  template Var<T> gather(const Var<T>&, const std::vector<std::size_t>&, const Shape&); \
  template Var<T> scatter(const Var<T>&, const std::vector<std::size_t>&, const Shape&); \
  template Var<T> crop(const Var<T>&, std::size_t, std::size_t);                   \
  template void kernels::matmul(const T*, const T*, T*, std::size_t, std::size_t,  \
                                std::size_t, bool, bool, bool);                    \
  template void kernels::im2col(const T*, const ConvGeometry&, T*);                \
  template void kernels::col2im(const T*, const ConvGeometry&, T*);

VAPNEV_INSTANTIATE_OPS(float)
VAPNEV_INSTANTIATE_OPS(double)

#undef VAPNEV_INSTANTIATE_OPS

}  // namespace vapnev
