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

// Independent reference computations used only by tests.

#ifndef VAPNEV_TESTS_ORACLES_HPP_
#define VAPNEV_TESTS_ORACLES_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "vapnev/autodiff.hpp"
#include "vapnev/ops.hpp"
#include "vapnev/rng.hpp"
#include "vapnev/tensor.hpp"

namespace oracle {

using vapnev::Shape;
using vapnev::Tape;
using vapnev::Tensor;
using vapnev::Var;

inline Tensor<double> random_tensor(const Shape& shape, vapnev::Rng& rng,
                                    double scale = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

inline Tensor<double> matmul(const Tensor<double>& a, const Tensor<double>& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<double> out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      out[i * n + j] = acc;
    }
  return out;
}

// Direct nested-loop cross-correlation with explicit zero padding.
inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& k,
                             std::size_t stride, std::size_t pad_top,
                             std::size_t pad_left, std::size_t out_h,
                             std::size_t out_w) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t kh = k.dim(0), kw = k.dim(1), f = k.dim(3);
  Tensor<double> out(Shape{n, out_h, out_w, f});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox)
        for (std::size_t of = 0; of < f; ++of) {
          double acc = 0;
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              long iy = static_cast<long>(oy * stride + i) - static_cast<long>(pad_top);
              long ix = static_cast<long>(ox * stride + j) - static_cast<long>(pad_left);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                continue;
              for (std::size_t ic = 0; ic < c; ++ic)
                acc += x.at(b, iy, ix, ic) * k[((i * kw + j) * c + ic) * f + of];
            }
          out.at(b, oy, ox, of) = acc;
        }
  return out;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

using ScalarFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// Largest norm-relative error between tape gradients and central finite
// differences, taken over all inputs.
inline double gradient_error(const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                             double h = 1e-5) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  Var<double> loss = f(tape, vars);
  tape.backward(loss);

  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> t;
    std::vector<Var<double>> vs;
    for (const auto& x : xs) vs.push_back(t.constant(x));
    return f(t, vs).value()[0];
  };

  double worst = 0;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double> analytic = tape.grad(vars[k]);
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = probe[k][i];
      probe[k][i] = orig + h;
      const double up = eval(probe);
      probe[k][i] = orig - h;
      const double down = eval(probe);
      probe[k][i] = orig;
      const double numeric = (up - down) / (2 * h);
      diff2 += (numeric - analytic[i]) * (numeric - analytic[i]);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

// Norm-relative gradient error for every parameter tensor of a model, using
// central differences on the parameter values. `loss` must rebuild the graph
// from scratch on the tape it receives. Returns the worst group.
inline double parameter_gradient_error(const vapnev::ParamList<double>& params,
                                       const std::function<Var<double>(Tape<double>&)>& loss,
                                       double h = 1e-5,
                                       std::vector<double>* per_group = nullptr) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  auto eval = [&]() {
    Tape<double> t;
    t.set_grad_enabled(false);
    return loss(t).value()[0];
  };
  double worst = 0;
  for (auto* p : params) {
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = eval();
      p->value[i] = orig - h;
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad[i];
      diff2 += (numeric - analytic) * (numeric - analytic);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
    const double err = std::sqrt(diff2) / denom;
    if (per_group) per_group->push_back(err);
    worst = std::max(worst, err);
  }
  return worst;
}

// Dense Jacobian of a vector map R^D -> R^D by central differences.
inline Eigen::MatrixXd jacobian(const std::function<std::vector<double>(const std::vector<double>&)>& f,
                                const std::vector<double>& x, double h = 1e-6) {
  const std::size_t d = x.size();
  Eigen::MatrixXd jac(d, d);
  std::vector<double> probe = x;
  for (std::size_t j = 0; j < d; ++j) {
    probe[j] = x[j] + h;
    auto up = f(probe);
    probe[j] = x[j] - h;
    auto down = f(probe);
    probe[j] = x[j];
    for (std::size_t i = 0; i < d; ++i) jac(i, j) = (up[i] - down[i]) / (2 * h);
  }
  return jac;
}

inline double log_abs_det(const Eigen::MatrixXd& m) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  const auto& u = lu.matrixLU();
  double acc = 0;
  for (Eigen::Index i = 0; i < u.rows(); ++i) acc += std::log(std::abs(u(i, i)));
  return acc;
}

}  // namespace oracle

#endif  // VAPNEV_TESTS_ORACLES_HPP_
