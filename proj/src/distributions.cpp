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

#include "vapnev/distributions.hpp"

#include <numbers>

#include "vapnev/ops.hpp"

namespace vapnev {
namespace {

template <typename T>
void check_params(const GaussianParams<T>& p) {
  if (p.mu.shape() != p.log_var.shape()) {
    throw ShapeError("gaussian: mean " + shape_string(p.mu.shape()) +
                     " and log-variance " + shape_string(p.log_var.shape()) +
                     " differ in shape");
  }
}

}  // namespace

template <typename T>
Var<T> diag_gaussian_log_prob(const Var<T>& y, const GaussianParams<T>& p) {
  check_params(p);
  if (y.shape() != p.mu.shape()) {
    throw ShapeError("gaussian: sample " + shape_string(y.shape()) +
                     " does not match mean " + shape_string(p.mu.shape()));
  }
  const T log_two_pi = static_cast<T>(std::log(2 * std::numbers::pi));
  // -1/2 [log var + (y - mu)^2 / var + log 2 pi], summed per sample.
  auto diff = y - p.mu;
  auto mahalanobis = square(diff) * exp(neg(p.log_var));
  auto per_elem = add_scalar(p.log_var + mahalanobis, log_two_pi);
  return mul_scalar(sum_per_sample(per_elem), T{-0.5});
}

template <typename T>
Var<T> kl_to_standard_normal(const GaussianParams<T>& q) {
  check_params(q);
  // 1/2 [mu^2 + var - 1 - log var], summed per sample.
  auto per_elem = add_scalar(square(q.mu) + exp(q.log_var) - q.log_var, T{-1});
  return mul_scalar(sum_per_sample(per_elem), T{0.5});
}

template <typename T>
Tensor<T> standard_normal(const Shape& shape, Rng& rng) {
  Tensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>(rng.normal());
  return out;
}

template <typename T>
Var<T> reparam_sample(const GaussianParams<T>& p, Rng& rng) {
  check_params(p);
  auto eps = p.mu.tape().constant(standard_normal<T>(p.mu.shape(), rng));
  return p.mu + exp(mul_scalar(p.log_var, T{0.5})) * eps;
}

#define VAPNEV_INSTANTIATE(T)                                                      \
  template Var<T> diag_gaussian_log_prob(const Var<T>&, const GaussianParams<T>&); \
  template Var<T> kl_to_standard_normal(const GaussianParams<T>&);                 \
  template Var<T> reparam_sample(const GaussianParams<T>&, Rng&);                  \
  template Tensor<T> standard_normal(const Shape&, Rng&);

VAPNEV_INSTANTIATE(float)
VAPNEV_INSTANTIATE(double)

#undef VAPNEV_INSTANTIATE

}  // namespace vapnev
