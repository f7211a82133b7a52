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

#ifndef VAPNEV_DISTRIBUTIONS_HPP_
#define VAPNEV_DISTRIBUTIONS_HPP_

#include "vapnev/autodiff.hpp"
#include "vapnev/rng.hpp"

namespace vapnev {

// Diagonal Gaussian given as mean and log-variance. A standard deviation maps
// to exp(0.5 * log_var); Sigma = diag(exp(log_var)).
template <typename T>
struct GaussianParams {
  Var<T> mu;
  Var<T> log_var;
};

// Per-sample log N(y; mu, diag(exp(log_var))) in nats, shape [N].
template <typename T>
Var<T> diag_gaussian_log_prob(const Var<T>& y, const GaussianParams<T>& p);

// Per-sample KL(N(mu, diag(exp(log_var))) || N(0, I)) in nats, shape [N].
template <typename T>
Var<T> kl_to_standard_normal(const GaussianParams<T>& q);

// mu + exp(0.5 * log_var) * eps with eps ~ N(0, I) drawn from `rng`.
// eps enters the tape as a constant.
template <typename T>
Var<T> reparam_sample(const GaussianParams<T>& p, Rng& rng);

// Tensor of iid standard normals.
template <typename T>
Tensor<T> standard_normal(const Shape& shape, Rng& rng);

}  // namespace vapnev

#endif  // VAPNEV_DISTRIBUTIONS_HPP_
