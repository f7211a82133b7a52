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

#ifndef VAPNEV_ADAM_HPP_
#define VAPNEV_ADAM_HPP_

#include <cstdint>
#include <vector>

#include "vapnev/autodiff.hpp"

namespace vapnev {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates, one pair per parameter, in parameter order.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t t = 0;
};

// One bias-corrected ADAM update of every parameter from its `grad`.
// Throws NumericsError, leaving parameters and state untouched, if any
// gradient is non-finite.
template <typename T>
void adam_step(const ParamList<T>& params, AdamState<T>& state,
               const AdamConfig& config = {});

extern template void adam_step(const ParamList<float>&, AdamState<float>&,
                               const AdamConfig&);
extern template void adam_step(const ParamList<double>&, AdamState<double>&,
                               const AdamConfig&);

}  // namespace vapnev

#endif  // VAPNEV_ADAM_HPP_
