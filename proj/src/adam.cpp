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

#include "vapnev/adam.hpp"

#include <cmath>

namespace vapnev {

template <typename T>
void adam_step(const ParamList<T>& params, AdamState<T>& state,
               const AdamConfig& config) {
  for (const Parameter<T>* p : params) {
    if (!p->grad.all_finite()) {
      throw NumericsError("gradient of " + p->name, "refusing ADAM step");
    }
  }
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const Parameter<T>* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("ADAM state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].shape() != params[i]->value.shape()) {
      throw ShapeError("ADAM moment shape mismatch for " + params[i]->name);
    }
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i]->value.data();
    auto g = params[i]->grad.data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1 - b1) * g[j];
      v[j] = b2 * v[j] + (1 - b2) * g[j] * g[j];
      const double m_hat = static_cast<double>(m[j]) / correction1;
      const double v_hat = static_cast<double>(v[j]) / correction2;
      w[j] -= static_cast<T>(config.lr * m_hat / (std::sqrt(v_hat) + config.eps));
    }
  }
}

template void adam_step(const ParamList<float>&, AdamState<float>&, const AdamConfig&);
template void adam_step(const ParamList<double>&, AdamState<double>&, const AdamConfig&);

}  // namespace vapnev
