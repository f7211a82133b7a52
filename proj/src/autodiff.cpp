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

#include "vapnev/autodiff.hpp"

#include <utility>

namespace vapnev {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  auto it = param_ids_.find(&p);
  if (it != param_ids_.end()) return Var<T>(this, it->second);
  if (!grad_enabled_) {
    Var<T> c = constant(p.value);
    param_ids_.emplace(&p, c.id());
    return c;
  }
  Var<T> v = leaf(p.value);
  nodes_[v.id()].param = &p;
  param_ids_.emplace(&p, v.id());
  return v;
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs,
                       Backward backward) {
  Node node;
  node.value = std::move(value);
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw ContractError("op input lives on another tape");
    if (in.requires_grad()) node.requires_grad = true;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
void Tape<T>::accumulate(const Var<T>& v, const Tensor<T>& g) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (g.shape() != node.value.shape()) {
    throw ShapeError("gradient shape " + shape_string(g.shape()) +
                     " does not match value shape " +
                     shape_string(node.value.shape()));
  }
  if (!node.has_grad) {
    node.grad = g;
    node.has_grad = true;
    return;
  }
  auto dst = node.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (&loss.tape() != this) throw ContractError("loss is not on this tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_string(loss.shape()));
  }
  for (auto& node : nodes_) {
    node.has_grad = false;
    node.grad = Tensor<T>();
  }
  if (!requires_grad(loss.id())) return;
  accumulate(loss, Tensor<T>(loss.shape(), T{1}));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad) continue;
    if (node.backward) node.backward(*this, node.grad);
  }
  for (auto& node : nodes_) {
    if (node.param == nullptr || !node.has_grad) continue;
    auto dst = node.param->grad.data();
    auto src = node.grad.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

template <typename T>
Tensor<T> Tape<T>::grad(const Var<T>& v) const {
  const Node& node = nodes_[v.id()];
  if (!node.has_grad) return Tensor<T>(node.value.shape());
  return node.grad;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace vapnev
