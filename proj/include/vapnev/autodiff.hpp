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

#ifndef VAPNEV_AUTODIFF_HPP_
#define VAPNEV_AUTODIFF_HPP_

#include <cstddef>
#include <functional>
#include <string>
#include <deque>
#include <unordered_map>
#include <vector>

#include "vapnev/tensor.hpp"

namespace vapnev {

// A trainable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  Parameter(std::string param_name, Tensor<T> initial)
      : name(std::move(param_name)),
        value(std::move(initial)),
        grad(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

template <typename T>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// tape is alive.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool requires_grad() const;
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode differentiation record. Values are appended in evaluation
// order, so node ids are a topological order of the graph. A tape belongs to
// one thread of control.
template <typename T>
class Tape {
 public:
  // Receives the gradient of the loss w.r.t. the node's output and pushes
  // contributions to its inputs through accumulate().
  using Backward = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value);
  // Leaf bound to a parameter; repeated calls return the same node. After
  // backward() the leaf gradient is added into `p.grad`.
  Var<T> param(Parameter<T>& p);

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs,
                Backward backward);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse order.
  // Throws ContractError unless `loss` holds exactly one value.
  void backward(const Var<T>& loss);

  // Gradient of the last backward() w.r.t. `v`; zeros if none reached it.
  Tensor<T> grad(const Var<T>& v) const;

  void accumulate(const Var<T>& v, const Tensor<T>& g);

  // With gradients disabled, leaves and parameters enter as constants and
  // no backward rules are kept (inference).
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
    Parameter<T>* param = nullptr;
  };

  std::deque<Node> nodes_;  // stable references across appends
  std::unordered_map<Parameter<T>*, std::size_t> param_ids_;
  bool grad_enabled_ = true;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace vapnev

#endif  // VAPNEV_AUTODIFF_HPP_
