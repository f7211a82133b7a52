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

#include "vapnev/flows.hpp"

#include <algorithm>

#include "vapnev/errors.hpp"

namespace vapnev {
namespace {

void check_sample_shape(const Shape& s) {
  if (s.size() != 3 || shape_volume(s) == 0) {
    throw ShapeError("mask needs a non-empty [H, W, C] sample shape, got " + shape_string(s));
  }
}

// Index of (h, w, c) in [H, W, C] for each squeezed position, in output order.
std::vector<std::size_t> squeeze_index(const Shape& s) {
  const std::size_t h = s[0], w = s[1], c = s[2];
  std::vector<std::size_t> index;
  index.reserve(h * w * c);
  for (std::size_t i = 0; i < h / 2; ++i)
    for (std::size_t j = 0; j < w / 2; ++j)
      for (std::size_t sub = 0; sub < 4; ++sub)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t y = 2 * i + sub / 2, x = 2 * j + sub % 2;
          index.push_back((y * w + x) * c + ch);
        }
  return index;
}

template <typename T>
Shape sample_of(const Var<T>& v) {
  return Shape(v.shape().begin() + 1, v.shape().end());
}

}  // namespace

Mask::Mask(MaskKind kind, int parity, Shape sample_shape, const std::vector<bool>& keep)
    : kind_(kind), parity_(parity), sample_shape_(std::move(sample_shape)) {
  for (std::size_t i = 0; i < keep.size(); ++i) (keep[i] ? kept_ : transformed_).push_back(i);
}

Mask Mask::checkerboard(const Shape& s, int parity) {
  check_sample_shape(s);
  if (parity != 0 && parity != 1) throw ContractError("mask parity must be 0 or 1");
  std::vector<bool> keep(shape_volume(s));
  for (std::size_t h = 0; h < s[0]; ++h)
    for (std::size_t w = 0; w < s[1]; ++w)
      for (std::size_t c = 0; c < s[2]; ++c)
        keep[(h * s[1] + w) * s[2] + c] = static_cast<int>((h + w) % 2) == parity;
  return Mask(MaskKind::kCheckerboard, parity, s, keep);
}

Mask Mask::channelwise(const Shape& s, int parity) {
  check_sample_shape(s);
  if (parity != 0 && parity != 1) throw ContractError("mask parity must be 0 or 1");
  if (s[2] % 2 != 0) throw ShapeError("channel-wise mask needs an even channel count");
  std::vector<bool> keep(shape_volume(s));
  const std::size_t half = s[2] / 2;
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = ((i % s[2]) < half) == (parity == 0);
  return Mask(MaskKind::kChannelwise, parity, s, keep);
}

Mask Mask::from_binary(const Tensor<double>& binary) {
  check_sample_shape(binary.shape());
  std::vector<bool> keep(binary.size());
  for (std::size_t i = 0; i < binary.size(); ++i) {
    const double b = binary.data()[i];
    if (b != 0.0 && b != 1.0) throw ContractError("binary mask entries must be 0 or 1");
    keep[i] = b == 1.0;
  }
  return Mask(MaskKind::kCustom, 0, binary.shape(), keep);
}

Tensor<double> Mask::binary() const {
  Tensor<double> out(sample_shape_);
  for (std::size_t i : kept_) out.data()[i] = 1.0;
  return out;
}

Shape squeezed_shape(const Shape& s) {
  if (s.size() != 3 || s[0] % 2 != 0 || s[1] % 2 != 0) {
    throw ShapeError("squeeze needs even spatial extents, got " + shape_string(s));
  }
  return {s[0] / 2, s[1] / 2, s[2] * 4};
}

template <typename T>
Var<T> squeeze(const Var<T>& x) {
  if (x.value().rank() != 4) throw ShapeError("squeeze needs NHWC input");
  const Shape s = sample_of(x);
  return gather(x, squeeze_index(s), squeezed_shape(s));
}

template <typename T>
Var<T> unsqueeze(const Var<T>& x) {
  if (x.value().rank() != 4 || x.dim(3) % 4 != 0) {
    throw ShapeError("unsqueeze needs NHWC input with 4k channels");
  }
  const Shape s = {x.dim(1) * 2, x.dim(2) * 2, x.dim(3) / 4};
  return scatter(x, squeeze_index(s), s);
}

template <typename T>
std::pair<Var<T>, Var<T>> apply_mask_split(const Var<T>& x, const Mask& mask) {
  if (x.value().rank() == 0 || sample_of(x) != mask.sample_shape()) {
    throw ShapeError("mask over " + shape_string(mask.sample_shape()) + " applied to " +
                     shape_string(x.shape()));
  }
  return {gather(x, mask.kept(), {mask.kept().size()}),
          gather(x, mask.transformed(), {mask.transformed().size()})};
}

template <typename T>
Var<T> mask_merge(const Var<T>& kept, const Var<T>& transformed, const Mask& mask) {
  return scatter(kept, mask.kept(), mask.sample_shape()) +
         scatter(transformed, mask.transformed(), mask.sample_shape());
}

template <typename T>
FlowResult<T> coupling_forward(const Var<T>& x, const Mask& mask, const CouplingFn<T>& fn) {
  const auto [kept, trans] = apply_mask_split(x, mask);
  if (mask.transformed().empty()) {
    return {x, x.tape().constant(Tensor<T>({x.dim(0)}))};
  }
  const auto [l, m] = fn(kept);
  if (l.shape() != trans.shape() || m.shape() != trans.shape()) {
    throw ShapeError("coupling conditioner output " + shape_string(l.shape()) + ", expected " +
                     shape_string(trans.shape()));
  }
  return {mask_merge(kept, trans * exp(l) + m, mask), sum_per_sample(l)};
}

template <typename T>
Var<T> coupling_inverse(const Var<T>& y, const Mask& mask, const CouplingFn<T>& fn) {
  const auto [kept, trans] = apply_mask_split(y, mask);
  if (mask.transformed().empty()) return y;
  const auto [l, m] = fn(kept);
  if (l.shape() != trans.shape() || m.shape() != trans.shape()) {
    throw ShapeError("coupling conditioner output " + shape_string(l.shape()) + ", expected " +
                     shape_string(trans.shape()));
  }
  return mask_merge(kept, (trans - m) * exp(-l), mask);
}

template <typename T>
ConditionerPair<T>::ConditionerPair(const std::string& name, const Shapes& s, Rng& rng)
    : shapes_(s),
      f1_in_(name + ".f1.in", s.in_c, s.filters, s.kernel, 1, rng),
      f1_out_(name + ".f1.out", s.filters, s.out_c, s.kernel, 1, rng),
      beta1_(name + ".beta1", Tensor<T>({s.out_c}, T{1})),
      bias_(name + ".b", Tensor<T>({s.out_c})) {
  for (std::size_t i = 0; i < s.residual_blocks; ++i) {
    f1_blocks_.emplace_back(name + ".f1.res" + std::to_string(i), s.filters, s.kernel, s.leak,
                            rng);
  }
  f1_out_.zero();
  if (s.z_dim > 0) {
    f2_project_ = std::make_unique<Linear<T>>(name + ".f2.project", s.z_dim, 4 * s.filters, rng);
    std::size_t extent = 2;
    while (extent < std::max(s.out_h, s.out_w)) {
      f2_deconvs_.emplace_back(name + ".f2.deconv" + std::to_string(f2_deconvs_.size()),
                               s.filters, s.filters, 3, 2, rng);
      extent *= 2;
    }
    f2_out_ = std::make_unique<Conv2d<T>>(name + ".f2.out", s.filters, s.out_c, 3, 1, rng);
    f2_out_->zero();
    alpha_ = std::make_unique<Parameter<T>>(name + ".alpha", Tensor<T>({s.out_c}));
    beta2_ = std::make_unique<Parameter<T>>(name + ".beta2", Tensor<T>({s.out_c}, T{1}));
  }
}

template <typename T>
Var<T> ConditionerPair<T>::f1(Tape<T>& tape, const Var<T>& x_in) {
  const T leak = static_cast<T>(shapes_.leak);
  Var<T> h = leaky_relu(f1_in_(tape, x_in), leak);
  for (auto& block : f1_blocks_) h = block(tape, h);
  return f1_out_(tape, leaky_relu(h, leak));
}

template <typename T>
Var<T> ConditionerPair<T>::f2(Tape<T>& tape, const Var<T>& z) {
  if (!conditional()) throw ContractError("unconditional coupling has no z network");
  if (z.value().rank() != 2 || z.dim(1) != shapes_.z_dim) {
    throw ShapeError("conditioner z input " + shape_string(z.shape()));
  }
  const T leak = static_cast<T>(shapes_.leak);
  const std::size_t n = z.dim(0);
  Var<T> h = leaky_relu(reshape((*f2_project_)(tape, z), {n, 2, 2, shapes_.filters}), leak);
  for (auto& deconv : f2_deconvs_) h = leaky_relu(deconv(tape, h), leak);
  return crop((*f2_out_)(tape, h), shapes_.out_h, shapes_.out_w);
}

template <typename T>
Var<T> ConditionerPair<T>::operator()(Tape<T>& tape, const Var<T>& x_in,
                                      const std::optional<Var<T>>& z) {
  const Var<T> l1 = f1(tape, x_in);
  Var<T> out = l1 * tape.param(beta1_) + tape.param(bias_);
  if (conditional()) {
    if (!z) throw ContractError("conditional coupling called without z");
    const Var<T> l2 = f2(tape, *z);
    out = out + (l1 * l2) * tape.param(*alpha_) + l2 * tape.param(*beta2_);
  }
  return out;
}

template <typename T>
void ConditionerPair<T>::parameters(ParamList<T>& out) {
  f1_in_.parameters(out);
  for (auto& block : f1_blocks_) block.parameters(out);
  f1_out_.parameters(out);
  if (conditional()) {
    f2_project_->parameters(out);
    for (auto& deconv : f2_deconvs_) deconv.parameters(out);
    f2_out_->parameters(out);
    out.push_back(alpha_.get());
    out.push_back(beta2_.get());
  }
  out.push_back(&beta1_);
  out.push_back(&bias_);
}

namespace {

ConditionerShapes pair_shapes(const Mask& mask, std::size_t filters,
                                                     std::size_t z_dim, const FlowConfig& config) {
  const Shape& s = mask.sample_shape();
  const bool channelwise = mask.kind() == MaskKind::kChannelwise;
  const std::size_t half = mask.kept().size() / (s[0] * s[1]);
  return {channelwise ? half : s[2],
          s[0],
          s[1],
          channelwise ? s[2] - half : s[2],
          filters,
          z_dim,
          config.residual_blocks,
          config.kernel,
          config.leak};
}

}  // namespace

template <typename T>
CouplingLayer<T>::CouplingLayer(const std::string& name, Mask mask, std::size_t filters,
                                std::size_t z_dim, const FlowConfig& config, Rng& rng)
    : mask_(std::move(mask)),
      scale_(name + ".l", pair_shapes(mask_, filters, z_dim, config), rng),
      shift_(name + ".m", pair_shapes(mask_, filters, z_dim, config), rng),
      gate_(name + ".gate",
            Tensor<T>({pair_shapes(mask_, filters, z_dim, config).out_c}, T{1})) {
  const auto s = pair_shapes(mask_, filters, z_dim, config);
  in_shape_ = {s.out_h, s.out_w, s.in_c};
}

template <typename T>
Var<T> CouplingLayer<T>::embed(Tape<T>&, const Var<T>& kept) const {
  const std::size_t n = kept.dim(0);
  if (mask_.kind() == MaskKind::kChannelwise) {
    return reshape(kept, {n, in_shape_[0], in_shape_[1], in_shape_[2]});
  }
  // x * b: kept values at their own positions, zeros elsewhere.
  return scatter(kept, mask_.kept(), mask_.sample_shape());
}

template <typename T>
Var<T> CouplingLayer<T>::extract(const Var<T>& full) const {
  const std::size_t n = full.dim(0);
  if (mask_.kind() == MaskKind::kChannelwise) {
    return reshape(full, {n, full.value().size() / n});
  }
  return gather(full, mask_.transformed(), {mask_.transformed().size()});
}

template <typename T>
CouplingFn<T> CouplingLayer<T>::conditioner(Tape<T>& tape, const std::optional<Var<T>>& z) {
  return [this, &tape, z](const Var<T>& kept) {
    const Var<T> in = embed(tape, kept);
    const Var<T> l = tanh(scale_(tape, in, z)) * tape.param(gate_);
    const Var<T> m = shift_(tape, in, z);
    return std::pair<Var<T>, Var<T>>{extract(l), extract(m)};
  };
}

template <typename T>
FlowResult<T> CouplingLayer<T>::forward(Tape<T>& tape, const Var<T>& x,
                                        const std::optional<Var<T>>& z) {
  return coupling_forward(x, mask_, conditioner(tape, z));
}

template <typename T>
Var<T> CouplingLayer<T>::inverse(Tape<T>& tape, const Var<T>& y,
                                 const std::optional<Var<T>>& z) {
  return coupling_inverse(y, mask_, conditioner(tape, z));
}

template <typename T>
void CouplingLayer<T>::parameters(ParamList<T>& out) {
  scale_.parameters(out);
  shift_.parameters(out);
  out.push_back(&gate_);
}

template <typename T>
FlowStack<T>::FlowStack(const FlowConfig& config, const Shape& sample_shape, std::size_t z_dim,
                        Rng& rng)
    : input_shape_(sample_shape) {
  Shape shape = sample_shape;
  std::size_t index = 0;
  for (std::size_t si = 0; si < config.scales.size(); ++si) {
    const FlowScaleConfig& scale = config.scales[si];
    const std::string prefix = "flow.s" + std::to_string(si);
    auto add = [&](Mask mask, const std::string& tag) {
      const std::size_t zd = config.layer_conditional(index) ? z_dim : 0;
      steps_.emplace_back(std::make_unique<CouplingLayer<T>>(prefix + "." + tag, std::move(mask),
                                                             scale.filters, zd, config, rng));
      ++index;
    };
    for (std::size_t i = 0; i < scale.checkerboard; ++i) {
      add(Mask::checkerboard(shape, static_cast<int>(i % 2)), "cb" + std::to_string(i));
    }
    if (scale.squeeze) {
      shape = squeezed_shape(shape);
      steps_.emplace_back(Squeeze{});
    }
    for (std::size_t i = 0; i < scale.channelwise; ++i) {
      add(Mask::channelwise(shape, static_cast<int>(i % 2)), "cw" + std::to_string(i));
    }
  }
  output_shape_ = shape;
}

template <typename T>
void FlowStack<T>::check_input(const Var<T>& x, const Shape& expected) const {
  if (x.value().rank() != 4 || sample_of(x) != expected) {
    throw ShapeError("flow input " + shape_string(x.shape()) + ", expected [N] + " +
                     shape_string(expected));
  }
}

template <typename T>
typename FlowStack<T>::Trace FlowStack<T>::forward(Tape<T>& tape, const Var<T>& x,
                                                   const std::optional<Var<T>>& z) {
  check_input(x, input_shape_);
  Trace trace;
  Var<T> h = x;
  for (auto& step : steps_) {
    if (std::holds_alternative<Squeeze>(step)) {
      h = squeeze(h);
      continue;
    }
    FlowResult<T> r = std::get<0>(step)->forward(tape, h, z);
    h = r.y;
    trace.logdet = trace.logdet.valid() ? trace.logdet + r.logdet : r.logdet;
    trace.layer_logdets.push_back(r.logdet);
  }
  trace.y = h;
  return trace;
}

template <typename T>
Var<T> FlowStack<T>::inverse(Tape<T>& tape, const Var<T>& y, const std::optional<Var<T>>& z) {
  check_input(y, output_shape_);
  Var<T> h = y;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    if (std::holds_alternative<Squeeze>(*it)) {
      h = unsqueeze(h);
    } else {
      h = std::get<0>(*it)->inverse(tape, h, z);
    }
  }
  return h;
}

template <typename T>
std::size_t FlowStack<T>::coupling_count() const {
  return static_cast<std::size_t>(std::count_if(steps_.begin(), steps_.end(), [](const Step& s) {
    return !std::holds_alternative<Squeeze>(s);
  }));
}

template <typename T>
void FlowStack<T>::parameters(ParamList<T>& out) {
  for (auto& step : steps_) {
    if (!std::holds_alternative<Squeeze>(step)) std::get<0>(step)->parameters(out);
  }
}

#define VAPNEV_INSTANTIATE_FLOWS(T)                                                          \
  template Var<T> squeeze<T>(const Var<T>&);                                                 \
  template Var<T> unsqueeze<T>(const Var<T>&);                                               \
  template std::pair<Var<T>, Var<T>> apply_mask_split<T>(const Var<T>&, const Mask&);        \
  template Var<T> mask_merge<T>(const Var<T>&, const Var<T>&, const Mask&);                  \
  template FlowResult<T> coupling_forward<T>(const Var<T>&, const Mask&, const CouplingFn<T>&); \
  template Var<T> coupling_inverse<T>(const Var<T>&, const Mask&, const CouplingFn<T>&);     \
  template class ConditionerPair<T>;                                                         \
  template class CouplingLayer<T>;                                                           \
  template class FlowStack<T>;

VAPNEV_INSTANTIATE_FLOWS(float)
VAPNEV_INSTANTIATE_FLOWS(double)

}  // namespace vapnev
