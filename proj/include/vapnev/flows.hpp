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

#ifndef VAPNEV_FLOWS_HPP_
#define VAPNEV_FLOWS_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vapnev/autodiff.hpp"
#include "vapnev/config.hpp"
#include "vapnev/networks.hpp"

namespace vapnev {

enum class MaskKind { kCheckerboard, kChannelwise, kCustom };

// Binary partition of the components of one sample [H, W, C]. `kept` are the
// components copied through a coupling, `transformed` the ones it rescales
// and shifts. Both are row-major index lists and together cover every
// component exactly once. Either list may be empty; a coupling whose mask
// keeps everything is the identity.
class Mask {
 public:
  // Checkerboard keeps (h + w) % 2 == parity. Channelwise keeps the first half
  // of the channels for parity 0 and the second half for parity 1.
  static Mask checkerboard(const Shape& sample_shape, int parity);
  static Mask channelwise(const Shape& sample_shape, int parity);
  // 1 = kept, 0 = transformed. ContractError on any other value.
  static Mask from_binary(const Tensor<double>& binary);

  MaskKind kind() const { return kind_; }
  int parity() const { return parity_; }
  const Shape& sample_shape() const { return sample_shape_; }
  const std::vector<std::size_t>& kept() const { return kept_; }
  const std::vector<std::size_t>& transformed() const { return transformed_; }
  Tensor<double> binary() const;

 private:
  Mask(MaskKind kind, int parity, Shape sample_shape, const std::vector<bool>& keep);

  MaskKind kind_;
  int parity_;
  Shape sample_shape_;
  std::vector<std::size_t> kept_;
  std::vector<std::size_t> transformed_;
};

// x [N, H, W, C] -> (kept [N, d], transformed [N, D - d]); merge is the inverse.
template <typename T>
std::pair<Var<T>, Var<T>> apply_mask_split(const Var<T>& x, const Mask& mask);
template <typename T>
Var<T> mask_merge(const Var<T>& kept, const Var<T>& transformed, const Mask& mask);

// [N, H, W, C] -> [N, H/2, W/2, 4C]. Output channel s * C + c holds channel c
// of sub-pixel s, with s = 0, 1, 2, 3 for top-left, top-right, bottom-left,
// bottom-right. A permutation, so its log-determinant is zero.
template <typename T> Var<T> squeeze(const Var<T>& x);
template <typename T> Var<T> unsqueeze(const Var<T>& x);
Shape squeezed_shape(const Shape& sample_shape);

// Maps the kept part [N, d] to (log-scale, shift), each [N, D - d].
template <typename T>
using CouplingFn = std::function<std::pair<Var<T>, Var<T>>(const Var<T>& kept)>;

template <typename T>
struct FlowResult {
  Var<T> y;
  Var<T> logdet;  // [N]
};

// y_kept = x_kept;  y_trans = x_trans * exp(l) + m;  logdet = sum of l.
template <typename T>
FlowResult<T> coupling_forward(const Var<T>& x, const Mask& mask, const CouplingFn<T>& fn);
// x_kept = y_kept;  x_trans = (y_trans - m) * exp(-l).
template <typename T>
Var<T> coupling_inverse(const Var<T>& y, const Mask& mask, const CouplingFn<T>& fn);

struct ConditionerShapes {
  std::size_t in_c;
  std::size_t out_h, out_w, out_c;
  std::size_t filters;
  std::size_t z_dim;  // 0: unconditional
  std::size_t residual_blocks;
  std::size_t kernel;
  double leak;
};

// One of l_z or m_z:
//   alpha * f1(x) * f2(z) + beta1 * f1(x) + beta2 * f2(z) + b
// with per-channel alpha, beta1, beta2, b broadcast over H x W. f1 is a
// residual network on the kept part, f2 a deconvolution network that starts
// from a linear projection of z to 2 x 2 x filters and doubles until it covers
// the output extents (then crops). Without conditioning: beta1 * f1(x) + b.
template <typename T>
class ConditionerPair {
 public:
  using Shapes = ConditionerShapes;

  ConditionerPair(const std::string& name, const Shapes& shapes, Rng& rng);

  // x_in: [N, out_h, out_w, in_c]; z: [N, z_dim] unless unconditional.
  Var<T> operator()(Tape<T>& tape, const Var<T>& x_in, const std::optional<Var<T>>& z);
  // Per-network outputs, exposed for inspection by tests.
  Var<T> f1(Tape<T>& tape, const Var<T>& x_in);
  Var<T> f2(Tape<T>& tape, const Var<T>& z);

  bool conditional() const { return shapes_.z_dim > 0; }
  void parameters(ParamList<T>& out);
  Parameter<T>& alpha() { return *alpha_; }
  Parameter<T>& beta1() { return beta1_; }
  Parameter<T>& beta2() { return *beta2_; }
  Parameter<T>& bias() { return bias_; }

 private:
  Shapes shapes_;
  Conv2d<T> f1_in_;
  std::vector<ResidualBlock<T>> f1_blocks_;
  Conv2d<T> f1_out_;
  std::unique_ptr<Linear<T>> f2_project_;
  std::vector<Deconv2d<T>> f2_deconvs_;
  std::unique_ptr<Conv2d<T>> f2_out_;
  std::unique_ptr<Parameter<T>> alpha_;
  Parameter<T> beta1_;
  std::unique_ptr<Parameter<T>> beta2_;
  Parameter<T> bias_;
};

// Affine coupling layer driven by two ConditionerPairs. The log-scale is
// gate * tanh(l_z(x)), gate per channel and initialised to one; the shift is
// m_z(x) as is.
template <typename T>
class CouplingLayer {
 public:
  CouplingLayer(const std::string& name, Mask mask, std::size_t filters, std::size_t z_dim,
                const FlowConfig& config, Rng& rng);

  FlowResult<T> forward(Tape<T>& tape, const Var<T>& x, const std::optional<Var<T>>& z);
  Var<T> inverse(Tape<T>& tape, const Var<T>& y, const std::optional<Var<T>>& z);

  const Mask& mask() const { return mask_; }
  bool conditional() const { return scale_.conditional(); }
  ConditionerPair<T>& scale_net() { return scale_; }
  ConditionerPair<T>& shift_net() { return shift_; }
  void parameters(ParamList<T>& out);

 private:
  CouplingFn<T> conditioner(Tape<T>& tape, const std::optional<Var<T>>& z);
  Var<T> embed(Tape<T>& tape, const Var<T>& kept) const;
  Var<T> extract(const Var<T>& full) const;

  Mask mask_;
  Shape in_shape_;   // conditioner input per sample
  ConditionerPair<T> scale_;
  ConditionerPair<T> shift_;
  Parameter<T> gate_;
};

// Sequence of couplings and squeezes laid out per FlowConfig: within each
// scale, checkerboard couplings (parity 0, 1, 0, ...), a squeeze, then
// channel-wise couplings (parity 0, 1, 0, ...). There is no factoring out of
// variables between scales.
template <typename T>
class FlowStack {
 public:
  struct Squeeze {};
  using Step = std::variant<std::unique_ptr<CouplingLayer<T>>, Squeeze>;

  // `sample_shape` is [H, W, C] of the flow input.
  FlowStack(const FlowConfig& config, const Shape& sample_shape, std::size_t z_dim, Rng& rng);

  struct Trace {
    Var<T> y;
    Var<T> logdet;                     // [N], sum of layer terms in stack order
    std::vector<Var<T>> layer_logdets;  // one per coupling
  };

  Trace forward(Tape<T>& tape, const Var<T>& x, const std::optional<Var<T>>& z);
  Var<T> inverse(Tape<T>& tape, const Var<T>& y, const std::optional<Var<T>>& z);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  std::vector<Step>& steps() { return steps_; }
  std::size_t coupling_count() const;
  void parameters(ParamList<T>& out);

 private:
  void check_input(const Var<T>& x, const Shape& expected) const;

  Shape input_shape_;
  Shape output_shape_;
  std::vector<Step> steps_;
};

}  // namespace vapnev

#endif  // VAPNEV_FLOWS_HPP_
