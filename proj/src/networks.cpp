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

#include "vapnev/networks.hpp"

#include <algorithm>
#include <cmath>

#include "vapnev/errors.hpp"
#include "vapnev/flows.hpp"

namespace vapnev {

template <typename T>
Tensor<T> fan_in_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Tensor<T> out(shape);
  for (T& v : out.data()) v = static_cast<T>(bound * (2.0 * rng.uniform() - 1.0));
  return out;
}

template <typename T>
void randomize_parameters(const ParamList<T>& params, Rng& rng, double scale) {
  for (Parameter<T>* p : params) {
    for (T& v : p->value.data()) v = static_cast<T>(scale * rng.normal());
  }
}

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight_(name + ".weight", fan_in_uniform<T>({in, out}, in, rng)),
      bias_(name + ".bias", Tensor<T>({out})) {}

template <typename T>
Var<T> Linear<T>::operator()(Tape<T>& tape, const Var<T>& x) {
  if (x.value().rank() != 2 || x.dim(1) != weight_.value.dim(0)) {
    throw ShapeError("linear " + weight_.name + ": input " + shape_string(x.shape()));
  }
  return matmul(x, tape.param(weight_)) + tape.param(bias_);
}

template <typename T>
void Linear<T>::parameters(ParamList<T>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, std::size_t in_c, std::size_t out_c,
                  std::size_t kernel, std::size_t stride, Rng& rng)
    : kernel_(name + ".kernel",
              fan_in_uniform<T>({kernel, kernel, in_c, out_c}, kernel * kernel * in_c, rng)),
      bias_(name + ".bias", Tensor<T>({out_c})),
      stride_(stride) {}

template <typename T>
Var<T> Conv2d<T>::operator()(Tape<T>& tape, const Var<T>& x) {
  if (x.value().rank() != 4 || x.dim(3) != kernel_.value.dim(2)) {
    throw ShapeError("conv " + kernel_.name + ": input " + shape_string(x.shape()));
  }
  return conv2d(x, tape.param(kernel_), stride_, Padding::kSame) + tape.param(bias_);
}

template <typename T>
void Conv2d<T>::parameters(ParamList<T>& out) {
  out.push_back(&kernel_);
  out.push_back(&bias_);
}

template <typename T>
void Conv2d<T>::zero() {
  kernel_.value.fill(T{0});
  bias_.value.fill(T{0});
}

template <typename T>
Deconv2d<T>::Deconv2d(const std::string& name, std::size_t in_c, std::size_t out_c,
                      std::size_t kernel, std::size_t stride, Rng& rng)
    // Each output pixel sees about k*k/stride^2 input positions.
    : kernel_(name + ".kernel",
              fan_in_uniform<T>({kernel, kernel, out_c, in_c},
                                kernel * kernel * in_c / (stride * stride), rng)),
      bias_(name + ".bias", Tensor<T>({out_c})),
      stride_(stride) {}

template <typename T>
Var<T> Deconv2d<T>::operator()(Tape<T>& tape, const Var<T>& x) {
  if (x.value().rank() != 4 || x.dim(3) != kernel_.value.dim(3)) {
    throw ShapeError("deconv " + kernel_.name + ": input " + shape_string(x.shape()));
  }
  return deconv2d(x, tape.param(kernel_), stride_, Padding::kSame) + tape.param(bias_);
}

template <typename T>
void Deconv2d<T>::parameters(ParamList<T>& out) {
  out.push_back(&kernel_);
  out.push_back(&bias_);
}

template <typename T>
ResidualBlock<T>::ResidualBlock(const std::string& name, std::size_t channels,
                                std::size_t kernel, double leak, Rng& rng)
    : first_(name + ".conv0", channels, channels, kernel, 1, rng),
      second_(name + ".conv1", channels, channels, kernel, 1, rng),
      scale_(name + ".scale", Tensor<T>({channels})),
      leak_(static_cast<T>(leak)),
      channels_(channels) {}

template <typename T>
Var<T> ResidualBlock<T>::operator()(Tape<T>& tape, const Var<T>& x) {
  if (x.value().rank() != 4 || x.dim(3) != channels_) {
    throw ShapeError("residual block " + scale_.name + ": input " + shape_string(x.shape()));
  }
  const Var<T> branch = second_(tape, leaky_relu(first_(tape, x), leak_));
  return x + branch * tape.param(scale_);
}

template <typename T>
void ResidualBlock<T>::parameters(ParamList<T>& out) {
  first_.parameters(out);
  second_.parameters(out);
  out.push_back(&scale_);
}

template <typename T>
Encoder<T>::Encoder(const ModelConfig& config, Rng& rng) : config_(config) {
  const auto filters = config.encoder.filters();
  const auto strides = config.encoder.strides();
  std::size_t in_c = config.channels;
  for (std::size_t i = 0; i < filters.size(); ++i) {
    convs_.emplace_back("encoder.conv" + std::to_string(i), in_c, filters[i],
                        config.encoder.kernel, strides[i], rng);
    in_c = filters[i];
  }
  const std::size_t down = config.encoder.downsampling();
  const std::size_t flat = (config.height / down) * (config.width / down) * in_c;
  mean_head_ = std::make_unique<Linear<T>>("encoder.mean", flat, config.z_dim, rng);
  log_var_head_ = std::make_unique<Linear<T>>("encoder.log_var", flat, config.z_dim, rng);
}

template <typename T>
GaussianParams<T> Encoder<T>::operator()(Tape<T>& tape, const Var<T>& x) {
  const Shape expected = {config_.height, config_.width, config_.channels};
  if (x.value().rank() != 4 || Shape(x.shape().begin() + 1, x.shape().end()) != expected) {
    throw ShapeError("encoder input " + shape_string(x.shape()) + ", expected [N] + " +
                     shape_string(expected));
  }
  const T leak = static_cast<T>(config_.encoder.leak);
  Var<T> h = x;
  for (auto& conv : convs_) h = leaky_relu(conv(tape, h), leak);
  const std::size_t n = h.dim(0);
  const Var<T> flat = reshape(h, {n, h.value().size() / n});
  const T c = static_cast<T>(config_.log_var_clamp);
  return {(*mean_head_)(tape, flat), clamp((*log_var_head_)(tape, flat), -c, c)};
}

template <typename T>
void Encoder<T>::parameters(ParamList<T>& out) {
  for (auto& conv : convs_) conv.parameters(out);
  mean_head_->parameters(out);
  log_var_head_->parameters(out);
}

template <typename T>
Decoder<T>::Decoder(const ModelConfig& config, Rng& rng) : config_(config) {
  const auto filters = config.encoder.filters();
  const auto strides = config.encoder.strides();
  const std::size_t layers = filters.size();
  const std::size_t down = config.encoder.downsampling();
  start_h_ = config.height / down;
  start_w_ = config.width / down;
  start_c_ = filters.back();
  project_ = std::make_unique<Linear<T>>("decoder.project", config.z_dim,
                                         start_h_ * start_w_ * start_c_, rng);
  for (std::size_t j = 0; j < layers; ++j) {
    const std::size_t src = layers - 1 - j;
    const std::size_t dst = src == 0 ? 0 : src - 1;
    deconvs_.emplace_back("decoder.deconv" + std::to_string(j), filters[src], filters[dst],
                          config.encoder.kernel, strides[src], rng);
  }
  mean_head_ = std::make_unique<Conv2d<T>>("decoder.mean", filters.front(), config.channels,
                                           config.encoder.kernel, 1, rng);
  log_var_head_ = std::make_unique<Conv2d<T>>("decoder.log_var", filters.front(),
                                              config.channels, config.encoder.kernel, 1, rng);
}

template <typename T>
GaussianParams<T> Decoder<T>::operator()(Tape<T>& tape, const Var<T>& z) {
  if (z.value().rank() != 2 || z.dim(1) != config_.z_dim) {
    throw ShapeError("decoder input " + shape_string(z.shape()));
  }
  const T leak = static_cast<T>(config_.encoder.leak);
  const std::size_t n = z.dim(0);
  Var<T> h = leaky_relu(reshape((*project_)(tape, z), {n, start_h_, start_w_, start_c_}), leak);
  for (auto& deconv : deconvs_) h = leaky_relu(deconv(tape, h), leak);
  Var<T> mu = (*mean_head_)(tape, h);
  Var<T> log_var = (*log_var_head_)(tape, h);
  for (std::size_t i = 0; i < config_.flow.squeeze_count(); ++i) {
    mu = squeeze(mu);
    log_var = squeeze(log_var);
  }
  const T c = static_cast<T>(config_.log_var_clamp);
  return {mu, clamp(log_var, -c, c)};
}

template <typename T>
void Decoder<T>::parameters(ParamList<T>& out) {
  project_->parameters(out);
  for (auto& deconv : deconvs_) deconv.parameters(out);
  mean_head_->parameters(out);
  log_var_head_->parameters(out);
}

template <typename T>
Shape Decoder<T>::output_shape() const {
  Shape s = {config_.height, config_.width, config_.channels};
  for (std::size_t i = 0; i < config_.flow.squeeze_count(); ++i) s = squeezed_shape(s);
  return s;
}

#define VAPNEV_INSTANTIATE_NETWORKS(T)                                            \
  template Tensor<T> fan_in_uniform<T>(const Shape&, std::size_t, Rng&);          \
  template void randomize_parameters<T>(const ParamList<T>&, Rng&, double);       \
  template class Linear<T>;                                                       \
  template class Conv2d<T>;                                                       \
  template class Deconv2d<T>;                                                     \
  template class ResidualBlock<T>;                                                \
  template class Encoder<T>;                                                      \
  template class Decoder<T>;

VAPNEV_INSTANTIATE_NETWORKS(float)
VAPNEV_INSTANTIATE_NETWORKS(double)

}  // namespace vapnev
