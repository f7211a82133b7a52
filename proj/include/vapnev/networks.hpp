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

#ifndef VAPNEV_NETWORKS_HPP_
#define VAPNEV_NETWORKS_HPP_

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "vapnev/autodiff.hpp"
#include "vapnev/config.hpp"
#include "vapnev/distributions.hpp"
#include "vapnev/ops.hpp"
#include "vapnev/rng.hpp"

namespace vapnev {

// Uniform(-b, b) with b = sqrt(3 / fan_in), i.e. variance 1 / fan_in.
template <typename T>
Tensor<T> fan_in_uniform(const Shape& shape, std::size_t fan_in, Rng& rng);

// Overwrites every parameter with scale * N(0, 1). Used by verification code
// to move away from the identity-at-init configuration.
template <typename T>
void randomize_parameters(const ParamList<T>& params, Rng& rng, double scale);

// [N, in] -> [N, out]
template <typename T>
class Linear {
 public:
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Var<T> operator()(Tape<T>& tape, const Var<T>& x);
  void parameters(ParamList<T>& out);
  Parameter<T>& weight() { return weight_; }

 private:
  Parameter<T> weight_;  // [in, out]
  Parameter<T> bias_;    // [out]
};

template <typename T>
class Conv2d {
 public:
  Conv2d(const std::string& name, std::size_t in_c, std::size_t out_c, std::size_t kernel,
         std::size_t stride, Rng& rng);
  Var<T> operator()(Tape<T>& tape, const Var<T>& x);
  void parameters(ParamList<T>& out);
  void zero();

 private:
  Parameter<T> kernel_;  // [k, k, in_c, out_c]
  Parameter<T> bias_;    // [out_c]
  std::size_t stride_;
};

// Same-padded transposed convolution: H -> H * stride.
template <typename T>
class Deconv2d {
 public:
  Deconv2d(const std::string& name, std::size_t in_c, std::size_t out_c, std::size_t kernel,
           std::size_t stride, Rng& rng);
  Var<T> operator()(Tape<T>& tape, const Var<T>& x);
  void parameters(ParamList<T>& out);

 private:
  Parameter<T> kernel_;  // [k, k, out_c, in_c]
  Parameter<T> bias_;
  std::size_t stride_;
};

// x + scale * conv(act(conv(x))), scale per channel and zero at init so the
// block starts as the identity.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock(const std::string& name, std::size_t channels, std::size_t kernel, double leak,
                Rng& rng);
  Var<T> operator()(Tape<T>& tape, const Var<T>& x);
  void parameters(ParamList<T>& out);

 private:
  Conv2d<T> first_;
  Conv2d<T> second_;
  Parameter<T> scale_;
  T leak_;
  std::size_t channels_;
};

// Posterior q(z|x): conv stack then two linear heads for mean and log-variance.
template <typename T>
class Encoder {
 public:
  Encoder(const ModelConfig& config, Rng& rng);
  // x: [N, H, W, C] logit-space images -> mu, log_var each [N, z_dim]
  GaussianParams<T> operator()(Tape<T>& tape, const Var<T>& x);
  void parameters(ParamList<T>& out);

 private:
  ModelConfig config_;
  std::vector<Conv2d<T>> convs_;
  std::unique_ptr<Linear<T>> mean_head_;
  std::unique_ptr<Linear<T>> log_var_head_;
};

// Mirror of the encoder from z to feature maps at image resolution, then two
// linear convolutional heads. The head outputs are squeezed once per flow
// squeeze, so they match the flow output Y exactly.
template <typename T>
class Decoder {
 public:
  Decoder(const ModelConfig& config, Rng& rng);
  GaussianParams<T> operator()(Tape<T>& tape, const Var<T>& z);
  void parameters(ParamList<T>& out);
  Shape output_shape() const;  // [H', W', C'] of each head

 private:
  ModelConfig config_;
  std::size_t start_h_, start_w_, start_c_;
  std::unique_ptr<Linear<T>> project_;
  std::vector<Deconv2d<T>> deconvs_;
  std::unique_ptr<Conv2d<T>> mean_head_;
  std::unique_ptr<Conv2d<T>> log_var_head_;
};

}  // namespace vapnev

#endif  // VAPNEV_NETWORKS_HPP_
