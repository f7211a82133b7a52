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

#ifndef VAPNEV_CONFIG_HPP_
#define VAPNEV_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vapnev/adam.hpp"

namespace vapnev {

// Convolutional encoder. Layer i (0-based) has base_filters * 2^(i/2)
// filters; odd layers use stride 2, so every second layer halves the
// resolution. The decoder mirrors this schedule.
struct EncoderConfig {
  std::size_t layers = 8;
  std::size_t base_filters = 32;
  std::size_t kernel = 3;
  double leak = 0.01;

  std::vector<std::size_t> filters() const;
  std::vector<std::size_t> strides() const;
  std::size_t downsampling() const;  // product of strides
};

// One scale of the flow: `checkerboard` couplings with alternating parity,
// an optional squeeze, then `channelwise` couplings with alternating parity.
struct FlowScaleConfig {
  std::size_t checkerboard = 3;
  std::size_t channelwise = 3;
  std::size_t filters = 64;
  bool squeeze = true;
};

struct FlowConfig {
  std::vector<FlowScaleConfig> scales;
  std::size_t residual_blocks = 2;
  std::size_t kernel = 3;
  double leak = 0.01;
  // Conditioning on z for every coupling, except the listed layer indices
  // (counted over couplings in stack order).
  bool conditional = true;
  std::vector<std::size_t> unconditioned_layers;

  std::size_t coupling_count() const;
  std::size_t squeeze_count() const;
  bool layer_conditional(std::size_t coupling_index) const;
};

struct ModelConfig {
  std::string preset;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  // false: a plain flow with a standard-normal base and no encoder/decoder.
  bool vae = true;
  EncoderConfig encoder;
  std::size_t z_dim = 256;
  FlowConfig flow;
  double alpha = 0.05;
  double log_var_clamp = 15.0;

  std::size_t dims() const { return height * width * channels; }
  void validate() const;  // ConfigError on inconsistent settings
};

struct TrainConfig {
  std::size_t batch = 64;
  std::size_t steps = 1000;
  std::size_t warmup = 500;
  std::uint64_t seed = 0;
  AdamConfig adam;
  bool hflip = true;
  std::size_t checkpoint_every = 0;  // 0: only at the end

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// Named presets: "full" (32x32x3, full architecture), "desk" (8x8x3,
// reduced), "toy2d" (2-D unconditional flow), "tiny" (4x4x1, z_dim 4, for
// gradient verification).
RunConfig preset(const std::string& name);
const std::vector<std::string>& preset_names();

// Canonical sorted-key JSON text, and its inverse.
std::string to_canonical_text(const RunConfig& config);
RunConfig parse_config_text(const std::string& text);

}  // namespace vapnev

#endif  // VAPNEV_CONFIG_HPP_
