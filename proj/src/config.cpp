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

#include "vapnev/config.hpp"

#include <algorithm>

#include "json.hpp"
#include "vapnev/errors.hpp"

namespace vapnev {

using nlohmann::json;

std::vector<std::size_t> EncoderConfig::filters() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers; ++i) out.push_back(base_filters << (i / 2));
  return out;
}

std::vector<std::size_t> EncoderConfig::strides() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers; ++i) out.push_back(i % 2 == 1 ? 2 : 1);
  return out;
}

std::size_t EncoderConfig::downsampling() const {
  std::size_t f = 1;
  for (std::size_t s : strides()) f *= s;
  return f;
}

std::size_t FlowConfig::coupling_count() const {
  std::size_t n = 0;
  for (const auto& s : scales) n += s.checkerboard + s.channelwise;
  return n;
}

std::size_t FlowConfig::squeeze_count() const {
  return static_cast<std::size_t>(
      std::count_if(scales.begin(), scales.end(), [](const auto& s) { return s.squeeze; }));
}

bool FlowConfig::layer_conditional(std::size_t coupling_index) const {
  return conditional && std::find(unconditioned_layers.begin(), unconditioned_layers.end(),
                                  coupling_index) == unconditioned_layers.end();
}

void ModelConfig::validate() const {
  if (height == 0 || width == 0 || channels == 0) throw ConfigError("image extents must be positive");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  if (flow.scales.empty()) throw ConfigError("flow needs at least one scale");
  if (flow.coupling_count() == 0) throw ConfigError("flow needs at least one coupling layer");
  const std::size_t factor = std::size_t{1} << flow.squeeze_count();
  if (height % factor != 0 || width % factor != 0) {
    throw ConfigError("image extents must be divisible by 2^(number of squeezes)");
  }
  if (vae) {
    if (z_dim == 0) throw ConfigError("z_dim must be >= 1");
    if (encoder.layers == 0 || encoder.base_filters == 0) throw ConfigError("encoder must have layers");
    const std::size_t down = encoder.downsampling();
    if (height % down != 0 || width % down != 0) {
      throw ConfigError("image extents must be divisible by the encoder downsampling factor");
    }
  }
  if (!vae && flow.conditional && flow.unconditioned_layers.size() < flow.coupling_count()) {
    throw ConfigError("a flow without a VAE cannot condition on z");
  }
  for (const auto& s : flow.scales) {
    if (s.filters == 0) throw ConfigError("coupling filters must be positive");
  }
  if (log_var_clamp <= 0) throw ConfigError("log_var_clamp must be positive");
}

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("batch must be >= 1");
  if (!(adam.lr > 0)) throw ConfigError("learning rate must be positive");
}

RunConfig preset(const std::string& name) {
  RunConfig rc;
  ModelConfig& m = rc.model;
  TrainConfig& t = rc.train;
  m.preset = name;
  if (name == "full") {
    m.flow.scales = {{3, 3, 64, true}, {3, 3, 128, true}};
    t.warmup = 10000;
    t.steps = 100000;
  } else if (name == "desk") {
    m.height = m.width = 8;
    m.encoder.layers = 4;
    m.encoder.base_filters = 16;
    m.z_dim = 64;
    m.flow.scales = {{2, 2, 16, true}};
    t.warmup = 500;
    t.steps = 20000;
  } else if (name == "toy2d") {
    m.height = 1;
    m.width = 1;
    m.channels = 2;
    m.vae = false;
    m.z_dim = 0;
    m.flow.scales = {{0, 8, 32, false}};
    m.flow.kernel = 1;
    m.flow.conditional = false;
    t.warmup = 0;
    t.steps = 5000;
    t.batch = 256;
    t.hflip = false;
  } else if (name == "tiny") {
    m.height = m.width = 4;
    m.channels = 1;
    m.encoder.layers = 2;
    m.encoder.base_filters = 2;
    m.z_dim = 4;
    m.flow.scales = {{1, 1, 2, true}};
    t.warmup = 10;
    t.steps = 100;
    t.batch = 4;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  m.validate();
  return rc;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"full", "desk", "toy2d", "tiny"};
  return names;
}

std::string to_canonical_text(const RunConfig& config) {
  const ModelConfig& m = config.model;
  const TrainConfig& t = config.train;
  json scales = json::array();
  for (const auto& s : m.flow.scales) {
    scales.push_back({{"checkerboard", s.checkerboard},
                      {"channelwise", s.channelwise},
                      {"filters", s.filters},
                      {"squeeze", s.squeeze}});
  }
  json j = {
      {"model",
       {{"preset", m.preset},
        {"height", m.height},
        {"width", m.width},
        {"channels", m.channels},
        {"vae", m.vae},
        {"z_dim", m.z_dim},
        {"alpha", m.alpha},
        {"log_var_clamp", m.log_var_clamp},
        {"encoder",
         {{"layers", m.encoder.layers},
          {"base_filters", m.encoder.base_filters},
          {"kernel", m.encoder.kernel},
          {"leak", m.encoder.leak}}},
        {"flow",
         {{"scales", scales},
          {"residual_blocks", m.flow.residual_blocks},
          {"kernel", m.flow.kernel},
          {"leak", m.flow.leak},
          {"conditional", m.flow.conditional},
          {"unconditioned_layers", m.flow.unconditioned_layers}}}}},
      {"train",
       {{"batch", t.batch},
        {"steps", t.steps},
        {"warmup", t.warmup},
        {"seed", t.seed},
        {"hflip", t.hflip},
        {"checkpoint_every", t.checkpoint_every},
        {"adam",
         {{"lr", t.adam.lr}, {"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}}}}}};
  return j.dump(1);
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig rc;
  try {
    const json j = json::parse(text);
    const json& jm = j.at("model");
    ModelConfig& m = rc.model;
    m.preset = jm.at("preset").get<std::string>();
    m.height = jm.at("height").get<std::size_t>();
    m.width = jm.at("width").get<std::size_t>();
    m.channels = jm.at("channels").get<std::size_t>();
    m.vae = jm.at("vae").get<bool>();
    m.z_dim = jm.at("z_dim").get<std::size_t>();
    m.alpha = jm.at("alpha").get<double>();
    m.log_var_clamp = jm.at("log_var_clamp").get<double>();
    const json& je = jm.at("encoder");
    m.encoder.layers = je.at("layers").get<std::size_t>();
    m.encoder.base_filters = je.at("base_filters").get<std::size_t>();
    m.encoder.kernel = je.at("kernel").get<std::size_t>();
    m.encoder.leak = je.at("leak").get<double>();
    const json& jf = jm.at("flow");
    for (const json& s : jf.at("scales")) {
      m.flow.scales.push_back({s.at("checkerboard").get<std::size_t>(), s.at("channelwise").get<std::size_t>(),
                               s.at("filters").get<std::size_t>(), s.at("squeeze").get<bool>()});
    }
    m.flow.residual_blocks = jf.at("residual_blocks").get<std::size_t>();
    m.flow.kernel = jf.at("kernel").get<std::size_t>();
    m.flow.leak = jf.at("leak").get<double>();
    m.flow.conditional = jf.at("conditional").get<bool>();
    m.flow.unconditioned_layers = jf.at("unconditioned_layers").get<std::vector<std::size_t>>();
    const json& jt = j.at("train");
    TrainConfig& t = rc.train;
    t.batch = jt.at("batch").get<std::size_t>();
    t.steps = jt.at("steps").get<std::size_t>();
    t.warmup = jt.at("warmup").get<std::size_t>();
    t.seed = jt.at("seed").get<std::uint64_t>();
    t.hflip = jt.at("hflip").get<bool>();
    t.checkpoint_every = jt.at("checkpoint_every").get<std::size_t>();
    const json& ja = jt.at("adam");
    t.adam = {ja.at("lr").get<double>(), ja.at("beta1").get<double>(), ja.at("beta2").get<double>(),
              ja.at("eps").get<double>()};
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid config text: ") + e.what());
  }
  rc.model.validate();
  rc.train.validate();
  return rc;
}

}  // namespace vapnev
