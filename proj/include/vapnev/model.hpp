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

#ifndef VAPNEV_MODEL_HPP_
#define VAPNEV_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vapnev/adam.hpp"
#include "vapnev/autodiff.hpp"
#include "vapnev/config.hpp"
#include "vapnev/data.hpp"
#include "vapnev/distributions.hpp"
#include "vapnev/flows.hpp"
#include "vapnev/networks.hpp"
#include "vapnev/rng.hpp"

namespace vapnev {

// Per-sample ELBO terms in nats. `correction` is the log-Jacobian of the
// preprocessing (logit transform and the 1/256 scaling from pixel units),
// applied only when reporting likelihoods of the original data.
struct ElboBreakdown {
  std::vector<double> recon_ll;
  std::vector<double> flow_logdet;
  std::vector<double> kl;
  std::vector<double> correction;
  std::vector<double> elbo;  // recon_ll + flow_logdet - kl

  struct Means {
    double recon_ll = 0, flow_logdet = 0, kl = 0, correction = 0, elbo = 0;
  };

  std::size_t count() const { return elbo.size(); }
  Means means() const;
  void append(const ElboBreakdown& other);
};

// -(elbo + correction) / (D ln 2).
double bits_per_dim(double elbo, double correction, std::size_t dims);
double bits_per_dim(const ElboBreakdown& breakdown, std::size_t dims);

// min(1, step / warmup); constant 1 when warmup is 0.
double kl_anneal_weight(std::uint64_t step, std::uint64_t warmup);

// Flow-space batch ready for the model.
struct PreparedBatch {
  Tensor<double> x;                 // [N, H, W, C]
  std::vector<double> correction;   // per sample, nats
};

// Discrete pixels are dequantized with fresh noise, optionally flipped, and
// logit transformed; the correction then includes -D ln 256. Unit-interval
// input skips dequantization. Logit-space input passes through unchanged.
PreparedBatch prepare_batch(const ImageBatch& batch, double alpha, Rng& rng, bool augment);

template <typename T>
struct ElboGraph {
  Var<T> recon_ll;     // [N]
  Var<T> flow_logdet;  // [N]
  Var<T> kl;           // [N]
  Var<T> elbo;         // [N]
  Var<T> loss;         // -mean(recon_ll + flow_logdet - kl_weight * kl)
};

// Encoder, conditional flow and decoder. Without the VAE part (a plain flow
// over real-valued points) the base is N(0, I) and there is no z.
template <typename T>
class VapnevModel {
 public:
  VapnevModel(const ModelConfig& config, Rng& init_rng);

  // One reparameterised sample of z per example. Non-finite values raise
  // NumericsError naming the first failing term.
  ElboGraph<T> elbo(Tape<T>& tape, const Tensor<T>& x, Rng& rng, double kl_weight);

  // Samples decoded through the inverse flow. Image models return the
  // unit-interval domain, point models the logit-space domain.
  ImageBatch generate(std::size_t n, Rng& rng, bool deterministic_y);
  ImageBatch reconstruct(const ImageBatch& x, Rng& rng, bool deterministic_y);

  // kl_weight 1, fresh dequantization noise, no augmentation.
  ElboBreakdown evaluate(const ImageBatch& data, Rng& rng, std::size_t batch = 64);

  const ModelConfig& config() const { return config_; }
  FlowStack<T>& flow() { return *flow_; }
  Encoder<T>* encoder() { return encoder_.get(); }
  Decoder<T>* decoder() { return decoder_.get(); }
  ParamList<T> parameters();
  void zero_grad();

 private:
  std::optional<Var<T>> flow_z(const Var<T>& z) const;
  ImageBatch decode(Tape<T>& tape, std::size_t n, const Var<T>& z, Rng& rng,
                    bool deterministic_y);
  ImageBatch to_output(const Tensor<T>& x) const;

  ModelConfig config_;
  std::unique_ptr<Encoder<T>> encoder_;
  std::unique_ptr<Decoder<T>> decoder_;
  std::unique_ptr<FlowStack<T>> flow_;
};

template <typename T>
ElboBreakdown breakdown_of(const ElboGraph<T>& graph, const std::vector<double>& correction);

// One row of the metrics log.
struct MetricsRow {
  std::uint64_t step = 0;
  double elbo = 0, recon_ll = 0, flow_logdet = 0, kl = 0, bits_per_dim = 0;
  bool operator==(const MetricsRow&) const = default;
};

const char* metrics_header();            // "step,elbo,recon_ll,flow_logdet,kl,bits_per_dim"
std::string format_metrics(const MetricsRow& row);  // %.17g fields

// Owns the model, optimiser state and the training RNG stream.
template <typename T>
class Trainer {
 public:
  // Parameters are initialised from `config.train.seed`; the training stream
  // (batch selection, dequantization, flips, z noise) is seeded separately.
  explicit Trainer(const RunConfig& config);

  // One ELBO -> backward -> ADAM update on a batch drawn with replacement.
  // On NumericsError the parameters are left as they were.
  MetricsRow step(const ImageBatch& data);

  const RunConfig& config() const { return config_; }
  VapnevModel<T>& model() { return model_; }
  AdamState<T>& adam() { return adam_; }
  Rng& rng() { return rng_; }
  std::uint64_t steps_done() const { return step_; }
  void set_steps_done(std::uint64_t s) { step_ = s; }
  // Changes only the recorded budget; used when a resumed run is extended.
  void set_step_budget(std::size_t steps) { config_.train.steps = steps; }

 private:
  RunConfig config_;
  Rng init_rng_;
  VapnevModel<T> model_;
  ParamList<T> params_;
  AdamState<T> adam_;
  Rng rng_;
  std::uint64_t step_ = 0;
};

extern template class VapnevModel<float>;
extern template class VapnevModel<double>;
extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace vapnev

#endif  // VAPNEV_MODEL_HPP_
