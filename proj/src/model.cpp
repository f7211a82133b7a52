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

#include "vapnev/model.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "vapnev/errors.hpp"
#include "vapnev/ops.hpp"

namespace vapnev {
namespace {

double mean_of(const std::vector<double>& v) {
  double acc = 0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

template <typename T>
std::vector<double> to_doubles(const Var<T>& v) {
  return std::vector<double>(v.value().data().begin(), v.value().data().end());
}

template <typename T>
void require_finite(const Var<T>& v, const char* term) {
  if (!v.value().all_finite()) throw NumericsError(term, "shape " + shape_string(v.shape()));
}

template <typename T>
Shape batch_shape(std::size_t n, const Shape& sample) {
  Shape s{n};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

}  // namespace

ElboBreakdown::Means ElboBreakdown::means() const {
  return {mean_of(recon_ll), mean_of(flow_logdet), mean_of(kl), mean_of(correction),
          mean_of(elbo)};
}

void ElboBreakdown::append(const ElboBreakdown& o) {
  recon_ll.insert(recon_ll.end(), o.recon_ll.begin(), o.recon_ll.end());
  flow_logdet.insert(flow_logdet.end(), o.flow_logdet.begin(), o.flow_logdet.end());
  kl.insert(kl.end(), o.kl.begin(), o.kl.end());
  correction.insert(correction.end(), o.correction.begin(), o.correction.end());
  elbo.insert(elbo.end(), o.elbo.begin(), o.elbo.end());
}

double bits_per_dim(double elbo, double correction, std::size_t dims) {
  if (dims == 0) throw ContractError("bits_per_dim needs D >= 1");
  return -(elbo + correction) / (static_cast<double>(dims) * std::numbers::ln2);
}

double bits_per_dim(const ElboBreakdown& b, std::size_t dims) {
  const auto m = b.means();
  return bits_per_dim(m.elbo, m.correction, dims);
}

double kl_anneal_weight(std::uint64_t step, std::uint64_t warmup) {
  if (warmup == 0 || step >= warmup) return 1.0;
  return static_cast<double>(step) / static_cast<double>(warmup);
}

PreparedBatch prepare_batch(const ImageBatch& batch, double alpha, Rng& rng, bool augment) {
  if (batch.domain == Domain::kLogitSpace) {
    return {batch.pixels, std::vector<double>(batch.count(), 0.0)};
  }
  double offset = 0.0;
  ImageBatch unit = batch;
  if (batch.domain == Domain::kDiscreteU8) {
    unit = dequantize(batch, rng);
    offset = -static_cast<double>(batch.dims_per_image()) * std::log(256.0);
  }
  if (augment) unit = hflip_augment(unit, rng);
  LogitResult lr = logit_transform(unit, alpha);
  for (double& c : lr.correction) c += offset;
  return {std::move(lr.batch.pixels), std::move(lr.correction)};
}

template <typename T>
ElboBreakdown breakdown_of(const ElboGraph<T>& g, const std::vector<double>& correction) {
  ElboBreakdown b{to_doubles(g.recon_ll), to_doubles(g.flow_logdet), to_doubles(g.kl),
                  correction, to_doubles(g.elbo)};
  if (b.correction.size() != b.elbo.size()) throw ContractError("correction size mismatch");
  return b;
}

template <typename T>
VapnevModel<T>::VapnevModel(const ModelConfig& config, Rng& init_rng) : config_(config) {
  config_.validate();
  const Shape image = {config.height, config.width, config.channels};
  if (config.vae) {
    encoder_ = std::make_unique<Encoder<T>>(config, init_rng);
  }
  flow_ = std::make_unique<FlowStack<T>>(config.flow, image, config.vae ? config.z_dim : 0,
                                         init_rng);
  if (config.vae) {
    decoder_ = std::make_unique<Decoder<T>>(config, init_rng);
    if (decoder_->output_shape() != flow_->output_shape()) {
      throw ShapeError("decoder heads " + shape_string(decoder_->output_shape()) +
                       " do not match the flow output " + shape_string(flow_->output_shape()));
    }
  }
}

template <typename T>
std::optional<Var<T>> VapnevModel<T>::flow_z(const Var<T>& z) const {
  if (z.valid()) return z;
  return std::nullopt;
}

template <typename T>
ElboGraph<T> VapnevModel<T>::elbo(Tape<T>& tape, const Tensor<T>& x, Rng& rng, double kl_weight) {
  if (!(kl_weight >= 0.0 && kl_weight <= 1.0)) throw ContractError("kl_weight must lie in [0, 1]");
  if (!x.all_finite()) throw NumericsError("input", "non-finite flow-space input");
  const std::size_t n = x.dim(0);
  const Var<T> xv = tape.constant(x);
  ElboGraph<T> g;
  Var<T> z;
  GaussianParams<T> prior;
  if (config_.vae) {
    const GaussianParams<T> q = (*encoder_)(tape, xv);
    require_finite(q.mu, "encoder");
    require_finite(q.log_var, "encoder");
    z = reparam_sample(q, rng);
    g.kl = kl_to_standard_normal(q);
    require_finite(g.kl, "kl");
    prior = (*decoder_)(tape, z);
    require_finite(prior.mu, "decoder");
    require_finite(prior.log_var, "decoder");
  } else {
    const Shape y_shape = batch_shape<T>(n, flow_->output_shape());
    prior = {tape.constant(Tensor<T>(y_shape)), tape.constant(Tensor<T>(y_shape))};
    g.kl = tape.constant(Tensor<T>({n}));
  }
  typename FlowStack<T>::Trace trace;
  try {
    trace = flow_->forward(tape, xv, flow_z(z));
  } catch (const DomainError& e) {
    throw NumericsError("flow", e.what());
  }
  require_finite(trace.y, "flow");
  g.flow_logdet = trace.logdet;
  require_finite(g.flow_logdet, "flow_logdet");
  g.recon_ll = diag_gaussian_log_prob(trace.y, prior);
  require_finite(g.recon_ll, "recon_ll");
  const Var<T> data_term = g.recon_ll + g.flow_logdet;
  g.elbo = data_term - g.kl;
  const Var<T> objective =
      kl_weight == 0.0 ? data_term : data_term - mul_scalar(g.kl, static_cast<T>(kl_weight));
  g.loss = neg(mean(objective));
  require_finite(g.loss, "loss");
  return g;
}

template <typename T>
ImageBatch VapnevModel<T>::to_output(const Tensor<T>& x) const {
  ImageBatch logit{x.template cast<double>(), Domain::kLogitSpace};
  if (!config_.vae) return logit;
  return inverse_logit_transform(logit, config_.alpha);
}

template <typename T>
ImageBatch VapnevModel<T>::decode(Tape<T>& tape, std::size_t n, const Var<T>& z, Rng& rng,
                                  bool deterministic_y) {
  GaussianParams<T> p;
  if (config_.vae) {
    p = (*decoder_)(tape, z);
  } else {
    const Shape y_shape = batch_shape<T>(n, flow_->output_shape());
    p = {tape.constant(Tensor<T>(y_shape)), tape.constant(Tensor<T>(y_shape))};
  }
  const Var<T> y = deterministic_y ? p.mu : reparam_sample(p, rng);
  return to_output(flow_->inverse(tape, y, flow_z(z)).value());
}

template <typename T>
ImageBatch VapnevModel<T>::generate(std::size_t n, Rng& rng, bool deterministic_y) {
  if (n == 0) throw ContractError("generate needs n >= 1");
  Tape<T> tape;
  tape.set_grad_enabled(false);
  Var<T> z;
  if (config_.vae) z = tape.constant(standard_normal<T>({n, config_.z_dim}, rng));
  return decode(tape, n, z, rng, deterministic_y);
}

template <typename T>
ImageBatch VapnevModel<T>::reconstruct(const ImageBatch& x, Rng& rng, bool deterministic_y) {
  if (!config_.vae) throw ContractError("reconstruction needs an encoder");
  if (x.domain == Domain::kLogitSpace) {
    throw DomainError("reconstruct expects discrete or unit-interval images");
  }
  const PreparedBatch prepared = prepare_batch(x, config_.alpha, rng, false);
  Tape<T> tape;
  tape.set_grad_enabled(false);
  const GaussianParams<T> q = (*encoder_)(tape, tape.constant(prepared.x.template cast<T>()));
  return decode(tape, x.count(), reparam_sample(q, rng), rng, deterministic_y);
}

template <typename T>
ElboBreakdown VapnevModel<T>::evaluate(const ImageBatch& data, Rng& rng, std::size_t batch) {
  if (batch == 0) throw ContractError("evaluation batch must be >= 1");
  ElboBreakdown out;
  for (std::size_t start = 0; start < data.count(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.count(), start + batch); ++i) idx.push_back(i);
    const PreparedBatch prepared =
        prepare_batch(select_images(data, idx), config_.alpha, rng, false);
    Tape<T> tape;
    tape.set_grad_enabled(false);
    const ElboGraph<T> g = elbo(tape, prepared.x.template cast<T>(), rng, 1.0);
    out.append(breakdown_of(g, prepared.correction));
  }
  return out;
}

template <typename T>
ParamList<T> VapnevModel<T>::parameters() {
  ParamList<T> out;
  if (encoder_) encoder_->parameters(out);
  flow_->parameters(out);
  if (decoder_) decoder_->parameters(out);
  return out;
}

template <typename T>
void VapnevModel<T>::zero_grad() {
  for (Parameter<T>* p : parameters()) p->zero_grad();
}

const char* metrics_header() { return "step,elbo,recon_ll,flow_logdet,kl,bits_per_dim"; }

std::string format_metrics(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<unsigned long long>(r.step), r.elbo, r.recon_ll, r.flow_logdet, r.kl,
                r.bits_per_dim);
  return buf;
}

template <typename T>
Trainer<T>::Trainer(const RunConfig& config)
    : config_(config),
      init_rng_(config.train.seed),
      model_(config.model, init_rng_),
      params_(model_.parameters()),
      rng_(config.train.seed ^ 0x9e3779b97f4a7c15ULL) {
  config_.train.validate();
}

template <typename T>
MetricsRow Trainer<T>::step(const ImageBatch& data) {
  if (data.count() == 0) throw ContractError("training needs a non-empty dataset");
  std::vector<std::size_t> idx(config_.train.batch);
  for (auto& i : idx) i = static_cast<std::size_t>(rng_.below(data.count()));
  const PreparedBatch prepared = prepare_batch(select_images(data, idx), config_.model.alpha, rng_,
                                               config_.train.hflip);
  const double w = kl_anneal_weight(step_, config_.train.warmup);
  Tape<T> tape;
  const ElboGraph<T> g = model_.elbo(tape, prepared.x.template cast<T>(), rng_, w);
  for (Parameter<T>* p : params_) p->zero_grad();
  tape.backward(g.loss);
  adam_step(params_, adam_, config_.train.adam);
  const ElboBreakdown b = breakdown_of(g, prepared.correction);
  const auto m = b.means();
  MetricsRow row{step_, m.elbo, m.recon_ll, m.flow_logdet, m.kl,
                 bits_per_dim(m.elbo, m.correction, config_.model.dims())};
  ++step_;
  return row;
}

#define VAPNEV_INSTANTIATE_MODEL(T)                                                   \
  template class VapnevModel<T>;                                                      \
  template class Trainer<T>;                                                          \
  template ElboBreakdown breakdown_of<T>(const ElboGraph<T>&, const std::vector<double>&);

VAPNEV_INSTANTIATE_MODEL(float)
VAPNEV_INSTANTIATE_MODEL(double)

}  // namespace vapnev
