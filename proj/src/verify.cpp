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

#include "vapnev/verify.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "vapnev/config.hpp"
#include "vapnev/distributions.hpp"
#include "vapnev/flows.hpp"
#include "vapnev/model.hpp"
#include "vapnev/networks.hpp"

namespace vapnev {
namespace {

std::string format(const char* fmt, double a, double b = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

FlowConfig stack_config(std::size_t checkerboard, std::size_t channelwise, bool squeeze) {
  FlowConfig c;
  c.scales = {{checkerboard, channelwise, 4, squeeze}};
  c.residual_blocks = 1;
  return c;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor<double> normals(const Shape& s, Rng& rng, double scale = 1.0) {
  Tensor<double> t = standard_normal<double>(s, rng);
  for (double& v : t.data()) v *= scale;
  return t;
}

}  // namespace

CheckResult check_invertibility(const VerifyOptions& o) {
  const ModelConfig desk = preset("desk").model;
  const Shape image = {desk.height, desk.width, desk.channels};
  Rng rng(o.seed + 101);
  const int trials = o.quick ? 5 : 100;
  double worst = 0, moved = 0;
  for (int t = 0; t < trials; ++t) {
    FlowStack<double> stack(desk.flow, image, desk.z_dim, rng);
    ParamList<double> params;
    stack.parameters(params);
    randomize_parameters(params, rng, 0.15);
    Tape<double> tape;
    tape.set_grad_enabled(false);
    const Tensor<double> x = normals({2, desk.height, desk.width, desk.channels}, rng, 2.0);
    const auto z = tape.constant(normals({2, desk.z_dim}, rng));
    const auto y = stack.forward(tape, tape.constant(x), z).y;
    worst = std::max(worst, max_abs_diff(stack.inverse(tape, y, z).value(), x));
    moved = std::max(moved, max_abs_diff(unsqueeze(y).value(), x));
  }
  return {"invertibility", worst < 1e-9, worst, 1e-9,
          format("max |f^-1(f(x)) - x| over %.0f desk stacks (max |f(x) - x| = %.3g)", trials,
                 moved)};
}

CheckResult check_logdet(const VerifyOptions& o) {
  Rng rng(o.seed + 202);
  const int per_d = o.quick ? 3 : 20;
  struct Case { Shape shape; FlowConfig config; };
  const std::vector<Case> cases = {
      {{1, 1, 2}, stack_config(0, 2, false)},
      {{2, 2, 1}, stack_config(2, 2, true)},
      {{2, 2, 2}, stack_config(2, 2, true)},
      {{4, 4, 1}, stack_config(2, 2, true)},
  };
  double worst = 0;
  for (const Case& c : cases) {
    const std::size_t d = shape_volume(c.shape);
    for (int t = 0; t < per_d; ++t) {
      FlowStack<double> stack(c.config, c.shape, 3, rng);
      ParamList<double> params;
      stack.parameters(params);
      randomize_parameters(params, rng, 0.3);
      const Tensor<double> z = normals({1, 3}, rng);
      const Tensor<double> x = normals(Shape{1, c.shape[0], c.shape[1], c.shape[2]}, rng);
      auto f = [&](const Eigen::VectorXd& v) {
        Tape<double> tape;
        tape.set_grad_enabled(false);
        Tensor<double> in(x.shape(), std::vector<double>(v.data(), v.data() + v.size()));
        const auto y = stack.forward(tape, tape.constant(in), tape.constant(z)).y.value();
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(y.raw(), static_cast<long>(d)));
      };
      const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(x.raw(), static_cast<long>(d));
      Eigen::MatrixXd jac(d, d);
      const double h = 1e-6;
      for (std::size_t j = 0; j < d; ++j) {
        Eigen::VectorXd up = x0, down = x0;
        up(j) += h;
        down(j) -= h;
        jac.col(static_cast<long>(j)) = (f(up) - f(down)) / (2 * h);
      }
      const double reference = std::log(std::abs(jac.fullPivLu().determinant()));
      Tape<double> tape;
      tape.set_grad_enabled(false);
      double logdet = stack.forward(tape, tape.constant(x), tape.constant(z)).logdet.value()[0];
      if (o.break_logdet) logdet += 0.5;
      worst = std::max(worst, std::abs(logdet - reference) / std::max(1.0, std::abs(reference)));
    }
  }
  return {"logdet-oracle", worst < 1e-5, worst, 1e-5,
          format("relative error vs finite-difference Jacobian, %.0f cases per D in {2,4,8,16}",
                 per_d)};
}

CheckResult check_gradient(const VerifyOptions& o) {
  Rng init(o.seed + 303);
  VapnevModel<double> model(preset("tiny").model, init);
  const ParamList<double> params = model.parameters();
  randomize_parameters(params, init, 0.25);
  const Tensor<double> x = normals({2, 4, 4, 1}, init);
  auto loss = [&](Tape<double>& tape) {
    Rng noise(o.seed + 304);
    return model.elbo(tape, x, noise, 0.7).loss;
  };
  model.zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  const double h = 1e-5;
  double worst = 0;
  for (Parameter<double>* p : params) {
    double diff2 = 0, a2 = 0, n2 = 0;
    // The quick mode probes at most 8 coordinates per parameter group.
    const std::size_t stride = o.quick ? std::max<std::size_t>(1, p->value.size() / 8) : 1;
    for (std::size_t i = 0; i < p->value.size(); i += stride) {
      const double orig = p->value[i];
      auto eval = [&](double v) {
        p->value[i] = v;
        Tape<double> tape;
        tape.set_grad_enabled(false);
        return loss(tape).value()[0];
      };
      const double numeric = (eval(orig + h) - eval(orig - h)) / (2 * h);
      p->value[i] = orig;
      const double analytic = p->grad[i];
      diff2 += (numeric - analytic) * (numeric - analytic);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-8}));
  }
  return {"gradient", worst < 1e-3, worst, 1e-3,
          format("worst relative error over %.0f parameter groups (tiny config)",
                 static_cast<double>(params.size()))};
}

CheckResult check_normalization(const VerifyOptions& o) {
  Rng init(o.seed + 404);
  VapnevModel<double> model(preset("toy2d").model, init);
  randomize_parameters(model.parameters(), init, 0.1);
  const double half = 8.0, step = o.quick ? 0.1 : 0.04;
  const std::size_t n = static_cast<std::size_t>(std::llround(2 * half / step));
  double mass = 0;
  Rng unused(0);
  for (std::size_t row = 0; row < n; ++row) {
    Tensor<double> pts({n, 1, 1, 2});
    for (std::size_t col = 0; col < n; ++col) {
      pts[2 * col] = -half + (static_cast<double>(row) + 0.5) * step;
      pts[2 * col + 1] = -half + (static_cast<double>(col) + 0.5) * step;
    }
    Tape<double> tape;
    tape.set_grad_enabled(false);
    const auto g = model.elbo(tape, pts, unused, 1.0);
    for (double v : g.elbo.value().data()) mass += std::exp(v) * step * step;
  }
  const double err = std::abs(mass - 1.0);
  return {"normalization", err < 0.02, err, 0.02,
          format("|integral - 1| of a random 2-D flow density over [-8,8]^2 (integral %.6f)", mass)};
}

CheckResult check_kl(const VerifyOptions& o) {
  Rng rng(o.seed + 505);
  const int draws = o.quick ? 10 : 50;
  const std::size_t samples = o.quick ? 20000 : 100000;
  double worst = 0;
  for (int t = 0; t < draws; ++t) {
    const std::size_t d = 1 + rng.below(4);
    const Tensor<double> mu = normals({1, d}, rng);
    const Tensor<double> lv = normals({1, d}, rng, 0.7);
    Tape<double> tape;
    const double closed = kl_to_standard_normal<double>({tape.constant(mu), tape.constant(lv)})
                              .value()[0];
    double s1 = 0, s2 = 0;
    for (std::size_t k = 0; k < samples; ++k) {
      double log_ratio = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const double e = rng.normal();
        const double zj = mu[j] + std::exp(0.5 * lv[j]) * e;
        log_ratio += -0.5 * (lv[j] + e * e) + 0.5 * zj * zj;
      }
      s1 += log_ratio;
      s2 += log_ratio * log_ratio;
    }
    const double m = s1 / static_cast<double>(samples);
    const double se = std::sqrt((s2 / static_cast<double>(samples) - m * m) /
                                static_cast<double>(samples));
    worst = std::max(worst, std::abs(closed - m) / se);
  }
  return {"kl-closed-form", worst < 3.0, worst, 3.0,
          format("max |closed form - Monte Carlo| in standard errors over %.0f draws", draws)};
}

std::vector<CheckResult> run_verification(const VerifyOptions& o) {
  return {check_invertibility(o), check_logdet(o), check_gradient(o), check_normalization(o),
          check_kl(o)};
}

}  // namespace vapnev
