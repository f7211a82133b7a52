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

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "vapnev/distributions.hpp"
#include "vapnev/ops.hpp"

using vapnev::GaussianParams;
using vapnev::Shape;
using vapnev::Tape;
using vapnev::Tensor;
using vapnev::Var;

namespace {

// Direct evaluation of the diagonal Gaussian density, written independently
// of the tape ops.
double reference_log_prob(const std::vector<double>& y, const std::vector<double>& mu,
                          const std::vector<double>& var) {
  double acc = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    acc += -0.5 * std::log(2 * std::numbers::pi * var[i]) -
           (y[i] - mu[i]) * (y[i] - mu[i]) / (2 * var[i]);
  }
  return acc;
}

}  // namespace

TEST_CASE("log density at the standard-normal mode") {
  Tape<double> tape;
  GaussianParams<double> p{tape.constant(Tensor<double>({1, 1}, {0.0})),
                           tape.constant(Tensor<double>({1, 1}, {0.0}))};
  auto lp = vapnev::diag_gaussian_log_prob(tape.constant(Tensor<double>({1, 1}, {0.0})), p);
  CHECK(lp.shape() == Shape{1});
  CHECK(lp.value()[0] == doctest::Approx(-0.9189385332046727).epsilon(1e-14));
}

TEST_CASE("log density is maximal at the mean") {
  vapnev::Rng rng(2);
  Tape<double> tape;
  auto mu = oracle::random_tensor({1, 4}, rng);
  auto lv = oracle::random_tensor({1, 4}, rng);
  GaussianParams<double> p{tape.constant(mu), tape.constant(lv)};
  const double at_mode = vapnev::diag_gaussian_log_prob(tape.constant(mu), p).value()[0];
  for (int i = 0; i < 20; ++i) {
    auto y = mu;
    for (auto& v : y.data()) v += 0.1 * rng.normal();
    CHECK(vapnev::diag_gaussian_log_prob(tape.constant(y), p).value()[0] < at_mode);
  }
}

TEST_CASE("log density matches an independent evaluation") {
  vapnev::Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto y = oracle::random_tensor({3, 5}, rng);
    auto mu = oracle::random_tensor({3, 5}, rng);
    auto lv = oracle::random_tensor({3, 5}, rng, 0.5);
    Tape<double> tape;
    auto lp = vapnev::diag_gaussian_log_prob(tape.constant(y),
                                             {tape.constant(mu), tape.constant(lv)});
    for (std::size_t n = 0; n < 3; ++n) {
      std::vector<double> ys, ms, vs;
      for (std::size_t j = 0; j < 5; ++j) {
        ys.push_back(y[n * 5 + j]);
        ms.push_back(mu[n * 5 + j]);
        vs.push_back(std::exp(lv[n * 5 + j]));
      }
      CHECK(lp.value()[n] == doctest::Approx(reference_log_prob(ys, ms, vs)).epsilon(1e-13));
    }
  }
}

TEST_CASE("log density integrates to one") {
  const double mu = 0.3, var = 0.7;
  Tape<double> tape;
  const std::size_t points = 20001;
  const double lo = mu - 12 * std::sqrt(var), hi = mu + 12 * std::sqrt(var);
  const double step = (hi - lo) / static_cast<double>(points - 1);
  Tensor<double> ys(Shape{points, 1});
  for (std::size_t i = 0; i < points; ++i) ys[i] = lo + step * static_cast<double>(i);
  auto lp = vapnev::diag_gaussian_log_prob(
      tape.constant(ys), {tape.constant(Tensor<double>({points, 1}, mu)),
                          tape.constant(Tensor<double>({points, 1}, std::log(var)))});
  double integral = 0;
  for (std::size_t i = 0; i < points; ++i) {
    const double wgt = (i == 0 || i + 1 == points) ? 0.5 : 1.0;
    integral += wgt * std::exp(lp.value()[i]) * step;
  }
  CHECK(std::abs(integral - 1.0) < 1e-3);
}

TEST_CASE("shape mismatch is rejected") {
  Tape<double> tape;
  GaussianParams<double> p{tape.constant(Tensor<double>({1, 2})), tape.constant(Tensor<double>({1, 2}))};
  CHECK_THROWS_AS(vapnev::diag_gaussian_log_prob(tape.constant(Tensor<double>({1, 3})), p),
                  vapnev::ShapeError);
  GaussianParams<double> bad{tape.constant(Tensor<double>({1, 2})), tape.constant(Tensor<double>({1, 3}))};
  CHECK_THROWS_AS(vapnev::kl_to_standard_normal(bad), vapnev::ShapeError);
}

TEST_CASE("closed-form KL") {
  Tape<double> tape;
  auto kl0 = vapnev::kl_to_standard_normal<double>(
      {tape.constant(Tensor<double>({1, 3}, 0.0)), tape.constant(Tensor<double>({1, 3}, 0.0))});
  CHECK(kl0.value()[0] == 0.0);

  // mu = 1, var = 1, D = 1: Monte Carlo E_q[log q - log p] with 1e6 draws.
  vapnev::Rng rng(8);
  const std::size_t draws = 1000000;
  double acc = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double z = 1.0 + rng.normal();
    acc += -0.5 * (z - 1.0) * (z - 1.0) + 0.5 * z * z;
  }
  const double mc = acc / static_cast<double>(draws);
  auto kl1 = vapnev::kl_to_standard_normal<double>(
      {tape.constant(Tensor<double>({1, 1}, 1.0)), tape.constant(Tensor<double>({1, 1}, 0.0))});
  CHECK(std::abs(mc - 0.5) < 1e-2);
  CHECK(kl1.value()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(kl1.value()[0] - mc) < 1e-2);

  for (int trial = 0; trial < 50; ++trial) {
    auto mu = oracle::random_tensor({2, 6}, rng, 2.0);
    auto lv = oracle::random_tensor({2, 6}, rng, 2.0);
    auto kl = vapnev::kl_to_standard_normal<double>({tape.constant(mu), tape.constant(lv)});
    for (double v : kl.value().data()) CHECK(v >= 0.0);
  }
}

TEST_CASE("gradients of log density and KL") {
  vapnev::Rng rng(12);
  using Vars = std::vector<Var<double>>;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor<double>> in = {oracle::random_tensor({2, 4}, rng), oracle::random_tensor({2, 4}, rng),
                                      oracle::random_tensor({2, 4}, rng, 0.5)};
    CHECK(oracle::gradient_error(
              [](Tape<double>&, const Vars& v) {
                auto lp = vapnev::diag_gaussian_log_prob(v[0], {v[1], v[2]});
                return vapnev::sum(lp * lp);
              },
              in) < 1e-4);
    CHECK(oracle::gradient_error(
              [](Tape<double>&, const Vars& v) {
                auto kl = vapnev::kl_to_standard_normal(GaussianParams<double>{v[1], v[2]});
                return vapnev::sum(kl * kl);
              },
              in) < 1e-4);
  }
}

TEST_CASE("reparametrized sampling") {
  SUBCASE("degenerate variance returns the mean") {
    vapnev::Rng rng(1);
    Tape<double> tape;
    auto mu = Tensor<double>({1, 3}, {0.5, -1.0, 2.0});
    auto z = vapnev::reparam_sample<double>({tape.constant(mu), tape.constant(Tensor<double>({1, 3}, -60.0))}, rng);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(z.value()[i] - mu[i]) < 1e-12);
  }
  SUBCASE("sample mean within 3 sigma / sqrt(n)") {
    vapnev::Rng rng(2);
    Tape<double> tape;
    const std::size_t n = 100000;
    const double mu = 1.5, lv = std::log(0.25);
    auto z = vapnev::reparam_sample<double>(
        {tape.constant(Tensor<double>({n, 1}, mu)), tape.constant(Tensor<double>({n, 1}, lv))}, rng);
    const double mean = z.value().sum() / static_cast<double>(n);
    CHECK(std::abs(mean - mu) < 3 * 0.5 / std::sqrt(static_cast<double>(n)));
  }
  SUBCASE("fixed seed reproduces the sample") {
    auto draw = [] {
      vapnev::Rng rng(77);
      Tape<double> tape;
      return vapnev::reparam_sample<double>(
                 {tape.constant(Tensor<double>({2, 2}, 0.1)), tape.constant(Tensor<double>({2, 2}, 0.2))}, rng)
          .value();
    };
    CHECK(draw() == draw());
  }
  SUBCASE("gradient reaches mu and log_var but not the noise") {
    vapnev::Rng rng(3);
    Tape<double> tape;
    auto mu = tape.leaf(Tensor<double>({1, 2}, {0.0, 1.0}));
    auto lv = tape.leaf(Tensor<double>({1, 2}, {0.0, 0.5}));
    vapnev::Rng copy = rng;
    auto z = vapnev::reparam_sample<double>({mu, lv}, rng);
    tape.backward(vapnev::sum(z));
    const double eps0 = copy.normal();
    const auto gmu = tape.grad(mu);
    for (double g : gmu.data()) CHECK(g == 1.0);
    CHECK(tape.grad(lv)[0] == doctest::Approx(0.5 * eps0));
  }
}
