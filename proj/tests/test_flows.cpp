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

#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "vapnev/errors.hpp"
#include "vapnev/flows.hpp"

using vapnev::CouplingLayer;
using vapnev::FlowConfig;
using vapnev::FlowStack;
using vapnev::Mask;
using vapnev::Shape;
using vapnev::Tape;
using vapnev::Tensor;
using vapnev::Var;

namespace {

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

FlowConfig small_config(std::size_t checkerboard, std::size_t channelwise, bool squeeze) {
  FlowConfig c;
  c.scales = {{checkerboard, channelwise, 4, squeeze}};
  c.residual_blocks = 1;
  return c;
}

std::vector<double> to_vector(const Tensor<double>& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

// Forward map of a stack for one sample, as a plain function of R^D.
std::function<std::vector<double>(const std::vector<double>&)> stack_map(
    FlowStack<double>& stack, const Tensor<double>& z) {
  return [&stack, z](const std::vector<double>& x) {
    Tape<double> tape;
    tape.set_grad_enabled(false);
    Shape s{1};
    s.insert(s.end(), stack.input_shape().begin(), stack.input_shape().end());
    const auto t = stack.forward(tape, tape.constant(Tensor<double>(s, x)),
                                 z.size() ? std::optional(tape.constant(z)) : std::nullopt);
    return to_vector(t.y.value());
  };
}

}  // namespace

TEST_CASE("masks partition the components") {
  const Mask cb = Mask::checkerboard({2, 2, 1}, 0);
  CHECK(cb.kept() == std::vector<std::size_t>{0, 3});
  CHECK(cb.transformed() == std::vector<std::size_t>{1, 2});
  CHECK(Mask::checkerboard({2, 2, 1}, 1).kept() == std::vector<std::size_t>{1, 2});
  const Mask cw = Mask::channelwise({1, 2, 4}, 0);
  CHECK(cw.kept() == std::vector<std::size_t>{0, 1, 4, 5});
  CHECK(Mask::channelwise({1, 2, 4}, 1).kept() == std::vector<std::size_t>{2, 3, 6, 7});
  for (const Mask& m : {Mask::checkerboard({3, 5, 2}, 1), Mask::channelwise({3, 5, 2}, 0)}) {
    std::vector<std::size_t> all = m.kept();
    all.insert(all.end(), m.transformed().begin(), m.transformed().end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
    CHECK(all.size() == 30);
  }
  const Tensor<double> b = cb.binary();
  CHECK(b == Tensor<double>({2, 2, 1}, {1, 0, 0, 1}));
  CHECK(Mask::from_binary(b).kept() == cb.kept());
  CHECK_THROWS_AS(Mask::from_binary(Tensor<double>({1, 1, 2}, {1, 0.5})), vapnev::ContractError);
  CHECK_THROWS_AS(Mask::channelwise({2, 2, 3}, 0), vapnev::ShapeError);
}

TEST_CASE("split then merge is lossless") {
  vapnev::Rng rng(1);
  Tape<double> tape;
  const auto x = oracle::random_tensor({3, 4, 2, 6}, rng);
  for (const Mask& m : {Mask::checkerboard({4, 2, 6}, 0), Mask::channelwise({4, 2, 6}, 1)}) {
    const auto [k, t] = vapnev::apply_mask_split(tape.constant(x), m);
    CHECK(k.shape() == Shape{3, 24});
    CHECK(vapnev::mask_merge(k, t, m).value() == x);
  }
  CHECK_THROWS_AS(vapnev::apply_mask_split(tape.constant(x), Mask::checkerboard({2, 4, 6}, 0)),
                  vapnev::ShapeError);
}

TEST_CASE("hand-evaluated two-dimensional coupling") {
  const Mask mask = Mask::from_binary(Tensor<double>({1, 1, 2}, {1, 0}));
  const vapnev::CouplingFn<double> fn = [](const Var<double>& k) { return std::pair{k, k}; };
  Tape<double> tape;
  const auto r = vapnev::coupling_forward(tape.constant(Tensor<double>({1, 1, 1, 2}, {1, 1})),
                                          mask, fn);
  CHECK(r.y.value()[0] == 1.0);
  CHECK(r.y.value()[1] == doctest::Approx(std::numbers::e + 1).epsilon(1e-15));
  CHECK(r.logdet.value()[0] == 1.0);
  const auto x = vapnev::coupling_inverse(r.y, mask, fn);
  CHECK(x.value()[0] == 1.0);
  CHECK(x.value()[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("zero conditioner and all-kept mask are identities") {
  vapnev::Rng rng(2);
  Tape<double> tape;
  const auto x = tape.constant(oracle::random_tensor({2, 2, 2, 2}, rng));
  const vapnev::CouplingFn<double> zero = [&](const Var<double>& k) {
    auto z = tape.constant(Tensor<double>({k.dim(0), 4}));
    return std::pair{z, z};
  };
  const auto r = vapnev::coupling_forward(x, Mask::checkerboard({2, 2, 2}, 0), zero);
  CHECK(r.y.value() == x.value());
  CHECK(r.logdet.value() == Tensor<double>({2}));
  CHECK(vapnev::coupling_inverse(x, Mask::checkerboard({2, 2, 2}, 0), zero).value() == x.value());

  const Mask all = Mask::from_binary(Tensor<double>({2, 2, 2}, 1.0));
  CHECK(all.transformed().empty());
  const auto r2 = vapnev::coupling_forward(x, all, zero);
  CHECK(r2.y.value() == x.value());
  CHECK(r2.logdet.value() == Tensor<double>({2}));
}

TEST_CASE("coupling layer log-determinant matches the dense Jacobian") {
  vapnev::Rng rng(3);
  const FlowConfig cfg = small_config(1, 0, false);
  for (int trial = 0; trial < 10; ++trial) {
    CouplingLayer<double> layer("c", Mask::checkerboard({2, 2, 2}, trial % 2), 4, 3, cfg, rng);
    vapnev::ParamList<double> params;
    layer.parameters(params);
    vapnev::randomize_parameters(params, rng, 0.4);
    const auto z = oracle::random_tensor({1, 3}, rng);
    const auto x = oracle::random_tensor({1, 2, 2, 2}, rng);
    auto f = [&](const std::vector<double>& v) {
      Tape<double> t;
      const auto r = layer.forward(t, t.constant(Tensor<double>({1, 2, 2, 2}, v)), t.constant(z));
      return to_vector(r.y.value());
    };
    Tape<double> tape;
    const double logdet = layer.forward(tape, tape.constant(x), tape.constant(z)).logdet.value()[0];
    const double ref = oracle::log_abs_det(oracle::jacobian(f, to_vector(x)));
    CHECK(std::abs(logdet - ref) <= 1e-5 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("single-precision coupling round trip") {
  vapnev::Rng rng(4);
  const FlowConfig cfg = small_config(1, 0, false);
  float worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const bool cw = trial % 2 == 1;
    const Shape s{2, 2, 4};
    CouplingLayer<float> layer("c", cw ? Mask::channelwise(s, trial % 4 / 2)
                                       : Mask::checkerboard(s, trial % 4 / 2),
                               4, 3, cfg, rng);
    vapnev::ParamList<float> params;
    layer.parameters(params);
    vapnev::randomize_parameters(params, rng, 0.3);
    Tape<float> tape;
    Tensor<float> x({2, 2, 2, 4}), z({2, 3});
    for (auto& v : x.data()) v = static_cast<float>(rng.normal());
    for (auto& v : z.data()) v = static_cast<float>(rng.normal());
    const auto zv = tape.constant(z);
    const auto r = layer.forward(tape, tape.constant(x), zv);
    const auto back = layer.inverse(tape, r.y, zv);
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back.value()[i] - x[i]));
  }
  CHECK(worst < 1e-5f);
}

TEST_CASE("conditional layer demands z") {
  vapnev::Rng rng(5);
  CouplingLayer<double> layer("c", Mask::checkerboard({2, 2, 1}, 0), 4, 3, small_config(1, 0, false),
                              rng);
  Tape<double> tape;
  CHECK_THROWS_AS(layer.forward(tape, tape.constant(Tensor<double>({1, 2, 2, 1})), std::nullopt),
                  vapnev::ContractError);
}

TEST_CASE("conditioner multipliers") {
  vapnev::Rng rng(6);
  vapnev::ConditionerPair<double> pair("p", {2, 3, 3, 2, 4, 5, 1, 3, 0.01}, rng);
  vapnev::ParamList<double> params;
  pair.parameters(params);
  vapnev::randomize_parameters(params, rng, 0.5);
  const auto x = oracle::random_tensor({2, 3, 3, 2}, rng);
  const auto z1 = oracle::random_tensor({2, 5}, rng);
  const auto z2 = oracle::random_tensor({2, 5}, rng);

  SUBCASE("broadcast equals an explicitly tiled evaluation") {
    Tape<double> tape;
    const auto xin = tape.constant(x);
    const auto zin = tape.constant(z1);
    const Tensor<double> out = pair(tape, xin, zin).value();
    const Tensor<double> l1 = pair.f1(tape, xin).value();
    const Tensor<double> l2 = pair.f2(tape, zin).value();
    CHECK(l1.shape() == l2.shape());
    const auto& a = pair.alpha().value;
    const auto& b1 = pair.beta1().value;
    const auto& b2 = pair.beta2().value;
    const auto& b = pair.bias().value;
    double worst = 0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t h = 0; h < 3; ++h)
        for (std::size_t w = 0; w < 3; ++w)
          for (std::size_t c = 0; c < 2; ++c) {
            const double p = l1.at(n, h, w, c), q = l2.at(n, h, w, c);
            const double ref = a[c] * p * q + b1[c] * p + b2[c] * q + b[c];
            worst = std::max(worst, std::abs(ref - out.at(n, h, w, c)));
          }
    CHECK(worst < 1e-12);
  }
  SUBCASE("zero multipliers give zero output") {
    pair.alpha().value.fill(0);
    pair.beta1().value.fill(0);
    pair.beta2().value.fill(0);
    pair.bias().value.fill(0);
    Tape<double> tape;
    CHECK(pair(tape, tape.constant(x), tape.constant(z1)).value() == Tensor<double>({2, 3, 3, 2}));
  }
  SUBCASE("without alpha and beta2 the output ignores z") {
    pair.alpha().value.fill(0);
    pair.beta2().value.fill(0);
    Tape<double> tape;
    const auto o1 = pair(tape, tape.constant(x), tape.constant(z1)).value();
    const auto o2 = pair(tape, tape.constant(x), tape.constant(z2)).value();
    CHECK(o1 == o2);
  }
  SUBCASE("z reaches the output otherwise") {
    Tape<double> tape;
    const auto o1 = pair(tape, tape.constant(x), tape.constant(z1)).value();
    const auto o2 = pair(tape, tape.constant(x), tape.constant(z2)).value();
    CHECK(max_abs_diff(o1, o2) > 1e-6);
  }
}

TEST_CASE("squeeze is an ordered permutation") {
  Tape<double> tape;
  const auto x = tape.constant(Tensor<double>({1, 2, 2, 1}, {1, 2, 3, 4}));
  CHECK(vapnev::squeeze(x).value() == Tensor<double>({1, 1, 1, 4}, {1, 2, 3, 4}));
  vapnev::Rng rng(7);
  const auto big = oracle::random_tensor({2, 4, 4, 1}, rng);
  const auto s = vapnev::squeeze(tape.constant(big));
  CHECK(s.shape() == Shape{2, 2, 2, 4});
  auto a = to_vector(big), b = to_vector(s.value());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
  CHECK(vapnev::unsqueeze(s).value() == big);
  // Channel s*C + c of the squeezed tensor comes from sub-pixel s.
  const auto c3 = oracle::random_tensor({1, 2, 2, 3}, rng);
  const auto s3 = vapnev::squeeze(tape.constant(c3)).value();
  CHECK(s3[1 * 3 + 2] == c3.at(0, 0, 1, 2));
  CHECK(s3[2 * 3 + 0] == c3.at(0, 1, 0, 0));
  CHECK_THROWS_AS(vapnev::squeeze(tape.constant(Tensor<double>({1, 3, 2, 1}))), vapnev::ShapeError);
}

TEST_CASE("fresh stack is the identity") {
  vapnev::Rng rng(8);
  FlowStack<double> stack(small_config(3, 3, true), {4, 4, 1}, 3, rng);
  CHECK(stack.coupling_count() == 6);
  CHECK(stack.output_shape() == Shape{2, 2, 4});
  Tape<double> tape;
  const auto x = oracle::random_tensor({2, 4, 4, 1}, rng);
  const auto z = tape.constant(oracle::random_tensor({2, 3}, rng));
  const auto t = stack.forward(tape, tape.constant(x), z);
  CHECK(vapnev::unsqueeze(t.y).value() == x);
  CHECK(t.logdet.value() == Tensor<double>({2}));
  CHECK(stack.inverse(tape, t.y, z).value() == x);
}

TEST_CASE("stack log-determinant is the sum of layer terms") {
  vapnev::Rng rng(9);
  FlowStack<double> stack(small_config(2, 0, false), {2, 2, 2}, 3, rng);
  vapnev::ParamList<double> params;
  stack.parameters(params);
  vapnev::randomize_parameters(params, rng, 0.4);
  Tape<double> tape;
  const auto x = tape.constant(oracle::random_tensor({3, 2, 2, 2}, rng));
  const auto z = tape.constant(oracle::random_tensor({3, 3}, rng));
  const auto trace = stack.forward(tape, x, z);
  auto& first = *std::get<0>(stack.steps()[0]);
  auto& second = *std::get<0>(stack.steps()[1]);
  const auto r1 = first.forward(tape, x, z);
  const auto r2 = second.forward(tape, r1.y, z);
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(trace.logdet.value()[n] == r1.logdet.value()[n] + r2.logdet.value()[n]);
  }
  CHECK(trace.y.value() == r2.y.value());
}

TEST_CASE("stack log-determinant on sixteen dimensions") {
  vapnev::Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    FlowStack<double> stack(small_config(2, 2, true), {4, 4, 1}, 3, rng);
    vapnev::ParamList<double> params;
    stack.parameters(params);
    vapnev::randomize_parameters(params, rng, 0.3);
    const auto z = oracle::random_tensor({1, 3}, rng);
    const auto x = oracle::random_tensor({1, 4, 4, 1}, rng);
    Tape<double> tape;
    const double logdet = stack.forward(tape, tape.constant(x), tape.constant(z)).logdet.value()[0];
    const double ref = oracle::log_abs_det(oracle::jacobian(stack_map(stack, z), to_vector(x)));
    CHECK(std::abs(logdet - ref) <= 1e-5 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("double round trip and the changed-z control") {
  vapnev::Rng rng(11);
  double worst = 0, broken = 0;
  for (int trial = 0; trial < 10; ++trial) {
    FlowStack<double> stack(small_config(3, 3, true), {4, 4, 2}, 3, rng);
    vapnev::ParamList<double> params;
    stack.parameters(params);
    vapnev::randomize_parameters(params, rng, 0.2);
    Tape<double> tape;
    const auto x = oracle::random_tensor({2, 4, 4, 2}, rng);
    const auto z = tape.constant(oracle::random_tensor({2, 3}, rng));
    const auto other = tape.constant(oracle::random_tensor({2, 3}, rng));
    const auto y = stack.forward(tape, tape.constant(x), z).y;
    worst = std::max(worst, max_abs_diff(stack.inverse(tape, y, z).value(), x));
    broken = std::max(broken, max_abs_diff(stack.inverse(tape, y, other).value(), x));
  }
  CHECK(worst < 1e-9);
  CHECK(broken > 1e-3);
}

TEST_CASE("alternating checkerboards transform every component") {
  vapnev::Rng rng(12);
  FlowStack<double> stack(small_config(3, 0, false), {2, 2, 1}, 0, rng);
  vapnev::ParamList<double> params;
  stack.parameters(params);
  vapnev::randomize_parameters(params, rng, 0.5);
  const auto jac = oracle::jacobian(stack_map(stack, Tensor<double>()),
                                    to_vector(oracle::random_tensor({1, 2, 2, 1}, rng)));
  for (Eigen::Index i = 0; i < jac.rows(); ++i) {
    Eigen::VectorXd unit = Eigen::VectorXd::Zero(jac.cols());
    unit(i) = 1;
    CHECK((jac.row(i).transpose() - unit).norm() > 1e-6);
  }
}

TEST_CASE("stack rejects indivisible extents and wrong inputs") {
  vapnev::Rng rng(13);
  CHECK_THROWS_AS(FlowStack<double>(small_config(1, 1, true), {3, 4, 1}, 0, rng),
                  vapnev::ShapeError);
  FlowStack<double> stack(small_config(1, 1, true), {2, 2, 1}, 0, rng);
  Tape<double> tape;
  CHECK_THROWS_AS(stack.forward(tape, tape.constant(Tensor<double>({1, 2, 2, 2})), std::nullopt),
                  vapnev::ShapeError);
}

TEST_CASE("coupling parameter gradients") {
  vapnev::Rng rng(14);
  FlowStack<double> stack(small_config(1, 1, true), {2, 2, 1}, 2, rng);
  vapnev::ParamList<double> params;
  stack.parameters(params);
  vapnev::randomize_parameters(params, rng, 0.3);
  const auto x = oracle::random_tensor({2, 2, 2, 1}, rng);
  const auto z = oracle::random_tensor({2, 2}, rng);
  const double err = oracle::parameter_gradient_error(params, [&](Tape<double>& t) {
    const auto tr = stack.forward(t, t.constant(x), t.constant(z));
    return vapnev::sum(vapnev::square(tr.y)) + vapnev::sum(tr.logdet);
  });
  CHECK(err < 1e-5);
}
