// Copyright 2026 The fna Authors. All Rights Reserved.
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
#include <random>

#include "doctest.h"
#include "fna/error.h"
#include "fna/ops.h"
#include "fna/tensor.h"
#include "support/oracles.h"

using fna::Shape;
using TF = fna::Tensor<float>;
using TD = fna::Tensor<double>;
namespace ops = fna::ops;
namespace ft = fna::testing;

namespace {

template <class T>
double max_abs_diff(const fna::Tensor<T>& a, const fna::Tensor<T>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  return m;
}

void require_grads_pass(const std::vector<ft::GradResult>& r, double tol) {
  for (const auto& g : r) {
    INFO(g.name << " rel " << g.rel_error);
    CHECK(g.rel_error < tol);
  }
}

}  // namespace

TEST_CASE("tensor shape and data length agree") {
  auto t = TF::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(fna::numel(t.shape()) == t.data().size());
  CHECK_THROWS_AS(TF::from({2, 2}, {1, 2, 3}), fna::DimensionError);
  CHECK_THROWS_AS(TF::zeros({2, 0}), fna::DimensionError);
}

TEST_CASE("linear") {
  auto x = TF::from({2}, {1, 2});
  auto I = TF::from({2, 2}, {1, 0, 0, 1});
  auto y = ops::linear(x, I, TF::zeros({2}));
  CHECK(y.data()[0] == 1.0f);
  CHECK(y.data()[1] == 2.0f);

  auto y2 = ops::linear(TF::from({2}, {1, 1}), TF::from({1, 2}, {2, 3}), TF::from({1}, {1}));
  CHECK(y2.data()[0] == 6.0f);

  CHECK_THROWS_AS(ops::linear(TF::zeros({3}), I, TF()), fna::DimensionError);
  CHECK_THROWS_AS(ops::linear(x, I, TF::zeros({3})), fna::DimensionError);

  std::mt19937_64 rng(3);
  TD xs = ft::random_tensor<double>({4, 3}, rng), W = ft::random_tensor<double>({5, 3}, rng);
  auto r = ft::finite_difference_check([=]() { return ops::sum(ops::linear(xs, W, TD())); },
                                       {{"W", W}});
  require_grads_pass(r, 1e-4);
}

TEST_CASE("dwconv2d") {
  std::mt19937_64 rng(5);
  auto x = ft::random_tensor<float>({3, 6, 7}, rng);
  std::vector<float> delta(3 * 9, 0.0f);
  for (int c = 0; c < 3; ++c) delta[c * 9 + 4] = 1.0f;
  CHECK(max_abs_diff(ops::dwconv2d(x, TF::from({3, 3, 3}, delta)), x) == 0.0);

  auto c = TF::full({1, 5, 5}, 2.5f);
  auto y = ops::dwconv2d(c, TF::full({1, 3, 3}, 1.0f));
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t j = 1; j < 4; ++j) CHECK(y.at({0, i, j}) == doctest::Approx(22.5));
  CHECK(y.at({0, 0, 0}) == doctest::Approx(10.0));

  auto k = ft::random_tensor<float>({3, 3, 3}, rng);
  auto base = ops::dwconv2d(x, k);
  auto xp = x.detach();
  xp.mutable_data()[5] += 4.0f;  // channel 0
  auto pert = ops::dwconv2d(xp, k);
  for (std::size_t i = 42; i < base.numel(); ++i) CHECK(base.data()[i] == pert.data()[i]);

  CHECK_THROWS_AS(ops::dwconv2d(x, TF::zeros({3, 2, 2})), fna::ConfigError);
  CHECK_THROWS_AS(ops::dwconv2d(x, TF::zeros({2, 3, 3})), fna::DimensionError);
}

TEST_CASE("dwconv2d is translation-equivariant on the interior") {
  std::mt19937_64 rng(11);
  const std::size_t C = 2, H = 12, W = 11, dy = 2, dx = 1, r = 2;
  auto x = ft::random_tensor<double>({C, H, W}, rng);
  auto k = ft::random_tensor<double>({C, 5, 5}, rng);
  std::vector<double> shifted(C * H * W, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = dy; i < H; ++i)
      for (std::size_t j = dx; j < W; ++j)
        shifted[(c * H + i) * W + j] = x.data()[(c * H + i - dy) * W + j - dx];
  auto y = ops::dwconv2d(x, k);
  auto ys = ops::dwconv2d(TD::from({C, H, W}, shifted), k);
  double m = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = dy + r; i + r < H; ++i)
      for (std::size_t j = dx + r; j + r < W; ++j)
        m = std::max(m, std::abs(ys.data()[(c * H + i) * W + j] - y.data()[(c * H + i - dy) * W + j - dx]));
  CHECK(m < 1e-12);
}

TEST_CASE("gelu") {
  auto y = ops::gelu(TD::from({3}, {0.0, 1.0, 10.0}));
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == doctest::Approx(0.5 * (1 + std::erf(1 / std::sqrt(2.0)))).epsilon(1e-12));
  CHECK(y.data()[1] == doctest::Approx(0.841345).epsilon(1e-6));
  CHECK(std::abs(y.data()[2] - 10.0) < 1e-6);
}

TEST_CASE("layernorm") {
  auto z = ops::layernorm(TF::full({3, 4}, 7.0f), TF::full({4}, 1.0f), TF::zeros({4}), 1e-5f);
  for (float v : z.data()) CHECK(v == 0.0f);

  std::mt19937_64 rng(2);
  auto x = ft::random_tensor<double>({5, 16}, rng, 3.0);
  auto y = ops::layernorm(x, TD::full({16}, 1.0), TD::zeros({16}), 1e-12);
  for (std::size_t i = 0; i < 5; ++i) {
    double mu = 0, var = 0;
    for (std::size_t c = 0; c < 16; ++c) mu += y.data()[i * 16 + c] / 16;
    for (std::size_t c = 0; c < 16; ++c) var += std::pow(y.data()[i * 16 + c] - mu, 2) / 16;
    CHECK(std::abs(mu) < 1e-5);
    CHECK(std::abs(var - 1) < 1e-5);
  }
  CHECK_THROWS_AS(ops::layernorm(x, TD::full({16}, 1.0), TD::zeros({16}), 0.0), fna::ConfigError);

  TD g = ft::random_tensor<double>({16}, rng), b = ft::random_tensor<double>({16}, rng),
     r = ft::random_tensor<double>({5, 16}, rng);
  auto res = ft::finite_difference_check(
      [=]() { return ops::sum(ops::mul(ops::layernorm(x, g, b, 1e-5), r)); },
      {{"x", x}, {"gamma", g}, {"beta", b}});
  require_grads_pass(res, 1e-4);
}

TEST_CASE("global_avg_pool") {
  auto p = ops::global_avg_pool(TF::from({2, 2, 2}, {1, 3, 5, 7, 2, 2, 2, 2}));
  CHECK(p.data()[0] == 4.0f);
  CHECK(p.data()[1] == 2.0f);
  auto q = ops::global_avg_pool(TF::from({1, 2, 2}, {7, 5, 3, 1}));
  CHECK(q.data()[0] == 4.0f);
}

TEST_CASE("bilinear_resize uses align-corners sampling") {
  auto c = ops::bilinear_resize(TF::full({2, 3, 4}, 1.25f), 7, 5);
  CHECK(c.shape() == Shape{2, 7, 5});
  for (float v : c.data()) CHECK(v == 1.25f);
  CHECK(ops::bilinear_resize(c, 3, 4).data()[0] == 1.25f);

  std::mt19937_64 rng(8);
  auto x = ft::random_tensor<float>({2, 5, 6}, rng);
  CHECK(max_abs_diff(ops::bilinear_resize(x, 5, 6), x) < 1e-6);

  auto m = ops::bilinear_resize(TF::from({1, 1, 2}, {0, 1}), 1, 3);
  CHECK(m.data()[0] == 0.0f);
  CHECK(m.data()[1] == doctest::Approx(0.5));
  CHECK(m.data()[2] == 1.0f);
  CHECK_THROWS_AS(ops::bilinear_resize(x, 0, 3), fna::DimensionError);
}

TEST_CASE("softmax") {
  auto u = ops::softmax(TD::full({5}, 3.0));
  for (double v : u.data()) CHECK(v == doctest::Approx(0.2));
  auto s = ops::softmax(TD::from({2}, {0.0, std::log(3.0)}));
  CHECK(s.data()[0] == doctest::Approx(0.25));
  CHECK(s.data()[1] == doctest::Approx(0.75));

  std::mt19937_64 rng(4);
  auto x = ft::random_tensor<float>({6, 9}, rng, 5.0);
  auto y = ops::softmax(x);
  auto x2 = x.detach();
  for (auto& v : x2.mutable_data()) v += 100.0f;
  CHECK(max_abs_diff(ops::softmax(x2), y) < 1e-6);
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < 9; ++j) {
      const float v = y.data()[i * 9 + j];
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      sum += v;
    }
    CHECK(std::abs(sum - 1) < 1e-6);
  }
}

TEST_CASE("backward basics") {
  auto x = TD::from({3}, {1, 2, 3}, true);
  fna::backward(ops::sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  auto a = TD::from({3}, {1, 2, 3}, true), b = TD::from({3}, {4, 5, 6}, true);
  fna::backward(ops::sum(ops::mul(a, b)));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.grad()[i] == b.data()[i]);
    CHECK(b.grad()[i] == a.data()[i]);
  }
  CHECK_THROWS_AS(fna::backward(ops::mul(a, b)), fna::UsageError);

  // The tape is reusable: a second pass accumulates.
  auto w = TD::from({2}, {1, 1}, true);
  fna::backward(ops::sum(ops::scale(w, 2.0)));
  fna::backward(ops::sum(ops::scale(w, 2.0)));
  CHECK(w.grad()[0] == 4.0);
}

TEST_CASE("no-grad mode records nothing") {
  auto x = TD::from({2}, {1, 2}, true);
  fna::NoGradGuard guard;
  auto y = ops::sum(ops::mul(x, x));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("operator finite-difference suite, 64-bit") {
  auto r = ft::operator_gradient_suite(1234, 3);
  CHECK(r.size() > 60);
  require_grads_pass(r, 1e-5);
}

TEST_CASE("composite graph finite differences") {
  require_grads_pass(ft::composite_gradient_check_f64(9), 1e-5);
  require_grads_pass(ft::composite_gradient_check_f32(9), 1e-3);
}
