// Copyright 2026 The canonface Authors. All Rights Reserved.
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

#include <doctest.h>

#include "canonface/autograd.h"
#include "canonface/nn.h"
#include "support/gradcheck.h"

using namespace canonface;
using ag::Var;
using testing::gradcheck;

namespace {

constexpr double kTol = 1e-6;

Tensor rnd(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return randu(std::move(s), rng, lo, hi);
}

void check_all(const std::function<Var(const std::vector<Var>&)>& f, const std::vector<Tensor>& in) {
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto r = gradcheck(f, in, i);
    CAPTURE(i);
    CHECK(r.checked > 0);
    CHECK(r.rel_error < kTol);
  }
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  const Tensor a = rnd({2, 3, 4}, 1), b = rnd({2, 3, 4}, 2);
  check_all([](const auto& v) { return ag::add(v[0], v[1]); }, {a, b});
  check_all([](const auto& v) { return ag::sub(v[0], v[1]); }, {a, b});
  check_all([](const auto& v) { return ag::mul(v[0], v[1]); }, {a, b});
  check_all([](const auto& v) { return ag::scale(v[0], -2.5); }, {a});
  check_all([](const auto& v) { return ag::add_scalar(v[0], 3.0); }, {a});
  check_all([](const auto& v) { return ag::leaky_relu(v[0], 0.2); }, {a});
  check_all([](const auto& v) { return ag::sigmoid(v[0]); }, {a});
  check_all([](const auto& v) { return ag::softplus(v[0]); }, {a});
  check_all([](const auto& v) { return ag::abs(v[0]); }, {a});
  check_all([](const auto& v) { return ag::square(v[0]); }, {a});
}

TEST_CASE("reductions and shape ops match finite differences") {
  const Tensor a = rnd({3, 4, 2}, 3);
  check_all([](const auto& v) { return ag::sum(v[0]); }, {a});
  check_all([](const auto& v) { return ag::mean(v[0]); }, {a});
  check_all([](const auto& v) { return ag::mean_per_sample(v[0]); }, {a});
  check_all([](const auto& v) { return ag::weighted_sum(ag::mean_per_sample(v[0]), {0.5, -1.0, 2.0}); }, {a});
  check_all([](const auto& v) { return ag::reshape(v[0], {4, 6}); }, {a});
  check_all([](const auto& v) { return ag::slice_channels(v[0], 1, 3); }, {a});
  check_all([](const auto& v) { return ag::slice_batch(v[0], 1, 2); }, {a});
  const Tensor b = rnd({3, 2, 2}, 4);
  check_all([](const auto& v) { return ag::concat_channels({v[0], v[1]}); }, {a, b});
  const Tensor c = rnd({1, 4, 2}, 5);
  check_all([](const auto& v) { return ag::concat_batch({v[0], v[1]}); }, {a, c});
}

TEST_CASE("broadcast and linear algebra ops match finite differences") {
  const Tensor f = rnd({2, 3, 4, 5}, 6), m = rnd({2, 1, 4, 5}, 7);
  check_all([](const auto& v) { return ag::mul_channel_broadcast(v[0], v[1]); }, {f, m});
  check_all([](const auto& v) { return ag::add_channel_bias(v[0], v[1]); }, {f, rnd({3}, 8)});
  check_all([](const auto& v) { return ag::add_rows(v[0], v[1]); }, {rnd({2, 5, 3}, 9), rnd({2, 3}, 10)});
  check_all([](const auto& v) { return ag::bmm(v[0], v[1]); }, {rnd({2, 3, 4}, 11), rnd({2, 4, 5}, 12)});
  check_all([](const auto& v) { return ag::linear(v[0], v[1], v[2]); }, {rnd({3, 4}, 13), rnd({5, 4}, 14), rnd({5}, 15)});
  check_all([](const auto& v) { return ag::normalize_rows(v[0]); }, {rnd({3, 4}, 16)});
  check_all([](const auto& v) { return ag::normalize_channels(v[0]); }, {rnd({2, 3, 2, 2}, 17)});
  check_all([](const auto& v) { return ag::dot_rows(v[0], v[1]); }, {rnd({3, 4}, 18), rnd({3, 4}, 19)});
}

TEST_CASE("convolutions and resampling match finite differences") {
  check_all([](const auto& v) { return ag::conv2d(v[0], v[1], v[2], 1, 1); },
            {rnd({2, 3, 5, 5}, 20), rnd({4, 3, 3, 3}, 21), rnd({4}, 22)});
  check_all([](const auto& v) { return ag::conv2d(v[0], v[1], v[2], 2, 1); },
            {rnd({2, 3, 6, 6}, 23), rnd({4, 3, 3, 3}, 24), rnd({4}, 25)});
  check_all([](const auto& v) { return ag::conv2d(v[0], v[1], Var(), 1, 1); },
            {rnd({2, 3, 4, 4}, 26), rnd({2, 4, 3, 3, 3}, 27)});
  check_all([](const auto& v) { return ag::conv3d(v[0], v[1], v[2], {1, 1, 1}, {1, 1, 1}); },
            {rnd({1, 2, 3, 4, 4}, 28), rnd({3, 2, 3, 3, 3}, 29), rnd({3}, 30)});
  check_all([](const auto& v) { return ag::conv3d(v[0], v[1], v[2], {2, 2, 2}, {1, 1, 1}); },
            {rnd({1, 2, 4, 4, 4}, 31), rnd({3, 2, 3, 3, 3}, 32), rnd({3}, 33)});
  check_all([](const auto& v) { return ag::upsample_nearest2d(v[0], 2); }, {rnd({1, 2, 3, 3}, 34)});
  check_all([](const auto& v) { return ag::upsample_nearest3d(v[0], {2, 2, 2}); }, {rnd({1, 2, 2, 2, 2}, 35)});
  check_all([](const auto& v) { return ag::avg_pool2d(v[0], 2); }, {rnd({1, 2, 4, 4}, 36)});
}

TEST_CASE("conv2d forward matches a direct loop") {
  const Tensor x = rnd({1, 2, 4, 4}, 40), w = rnd({3, 2, 3, 3}, 41), b = rnd({3}, 42);
  const Tensor y = ag::conv2d(ag::constant(x), ag::constant(w), ag::constant(b), 1, 1).value();
  double worst = 0;
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = b[o];
        for (int c = 0; c < 2; ++c)
          for (int di = 0; di < 3; ++di)
            for (int dj = 0; dj < 3; ++dj) {
              const int yi = i + di - 1, xj = j + dj - 1;
              if (yi < 0 || yi >= 4 || xj < 0 || xj >= 4) continue;
              s += w.at({o, c, di, dj}) * x.at({0, c, yi, xj});
            }
        worst = std::max(worst, std::abs(s - y.at({0, o, i, j})));
      }
  CHECK(worst < 1e-12);
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  Var x(Tensor(Shape{1}, std::vector<double>{3.0}), true);
  Var y = ag::add(ag::mul(x, x), x);
  ag::backward(ag::sum(y));
  CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("AdamW first step moves each weight by lr against the gradient sign") {
  nn::NamedParams ps;
  Var p(Tensor(Shape{2}, std::vector<double>{1.0, -1.0}), true);
  ps.emplace_back("p", p);
  nn::AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  nn::AdamW opt(ps, cfg);
  ag::backward(ag::sum(ag::mul(p, ag::constant(Tensor(Shape{2}, std::vector<double>{2.0, -3.0})))));
  opt.step();
  CHECK(p.value()[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p.value()[1] == doctest::Approx(-0.9).epsilon(1e-6));
}
