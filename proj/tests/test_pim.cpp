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

#include <cmath>

#include "canonface/pim.h"
#include "canonface/refine.h"
#include "support/gradcheck.h"

using namespace canonface;
using namespace canonface::pim;
using ag::Var;
using testing::gradcheck;
using testing::gradcheck_param;

namespace {

Tensor filled(Shape s, std::vector<double> v) { return Tensor(std::move(s), std::move(v)); }

}  // namespace

TEST_CASE("standard_conv examples") {
  Rng rng(1);
  const Tensor f = randn({1, 3, 5, 5}, rng);
  Tensor eye(Shape{3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) eye.at({c, c, 0, 0}) = 1.0;
  CHECK(max_abs_diff(standard_conv(ag::constant(f), ag::constant(eye)).value(), f) == 0.0);
  const Tensor zero = standard_conv(ag::constant(f), ag::constant(Tensor(Shape{2, 3, 3, 3}))).value();
  for (double x : zero.values()) CHECK(x == 0.0);

  // Delta image: the output is the kernel stamp flipped about its center
  // (cross-correlation convention).
  const Tensor k = randn({1, 1, 3, 3}, rng);
  Tensor delta(Shape{1, 1, 7, 7});
  delta.at({0, 0, 3, 3}) = 1.0;
  const Tensor out = standard_conv(ag::constant(delta), ag::constant(k)).value();
  double worst = 0;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      double expect = 0;
      for (int di = 0; di < 3; ++di)
        for (int dj = 0; dj < 3; ++dj)
          if (i + di - 1 == 3 && j + dj - 1 == 3) expect += k.at({0, 0, di, dj});
      worst = std::max(worst, std::abs(out.at({0, 0, i, j}) - expect));
    }
  CHECK(worst == 0.0);
  CHECK(out.at({0, 0, 2, 2}) == k.at({0, 0, 2, 2}));
  CHECK_THROWS_AS(standard_conv(ag::constant(f), ag::constant(Tensor(Shape{2, 4, 3, 3}))), std::invalid_argument);
}

TEST_CASE("modulated_conv hand example: W=2, s=3 gives unit effective weight") {
  const Var w = ag::constant(filled({1, 1, 1, 1}, {2.0}));
  const Var s = ag::constant(filled({1, 1}, {3.0}));
  CHECK(modulate_weights(w, s, 0.0).value()[0] == 1.0);
  Rng rng(2);
  const Tensor f = randn({1, 1, 4, 4}, rng);
  const Tensor out = ag::conv2d(ag::constant(f), modulate_weights(w, s, 0.0), Var(), 1, 0).value();
  CHECK(max_abs_diff(out, f) == 0.0);
  CHECK_THROWS_AS(modulated_conv(ag::constant(f), w, s, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(modulated_conv(ag::constant(f), w, s, -1.0), std::invalid_argument);
}

TEST_CASE("modulated weights are invariant to positive rescaling of the code") {
  Rng rng(3);
  const Var w = ag::constant(randn({4, 5, 3, 3}, rng));
  const Tensor s = randu({2, 5}, rng, 0.2, 2.0);
  const Tensor a = modulate_weights(w, ag::constant(s), 0.0).value();
  for (double c : {0.01, 0.5, 7.0, 1e3}) {
    const Tensor b = modulate_weights(w, ag::constant(s * c), 0.0).value();
    CHECK(max_abs_diff(a, b) < 1e-10);
  }
}

TEST_CASE("effective weights have unit norm per output channel") {
  Rng rng(4);
  const Var w = ag::constant(randn({6, 5, 3, 3}, rng));
  const Var s = ag::constant(randu({3, 5}, rng, 0.1, 3.0));
  const Tensor m = modulate_weights(w, s, 1e-12).value();
  const std::size_t per = 5 * 9;
  for (int n = 0; n < 3; ++n)
    for (int o = 0; o < 6; ++o) {
      double ss = 0;
      for (std::size_t j = 0; j < per; ++j) {
        const double v = m[(static_cast<std::size_t>(n) * 6 + o) * per + j];
        ss += v * v;
      }
      CHECK(std::abs(std::sqrt(ss) - 1.0) < 1e-6);
    }
}

TEST_CASE("demodulated convolution keeps unit output variance") {
  Rng rng(5);
  const int ci = 8, co = 4, side = 104;
  const Tensor f = randn({1, ci, side, side}, rng);
  const Var out = modulated_conv(ag::constant(f), ag::constant(randn({co, ci, 3, 3}, rng)),
                                 ag::constant(randu({1, ci}, rng, 0.2, 2.0)));
  for (int o = 0; o < co; ++o) {
    double sum = 0, sum2 = 0;
    int count = 0;
    for (int i = 1; i < side - 1; ++i)
      for (int j = 1; j < side - 1; ++j) {
        const double v = out.value().at({0, o, i, j});
        sum += v;
        sum2 += v * v;
        ++count;
      }
    CHECK(count >= 10000);
    const double mean = sum / count;
    const double var = sum2 / count - mean * mean;
    CAPTURE(o);
    CHECK(std::abs(var - 1.0) < 0.1);
  }
}

TEST_CASE("aggregate_identity") {
  Rng rng(6);
  PimStack stack(4, 2, 3, 3, 16, rng);
  SUBCASE("zero embedding gives softplus of the bias, all positive") {
    const auto codes = stack.aggregate_identity(ag::constant(Tensor(Shape{1, 16})));
    REQUIRE(codes.size() == 3);
    for (const auto& c : codes)
      for (double x : c.value().values()) CHECK(x == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("determinism and sensitivity") {
    Tensor e1(Shape{1, 16}), e2(Shape{1, 16});
    e1[0] = 1.0;
    e2[1] = 1.0;
    const auto a = stack.aggregate_identity(ag::constant(e1));
    const auto b = stack.aggregate_identity(ag::constant(e1));
    const auto c = stack.aggregate_identity(ag::constant(e2));
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(max_abs_diff(a[k].value(), b[k].value()) == 0.0);
      CHECK(l2_norm(a[k].value() - c[k].value()) > 1e-3);
      for (double x : c[k].value().values()) CHECK(x > 0.0);
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(stack.aggregate_identity(ag::constant(Tensor(Shape{1, 15}))), std::invalid_argument);
  }
}

TEST_CASE("predicted masks lie strictly inside (0, 1) and are constant for constant input") {
  Rng rng(7);
  PimBlock block(6, 3, rng);
  const Tensor f = randn({2, 6, 8, 8}, rng, 3.0);
  const Tensor masks = block.predict_mask(ag::constant(f)).value();
  for (double x : masks.values()) {
    CAPTURE(x);
    CHECK((x > 0.0 && x < 1.0));
  }
  const Tensor m = block.predict_mask(ag::constant(Tensor(Shape{1, 6, 8, 8}, 0.7))).value();
  double spread = 0;
  // Two 3x3 layers: positions at distance >= 2 from the border see no padding.
  for (int i = 2; i < 6; ++i)
    for (int j = 2; j < 6; ++j) spread = std::max(spread, std::abs(m.at({0, 0, i, j}) - m.at({0, 0, 2, 2})));
  CHECK(spread == 0.0);
}

TEST_CASE("fusion limits") {
  Rng rng(8);
  PimBlock block(6, 3, rng, 0.3);
  const Var f = ag::constant(randn({2, 6, 5, 5}, rng));
  const Var s = ag::constant(randu({2, 6}, rng, 0.3, 2.0));
  const Tensor normal = ag::leaky_relu(standard_conv(f, block.weight()), 0.2).value();
  const Tensor modded = ag::leaky_relu(modulated_conv(f, block.weight(), s), 0.2).value();

  BlockOptions opt;
  opt.mask = MaskMode::kZero;
  CHECK(max_abs_diff(block(f, s, opt).features.value(), normal) == 0.0);
  opt.mask = MaskMode::kOne;
  CHECK(max_abs_diff(block(f, s, opt).features.value(), modded) == 0.0);
  // The general fusion path at constant 0 and 1 is exact as well.
  opt.mask = MaskMode::kConstant;
  opt.constant_mask = 0.0;
  CHECK(max_abs_diff(block(f, s, opt).features.value(), normal) == 0.0);
  opt.constant_mask = 1.0;
  CHECK(max_abs_diff(block(f, s, opt).features.value(), modded) == 0.0);
  opt.constant_mask = 0.5;
  const Tensor mid = block(f, s, opt).preactivation.value();
  const Tensor a = standard_conv(f, block.weight()).value();
  const Tensor b = modulated_conv(f, block.weight(), s).value();
  CHECK(max_abs_diff(mid, (a + b) * 0.5) < 1e-15);
}

TEST_CASE("pim stack with zero mask and identity kernel passes the input through the activation") {
  Rng rng(9);
  PimStack stack(2, 2, 1, 3, 16, rng);
  Tensor& w = stack.blocks()[0].weight().mutable_value();
  w.fill(0.0);
  for (int c = 0; c < 4; ++c) w.at({c, c, 1, 1}) = 1.0;
  const Tensor v = randn({2, 2, 2, 4, 4}, rng);
  const Var e = ag::constant(randn({2, 16}, rng));
  BlockOptions opt;
  opt.mask = MaskMode::kZero;
  const Tensor out = stack(ag::constant(v), e, opt).volume.value();
  CHECK(out.shape() == v.shape());
  CHECK(max_abs_diff(out, ag::leaky_relu(ag::constant(v), 0.2).value()) == 0.0);
  const Tensor again = stack(ag::constant(v), e, opt).volume.value();
  CHECK(max_abs_diff(out, again) == 0.0);
}

TEST_CASE("identity embeddings only matter where the mask is open") {
  // Mask head wired so that channel 0 of the input switches it: input 0
  // gives logit -20 (mask ~2e-9), input 1 gives logit +20.
  Rng rng(10);
  PimStack stack(2, 2, 1, 3, 16, rng);
  nn::NamedParams ps;
  stack.collect("pim", ps);
  for (auto& [name, p] : ps) {
    Var v = p;
    if (name == "pim.block0.mask1.weight") {
      v.mutable_value().fill(0.0);
      v.mutable_value().at({0, 0, 1, 1}) = 40.0;
    } else if (name == "pim.block0.mask1.bias") {
      v.mutable_value().fill(0.0);
    } else if (name == "pim.block0.mask2.weight") {
      v.mutable_value().fill(0.0);
      v.mutable_value().at({0, 0, 1, 1}) = 1.0;
    } else if (name == "pim.block0.mask2.bias") {
      v.mutable_value().fill(-20.0);
    }
  }
  Tensor vol = randu({1, 2, 2, 6, 6}, rng, 0.0, 1.0);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) vol.at({0, 0, 0, y, x}) = x < 3 ? 0.0 : 1.0;
  Rng erng(11);
  const auto e1 = ag::constant(randn({1, 16}, erng)), e2 = ag::constant(randn({1, 16}, erng));
  const auto a = stack(ag::constant(vol), e1), b = stack(ag::constant(vol), e2);
  const Tensor& mask = a.masks[0].value();
  double closed_diff = 0, open_diff = 0;
  for (int c = 0; c < 2; ++c)
    for (int z = 0; z < 2; ++z)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
          const double d = std::abs(a.volume.value().at({0, c, z, y, x}) - b.volume.value().at({0, c, z, y, x}));
          if (mask.at({0, 0, y, x}) < 1e-6) {
            closed_diff = std::max(closed_diff, d);
          } else {
            open_diff = std::max(open_diff, d);
          }
        }
  CHECK(mask.at({0, 0, 2, 0}) < 1e-6);
  CHECK(mask.at({0, 0, 2, 5}) > 0.99);
  CHECK(closed_diff < 1e-6);
  CHECK(open_diff > 1e-4);
}

TEST_CASE("modulation and PIM gradients match finite differences") {
  Rng rng(12);
  const Tensor w = randn({3, 4, 3, 3}, rng), s = randu({2, 4}, rng, 0.3, 2.0), f = randn({2, 4, 5, 5}, rng);
  auto mw = [](const std::vector<Var>& v) { return modulate_weights(v[0], v[1]); };
  CHECK(gradcheck(mw, {w, s}, 0).rel_error < 1e-6);
  CHECK(gradcheck(mw, {w, s}, 1).rel_error < 1e-6);
  auto mc = [](const std::vector<Var>& v) { return modulated_conv(v[0], v[1], v[2]); };
  for (std::size_t i = 0; i < 3; ++i) CHECK(gradcheck(mc, {f, w, s}, i).rel_error < 1e-6);

  PimBlock block(4, 3, rng, 0.3);
  const Var sv = ag::constant(s);
  nn::NamedParams ps;
  block.collect("b", ps);
  for (auto& [name, p] : ps) {
    CAPTURE(name);
    const auto r = gradcheck_param([&] { return block(ag::constant(f), sv).features; }, p);
    CHECK(r.checked > 0);
    CHECK(r.rel_error < 1e-6);
  }
  auto blk = [&](const std::vector<Var>& v) { return block(v[0], v[1]).features; };
  CHECK(gradcheck(blk, {f, s}, 0).rel_error < 1e-6);
  CHECK(gradcheck(blk, {f, s}, 1).rel_error < 1e-6);
}

TEST_CASE("refiner starts as the exact identity") {
  Rng rng(13);
  refine::Refiner r(3, rng);
  for (const Shape& s : {Shape{1, 3, 4, 8, 8}, Shape{2, 3, 2, 4, 6}}) {
    const Tensor v = randn(s, rng);
    const Tensor out = r(ag::constant(v)).value();
    CHECK(out.shape() == s);
    CHECK(max_abs_diff(out, v) == 0.0);
  }
  CHECK_THROWS_AS(r(ag::constant(Tensor(Shape{1, 2, 4, 8, 8}))), std::invalid_argument);
  CHECK_THROWS_AS(r(ag::constant(Tensor(Shape{1, 3, 3, 8, 8}))), std::invalid_argument);
}

TEST_CASE("refiner gradients match finite differences") {
  Rng rng(14);
  refine::Refiner r(2, rng);
  nn::NamedParams ps;
  r.collect("r", ps);
  // Move off the zero-init point so every parameter receives gradient.
  for (auto& [name, p] : ps) {
    Var v = p;
    for (double& x : v.mutable_value().values()) x += 0.1 * normal(rng);
  }
  const Tensor v = randn({1, 2, 2, 4, 4}, rng);
  for (auto& [name, p] : ps) {
    CAPTURE(name);
    const auto res = gradcheck_param([&] { return r(ag::constant(v)); }, p);
    CHECK(res.rel_error < 1e-6);
  }
  CHECK(gradcheck([&](const std::vector<Var>& x) { return r(x[0]); }, {v}, 0).rel_error < 1e-6);
}
