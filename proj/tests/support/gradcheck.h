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

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "canonface/autograd.h"
#include "canonface/nn.h"

namespace canonface::testing {

struct GradCheckResult {
  double rel_error = 0.0;
  int checked = 0;
  int skipped_kinks = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  int max_coords = 40;
  /// One-sided slopes disagreeing by more than this flag a kink.
  double kink_tol = 1e-3;
  std::uint64_t seed = 7;
};

/// Reduces any output to a scalar through a fixed random projection so
/// every output element contributes to the checked gradient.
inline ag::Var random_projection(const ag::Var& out, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = randn(out.shape(), rng);
  return ag::sum(ag::mul(out, ag::constant(std::move(w))));
}

/// Compares reverse-mode gradients of `f` with central differences on a
/// random subset of coordinates of input `which`. Error is
/// |g_a - g_n| / max(|g_a|, |g_n|, 1e-12) over the subset.
inline GradCheckResult gradcheck(const std::function<ag::Var(const std::vector<ag::Var>&)>& f,
                                 std::vector<Tensor> inputs, std::size_t which,
                                 const GradCheckOptions& opt = {}) {
  auto eval = [&](const std::vector<Tensor>& vals, bool with_grad) {
    std::vector<ag::Var> vars;
    for (std::size_t i = 0; i < vals.size(); ++i) vars.emplace_back(vals[i], with_grad && i == which);
    ag::Var out = random_projection(f(vars), opt.seed);
    if (with_grad) {
      ag::backward(out);
      return std::make_pair(out.item(), vars[which].has_grad() ? vars[which].grad() : Tensor::zeros_like(vals[which]));
    }
    return std::make_pair(out.item(), Tensor());
  };
  const Tensor analytic = eval(inputs, true).second;

  const std::size_t n = inputs[which].size();
  std::vector<std::size_t> coords(n);
  for (std::size_t i = 0; i < n; ++i) coords[i] = i;
  Rng rng(opt.seed + 1);
  std::shuffle(coords.begin(), coords.end(), rng);

  GradCheckResult res;
  double diff2 = 0, a2 = 0, n2 = 0;
  for (std::size_t c : coords) {
    if (res.checked >= opt.max_coords) break;
    const double x0 = inputs[which][c];
    auto at = [&](double x) {
      inputs[which][c] = x;
      const double v = eval(inputs, false).first;
      inputs[which][c] = x0;
      return v;
    };
    const double h = opt.step;
    const double fp = at(x0 + h), fm = at(x0 - h), f0 = at(x0);
    const double right = (fp - f0) / h, left = (f0 - fm) / h;
    if (std::abs(right - left) > opt.kink_tol * std::max(1.0, std::abs(right) + std::abs(left))) {
      ++res.skipped_kinks;
      continue;
    }
    const double gn = (fp - fm) / (2 * h);
    const double ga = analytic[c];
    diff2 += (ga - gn) * (ga - gn);
    a2 += ga * ga;
    n2 += gn * gn;
    ++res.checked;
  }
  res.rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  return res;
}

/// Same check for a parameter captured inside `f` (perturbed in place).
inline GradCheckResult gradcheck_param(const std::function<ag::Var()>& f, ag::Var param,
                                       const GradCheckOptions& opt = {}) {
  param.zero_grad();
  const bool was = param.requires_grad();
  param.set_requires_grad(true);
  {
    ag::Var out = random_projection(f(), opt.seed);
    ag::backward(out);
  }
  const Tensor analytic = param.has_grad() ? param.grad() : Tensor::zeros_like(param.value());
  param.zero_grad();
  param.set_requires_grad(was);

  Tensor& w = param.mutable_value();
  std::vector<std::size_t> coords(w.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  Rng rng(opt.seed + 1);
  std::shuffle(coords.begin(), coords.end(), rng);
  auto eval = [&] { return random_projection(f(), opt.seed).item(); };

  GradCheckResult res;
  double diff2 = 0, a2 = 0, n2 = 0;
  for (std::size_t c : coords) {
    if (res.checked >= opt.max_coords) break;
    const double x0 = w[c];
    const double h = opt.step;
    w[c] = x0 + h;
    const double fp = eval();
    w[c] = x0 - h;
    const double fm = eval();
    w[c] = x0;
    const double f0 = eval();
    const double right = (fp - f0) / h, left = (f0 - fm) / h;
    if (std::abs(right - left) > opt.kink_tol * std::max(1.0, std::abs(right) + std::abs(left))) {
      ++res.skipped_kinks;
      continue;
    }
    const double gn = (fp - fm) / (2 * h);
    diff2 += (analytic[c] - gn) * (analytic[c] - gn);
    a2 += analytic[c] * analytic[c];
    n2 += gn * gn;
    ++res.checked;
  }
  res.rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  return res;
}

}  // namespace canonface::testing
