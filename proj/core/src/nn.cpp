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

#include "canonface/nn.h"

#include <cmath>
#include <stdexcept>

namespace canonface {

double normal(Rng& rng, double mean, double stddev) {
  std::normal_distribution<double> d(mean, stddev);
  return d(rng);
}

double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

Tensor randn(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> d(0.0, stddev);
  for (double& v : t.values()) v = d(rng);
  return t;
}

Tensor randu(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.values()) v = d(rng);
  return t;
}

}  // namespace canonface

namespace canonface::nn {

double leaky_gain(double slope) { return std::sqrt(2.0 / (1.0 + slope * slope)); }

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride_, Rng& rng, bool with_bias, double gain)
    : stride(stride_), pad(kernel / 2) {
  const double fan_in = static_cast<double>(in_ch * kernel * kernel);
  weight = ag::parameter(randn({out_ch, in_ch, kernel, kernel}, rng, gain / std::sqrt(fan_in)));
  if (with_bias) bias = ag::parameter(Tensor(Shape{out_ch}));
}

void Conv2d::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

Conv3d::Conv3d(int in_ch, int out_ch, int kernel, std::array<int, 3> stride_, Rng& rng, double gain)
    : stride(stride_), pad{kernel / 2, kernel / 2, kernel / 2} {
  const double fan_in = static_cast<double>(in_ch * kernel * kernel * kernel);
  weight = ag::parameter(randn({out_ch, in_ch, kernel, kernel, kernel}, rng, gain / std::sqrt(fan_in)));
  bias = ag::parameter(Tensor(Shape{out_ch}));
}

void Conv3d::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

Linear::Linear(int in, int out, Rng& rng, double gain) {
  weight = ag::parameter(randn({out, in}, rng, gain / std::sqrt(static_cast<double>(in))));
  bias = ag::parameter(Tensor(Shape{out}));
}

void Linear::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

void set_trainable(const NamedParams& params, bool trainable) {
  for (const auto& [name, p] : params) {
    auto v = p;
    v.set_requires_grad(trainable);
  }
}

void zero_grad(const NamedParams& params) {
  for (const auto& [name, p] : params) {
    auto v = p;
    v.zero_grad();
  }
}

std::size_t parameter_count(const NamedParams& params) {
  std::size_t n = 0;
  for (const auto& [name, p] : params) n += p.value().size();
  return n;
}

AdamW::AdamW(NamedParams params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.lr < 0 || cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1) {
    throw std::invalid_argument("AdamW: invalid hyper-parameters");
  }
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Var p = params_[k].second;
    Tensor& w = p.mutable_value();
    const bool has_grad = p.has_grad();
    const Tensor& g = p.grad();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has_grad ? g[i] : 0.0;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
    }
  }
}

}  // namespace canonface::nn
