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

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "canonface/autograd.h"

namespace canonface {

using Rng = std::mt19937_64;

double normal(Rng& rng, double mean = 0.0, double stddev = 1.0);
double uniform(Rng& rng, double lo, double hi);
Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);
Tensor randu(Shape shape, Rng& rng, double lo, double hi);

}  // namespace canonface

namespace canonface::nn {

using ag::Var;
using NamedParams = std::vector<std::pair<std::string, Var>>;

/// Gain for a leaky rectifier with the slope used throughout the networks.
inline constexpr double kLeakySlope = 0.2;
double leaky_gain(double slope = kLeakySlope);

struct Conv2d {
  Var weight;
  Var bias;
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int kernel, int stride, Rng& rng, bool with_bias = true,
         double gain = leaky_gain());
  Var operator()(const Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

struct Conv3d {
  Var weight;
  Var bias;
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{1, 1, 1};

  Conv3d() = default;
  Conv3d(int in_ch, int out_ch, int kernel, std::array<int, 3> stride, Rng& rng, double gain = leaky_gain());
  Var operator()(const Var& x) const { return ag::conv3d(x, weight, bias, stride, pad); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

struct Linear {
  Var weight;
  Var bias;

  Linear() = default;
  Linear(int in, int out, Rng& rng, double gain = leaky_gain());
  Var operator()(const Var& x) const { return ag::linear(x, weight, bias); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

void set_trainable(const NamedParams& params, bool trainable);
void zero_grad(const NamedParams& params);
std::size_t parameter_count(const NamedParams& params);

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Decoupled-weight-decay Adam. Moment buffers are keyed by parameter order,
/// so the parameter list passed at construction must stay fixed.
class AdamW {
 public:
  AdamW(NamedParams params, AdamWConfig cfg);

  void step();
  void zero_grad() { nn::zero_grad(params_); }

  const NamedParams& params() const { return params_; }
  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::int64_t steps() const { return t_; }

  // State access for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  NamedParams params_;
  AdamWConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t t_ = 0;
};

}  // namespace canonface::nn
