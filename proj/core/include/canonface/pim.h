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

#include <string>
#include <vector>

#include "canonface/autograd.h"
#include "canonface/nn.h"

// Partial identity modulation: an identity-modulated convolution branch
// fused with a plain branch through a predicted spatial mask. Blocks act on
// the canonical volume with depth folded into channels.
namespace canonface::pim {

using ag::Var;

inline constexpr double kDefaultEpsilon = 1e-8;

/// Plain same-padded convolution, no bias. f: [N, Ci, H, W]; w: [Co, Ci, k, k].
Var standard_conv(const Var& f, const Var& w);

/// Per-sample effective weights s_i W[o, i] / sqrt(sum_{i,k,k} (s_i W[o, i])^2 + eps).
/// w: [Co, Ci, k, k]; s: [N, Ci] -> [N, Co, Ci, k, k].
Var modulate_weights(const Var& w, const Var& s, double eps = kDefaultEpsilon);

/// Convolution with modulated, demodulated weights. eps must be positive;
/// modulate_weights also accepts eps = 0 for the analytic limit.
Var modulated_conv(const Var& f, const Var& w, const Var& s, double eps = kDefaultEpsilon);

enum class MaskMode {
  kPredicted,
  kZero,      ///< plain branch only
  kOne,       ///< modulated branch everywhere (global modulation)
  kConstant,  ///< fixed value from BlockOptions::constant_mask
};

struct BlockOptions {
  MaskMode mask = MaskMode::kPredicted;
  double constant_mask = 0.5;
  double eps = kDefaultEpsilon;
};

struct BlockOutput {
  Var features;     ///< activated fusion, [N, C, H, W]
  Var mask;         ///< [N, 1, H, W]
  Var preactivation;
};

class PimBlock {
 public:
  PimBlock() = default;
  /// Conv weights start at the identity kernel plus noise of scale `noise`.
  PimBlock(int channels, int kernel, Rng& rng, double noise = 0.02);

  /// Mask predictor: conv3 -> leaky -> conv3 -> logistic.
  Var predict_mask(const Var& f) const;
  BlockOutput operator()(const Var& f, const Var& s_id, const BlockOptions& opt = {}) const;
  void collect(const std::string& prefix, nn::NamedParams& out) const;

  int channels() const { return channels_; }
  Var& weight() { return weight_; }
  const Var& weight() const { return weight_; }

 private:
  int channels_ = 0;
  Var weight_;
  nn::Conv2d mask1_, mask2_;
};

/// Per-block affine maps from the identity embedding to positive codes:
/// s_b = softplus(A_b e + c_b).
class IdentityMlp {
 public:
  IdentityMlp() = default;
  IdentityMlp(int embedding_dim, int channels, int blocks, Rng& rng);

  /// e: [N, d] -> one [N, channels] code per block.
  std::vector<Var> operator()(const Var& embedding) const;
  void collect(const std::string& prefix, nn::NamedParams& out) const;
  int embedding_dim() const { return dim_; }

 private:
  int dim_ = 0;
  std::vector<nn::Linear> maps_;
};

struct StackOutput {
  Var volume;               ///< [N, C, D, H, W]
  std::vector<Var> masks;   ///< per block, [N, 1, H, W]
};

class PimStack {
 public:
  PimStack() = default;
  PimStack(int channels, int depth, int blocks, int kernel, int embedding_dim, Rng& rng);

  /// Folds depth into channels, applies every block, unfolds.
  StackOutput operator()(const Var& volume, const Var& embedding, const BlockOptions& opt = {}) const;
  std::vector<Var> aggregate_identity(const Var& embedding) const { return mlp_(embedding); }
  void collect(const std::string& prefix, nn::NamedParams& out) const;

  std::vector<PimBlock>& blocks() { return blocks_; }
  const std::vector<PimBlock>& blocks() const { return blocks_; }

 private:
  int channels_ = 0, depth_ = 0;
  std::vector<PimBlock> blocks_;
  IdentityMlp mlp_;
};

}  // namespace canonface::pim
