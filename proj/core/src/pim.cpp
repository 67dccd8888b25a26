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

#include "canonface/pim.h"

#include <cmath>
#include <stdexcept>

namespace canonface::pim {

Var standard_conv(const Var& f, const Var& w) {
  if (f.value().rank() != 4 || w.value().rank() != 4 || f.dim(1) != w.dim(1)) {
    throw std::invalid_argument("standard_conv: channel mismatch between " + shape_str(f.shape()) + " and " +
                                shape_str(w.shape()));
  }
  return ag::conv2d(f, w, Var(), 1, w.dim(2) / 2);
}

Var modulate_weights(const Var& w, const Var& s, double eps) {
  if (eps < 0) throw std::invalid_argument("modulate_weights: epsilon must be non-negative");
  const auto& ws = w.shape();
  if (ws.size() != 4 || s.value().rank() != 2 || s.dim(1) != ws[1]) {
    throw std::invalid_argument("modulate_weights: identity code length must equal the input channel count");
  }
  const int nb = s.dim(0), co = ws[0], ci = ws[1], kk = ws[2] * ws[3];
  Tensor out(Shape{nb, co, ci, ws[2], ws[3]});
  auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(nb * co));
  const Tensor& wv = w.value();
  const Tensor& sv = s.value();
  for (int n = 0; n < nb; ++n)
    for (int o = 0; o < co; ++o) {
      double ss = 0;
      for (int i = 0; i < ci; ++i) {
        const double si = sv[static_cast<std::size_t>(n * ci + i)];
        for (int k = 0; k < kk; ++k) {
          const double u = si * wv[static_cast<std::size_t>((o * ci + i) * kk + k)];
          ss += u * u;
        }
      }
      const double d = std::sqrt(ss + eps);
      if (!(d > 0)) throw std::invalid_argument("modulate_weights: zero weight norm with epsilon = 0");
      (*norms)[static_cast<std::size_t>(n * co + o)] = d;
      for (int i = 0; i < ci; ++i) {
        const double si = sv[static_cast<std::size_t>(n * ci + i)];
        for (int k = 0; k < kk; ++k) {
          const std::size_t wi = static_cast<std::size_t>((o * ci + i) * kk + k);
          out[static_cast<std::size_t>(n) * co * ci * kk + wi] = si * wv[wi] / d;
        }
      }
    }
  return ag::make_op(std::move(out), {w, s}, [=](ag::Node& node) {
    const Tensor& wv = node.input_value(0);
    const Tensor& sv = node.input_value(1);
    const Tensor& wp = node.value;
    const Tensor& g = node.grad;
    Tensor gw(wv.shape()), gs(sv.shape());
    const std::size_t per = static_cast<std::size_t>(co) * ci * kk;
    for (int n = 0; n < nb; ++n)
      for (int o = 0; o < co; ++o) {
        const double d = (*norms)[static_cast<std::size_t>(n * co + o)];
        const std::size_t base = static_cast<std::size_t>(n) * per + static_cast<std::size_t>(o) * ci * kk;
        double c = 0;
        for (std::size_t j = 0; j < static_cast<std::size_t>(ci * kk); ++j) c += g[base + j] * wp[base + j];
        for (int i = 0; i < ci; ++i) {
          const double si = sv[static_cast<std::size_t>(n * ci + i)];
          for (int k = 0; k < kk; ++k) {
            const std::size_t j = static_cast<std::size_t>(i * kk + k);
            const double gu = (g[base + j] - c * wp[base + j]) / d;
            const std::size_t wi = static_cast<std::size_t>(o) * ci * kk + j;
            gw[wi] += gu * si;
            gs[static_cast<std::size_t>(n * ci + i)] += gu * wv[wi];
          }
        }
      }
    if (node.input_wants_grad(0)) node.input_grad(0) += gw;
    if (node.input_wants_grad(1)) node.input_grad(1) += gs;
  });
}

Var modulated_conv(const Var& f, const Var& w, const Var& s, double eps) {
  if (!(eps > 0)) throw std::invalid_argument("modulated_conv: epsilon must be positive");
  if (f.value().rank() != 4 || f.dim(1) != w.dim(1) || s.dim(0) != f.dim(0)) {
    throw std::invalid_argument("modulated_conv: shape mismatch");
  }
  return ag::conv2d(f, modulate_weights(w, s, eps), Var(), 1, w.dim(2) / 2);
}

PimBlock::PimBlock(int channels, int kernel, Rng& rng, double noise) : channels_(channels) {
  if (kernel % 2 == 0) throw std::invalid_argument("PIM kernel size must be odd");
  Tensor w = randn({channels, channels, kernel, kernel}, rng, noise);
  for (int c = 0; c < channels; ++c) w.at({c, c, kernel / 2, kernel / 2}) += 1.0;
  weight_ = ag::parameter(std::move(w));
  mask1_ = nn::Conv2d(channels, 8, 3, 1, rng);
  mask2_ = nn::Conv2d(8, 1, 3, 1, rng, true, 1.0);
}

Var PimBlock::predict_mask(const Var& f) const {
  // The margin keeps saturated logistic outputs strictly inside (0, 1).
  constexpr double margin = 1e-9;
  const Var a = ag::sigmoid(mask2_(ag::leaky_relu(mask1_(f), nn::kLeakySlope)));
  return ag::add_scalar(ag::scale(a, 1.0 - 2.0 * margin), margin);
}

BlockOutput PimBlock::operator()(const Var& f, const Var& s_id, const BlockOptions& opt) const {
  if (f.value().rank() != 4 || f.dim(1) != channels_) {
    throw std::invalid_argument("PIM block: expected " + std::to_string(channels_) + " channels, got " +
                                shape_str(f.shape()));
  }
  const int nb = f.dim(0), h = f.dim(2), w = f.dim(3);
  BlockOutput out;
  switch (opt.mask) {
    case MaskMode::kPredicted:
      out.mask = predict_mask(f);
      break;
    case MaskMode::kZero:
      out.mask = ag::constant(Tensor(Shape{nb, 1, h, w}, 0.0));
      break;
    case MaskMode::kOne:
      out.mask = ag::constant(Tensor(Shape{nb, 1, h, w}, 1.0));
      break;
    case MaskMode::kConstant:
      out.mask = ag::constant(Tensor(Shape{nb, 1, h, w}, opt.constant_mask));
      break;
  }
  // Branches with zero weight everywhere are not evaluated.
  Var fused;
  if (opt.mask == MaskMode::kZero) {
    fused = standard_conv(f, weight_);
  } else if (opt.mask == MaskMode::kOne) {
    fused = modulated_conv(f, weight_, s_id, opt.eps);
  } else {
    const Var f_normal = standard_conv(f, weight_);
    const Var f_id = modulated_conv(f, weight_, s_id, opt.eps);
    const Var one_minus = ag::add_scalar(ag::scale(out.mask, -1.0), 1.0);
    fused = ag::add(ag::mul_channel_broadcast(f_id, out.mask), ag::mul_channel_broadcast(f_normal, one_minus));
  }
  out.preactivation = fused;
  out.features = ag::leaky_relu(fused, nn::kLeakySlope);
  return out;
}

void PimBlock::collect(const std::string& prefix, nn::NamedParams& out) const {
  out.emplace_back(prefix + ".weight", weight_);
  mask1_.collect(prefix + ".mask1", out);
  mask2_.collect(prefix + ".mask2", out);
}

IdentityMlp::IdentityMlp(int embedding_dim, int channels, int blocks, Rng& rng) : dim_(embedding_dim) {
  const double bias0 = std::log(std::exp(1.0) - 1.0);  // softplus(bias0) = 1
  for (int b = 0; b < blocks; ++b) {
    nn::Linear l(embedding_dim, channels, rng, 1.0);
    l.bias.mutable_value().fill(bias0);
    maps_.push_back(l);
  }
}

std::vector<Var> IdentityMlp::operator()(const Var& embedding) const {
  if (embedding.value().rank() != 2 || embedding.dim(1) != dim_) {
    throw std::invalid_argument("aggregate_identity: expected embedding dimension " + std::to_string(dim_));
  }
  std::vector<Var> codes;
  for (const auto& m : maps_) codes.push_back(ag::softplus(m(embedding)));
  return codes;
}

void IdentityMlp::collect(const std::string& prefix, nn::NamedParams& out) const {
  for (std::size_t b = 0; b < maps_.size(); ++b) maps_[b].collect(prefix + "." + std::to_string(b), out);
}

PimStack::PimStack(int channels, int depth, int blocks, int kernel, int embedding_dim, Rng& rng)
    : channels_(channels), depth_(depth) {
  if (blocks < 1) throw std::invalid_argument("PIM needs at least one block");
  for (int b = 0; b < blocks; ++b) blocks_.emplace_back(channels * depth, kernel, rng);
  mlp_ = IdentityMlp(embedding_dim, channels * depth, blocks, rng);
}

StackOutput PimStack::operator()(const Var& volume, const Var& embedding, const BlockOptions& opt) const {
  const auto& s = volume.shape();
  if (s.size() != 5 || s[1] != channels_ || s[2] != depth_) {
    throw std::invalid_argument("PIM: volume shape " + shape_str(s) + " does not match configuration");
  }
  const auto codes = mlp_(embedding);
  Var f = ag::reshape(volume, {s[0], s[1] * s[2], s[3], s[4]});
  StackOutput out;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    auto r = blocks_[b](f, codes[b], opt);
    f = r.features;
    out.masks.push_back(r.mask);
  }
  out.volume = ag::reshape(f, s);
  return out;
}

void PimStack::collect(const std::string& prefix, nn::NamedParams& out) const {
  for (std::size_t b = 0; b < blocks_.size(); ++b) blocks_[b].collect(prefix + ".block" + std::to_string(b), out);
  mlp_.collect(prefix + ".id_mlp", out);
}

}  // namespace canonface::pim
