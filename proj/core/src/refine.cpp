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

#include "canonface/refine.h"

#include <stdexcept>

namespace canonface::refine {

Refiner::Refiner(int channels, Rng& rng) : channels_(channels) {
  if (channels < 1) throw std::invalid_argument("refiner needs at least one channel");
  in_ = nn::Conv3d(channels, channels, 3, {1, 1, 1}, rng);
  down_ = nn::Conv3d(channels, 2 * channels, 3, {2, 2, 2}, rng);
  mid_ = nn::Conv3d(2 * channels, 2 * channels, 3, {1, 1, 1}, rng);
  up_ = nn::Conv3d(3 * channels, channels, 3, {1, 1, 1}, rng);
  out_ = nn::Conv3d(channels, channels, 3, {1, 1, 1}, rng);
  out_.weight.mutable_value().fill(0.0);
  out_.bias.mutable_value().fill(0.0);
}

Var Refiner::residual(const Var& volume) const {
  const auto& s = volume.shape();
  if (s.size() != 5 || s[1] != channels_) {
    throw std::invalid_argument("refiner: expected [N, " + std::to_string(channels_) + ", D, H, W], got " +
                                shape_str(s));
  }
  if (s[2] % 2 || s[3] % 2 || s[4] % 2) throw std::invalid_argument("refiner: spatial dimensions must be even");
  constexpr double slope = nn::kLeakySlope;
  const Var skip = ag::leaky_relu(in_(volume), slope);
  Var h = ag::leaky_relu(down_(skip), slope);
  h = ag::leaky_relu(mid_(h), slope);
  h = ag::upsample_nearest3d(h, {2, 2, 2});
  h = ag::leaky_relu(up_(ag::concat_channels({h, skip})), slope);
  return out_(h);
}

Var Refiner::operator()(const Var& volume) const { return ag::add(volume, residual(volume)); }

void Refiner::collect(const std::string& prefix, nn::NamedParams& out) const {
  in_.collect(prefix + ".in", out);
  down_.collect(prefix + ".down", out);
  mid_.collect(prefix + ".mid", out);
  up_.collect(prefix + ".up", out);
  out_.collect(prefix + ".out", out);
}

}  // namespace canonface::refine
