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

#include "canonface/autograd.h"
#include "canonface/nn.h"

// One-level 3-D U-Net applied as a zero-initialized residual to the swapped
// canonical volume.
namespace canonface::refine {

using ag::Var;

class Refiner {
 public:
  Refiner() = default;
  Refiner(int channels, Rng& rng);

  /// volume: [N, C, D, H, W] with even D, H, W. Returns volume + residual.
  Var operator()(const Var& volume) const;
  /// Residual branch alone.
  Var residual(const Var& volume) const;
  void collect(const std::string& prefix, nn::NamedParams& out) const;

  int channels() const { return channels_; }

 private:
  int channels_ = 0;
  nn::Conv3d in_, down_, mid_, up_, out_;
};

}  // namespace canonface::refine
