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
#include "canonface/motion.h"
#include "canonface/nn.h"

// Trilinear resampling of appearance volumes and the appearance
// encoder/decoder pair that maps images to and from volumes.
namespace canonface::warp {

using ag::Var;
using motion::DeformationField;
using motion::VolumeShape;

/// grid[z, y, x] = (voxel_center(x), voxel_center(y), voxel_center(z)).
DeformationField identity_field(VolumeShape shape);

/// Trilinear sampling with border clamping. volume: [N, C, D, H, W];
/// grid: [N, Do, Ho, Wo, 3] in normalized coordinates -> [N, C, Do, Ho, Wo].
Var grid_sample3d(const Var& volume, const Var& grid);

/// Single-volume convenience form. volume: [C, D, H, W]; field spatial
/// shape must equal the volume's.
Tensor warp_volume(const Tensor& volume, const DeformationField& field);

struct VolumeConfig {
  int image_size = 32;
  int channels = 8;
  int depth = 4;

  int spatial() const { return image_size / 4; }
  VolumeShape shape() const { return {depth, spatial(), spatial()}; }
};

class AppearanceEncoder {
 public:
  AppearanceEncoder() = default;
  AppearanceEncoder(const VolumeConfig& cfg, Rng& rng);

  /// images: [N, 3, S, S] -> [N, C, D, S/4, S/4], entries >= 0.
  Var operator()(const Var& images) const;
  /// Same network returning the intermediate 2-D feature maps, used as
  /// perceptual features.
  std::vector<Var> features(const Var& images) const;
  void collect(const std::string& prefix, nn::NamedParams& out) const;
  const VolumeConfig& config() const { return cfg_; }

 private:
  VolumeConfig cfg_;
  nn::Conv2d c1_, c2_, c3_;
};

class AppearanceDecoder {
 public:
  AppearanceDecoder() = default;
  AppearanceDecoder(const VolumeConfig& cfg, Rng& rng);

  /// volumes: [N, C, D, S/4, S/4] -> [N, 3, S, S] in (0, 1).
  Var operator()(const Var& volumes) const;
  void collect(const std::string& prefix, nn::NamedParams& out) const;

 private:
  VolumeConfig cfg_;
  nn::Conv2d c1_, c2_, c3_, out_;
};

}  // namespace canonface::warp
