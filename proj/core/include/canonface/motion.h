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

#include <array>
#include <string>

#include "canonface/autograd.h"
#include "canonface/geometry.h"
#include "canonface/nn.h"

// Implicit-keypoint motion model: keypoint composition, the image-space
// motion extractor and Gaussian sparse-to-dense deformation fields.
namespace canonface::motion {

using ag::Var;

/// Dense sampling grid, [D, H, W, 3] with (x, y, z) in the last axis.
struct DeformationField {
  Tensor grid;

  int depth() const { return grid.dim(0); }
  int height() const { return grid.dim(1); }
  int width() const { return grid.dim(2); }
};

struct VolumeShape {
  int depth = 4;
  int height = 8;
  int width = 8;
};

inline constexpr double kDefaultSigma = 0.15;

/// Voxel-center coordinate of index i along an axis of n voxels.
inline double voxel_center(int i, int n) { return (2.0 * i + 1.0) / n - 1.0; }

/// canonical * rotation + expression + translation (row vectors).
KeypointSet compose_keypoints(const KeypointSet& canonical, const MotionParams& motion);

/// Batched, differentiable composition. xc, e: [N, n, 3]; r: [N, 3, 3]; t: [N, 3].
Var compose(const Var& xc, const Var& r, const Var& e, const Var& t);

/// field(p) = p + sum_k w_k(p) (src_k - dst_k), with w the softmax over k of
/// -|p - dst_k|^2 / (2 sigma^2). Gaussians sit on the destination keypoints.
DeformationField estimate_deformation(const KeypointSet& src, const KeypointSet& dst, VolumeShape shape,
                                      double sigma = kDefaultSigma);
/// Batched op. src, dst: [N, n, 3] -> [N, D, H, W, 3].
Var deformation(const Var& src, const Var& dst, VolumeShape shape, double sigma = kDefaultSigma);

struct FieldPair {
  DeformationField o_to_c;
  DeformationField c_to_o;
};

/// Fields into (X -> Xc) and out of (Xc -> X) the canonical space.
FieldPair canonical_pair(const KeypointSet& x, const KeypointSet& xc, VolumeShape shape,
                         double sigma = kDefaultSigma);

/// Canonical keypoints driven by the target pose with the source expression.
KeypointSet animation_retarget(const KeypointSet& canonical, const MotionParams& target_motion,
                               const KeypointMatrix& source_expression);

/// Nearest rotation of each [3, 3] block, differentiable. m: [N, 3, 3].
Var orthonormalize(const Var& m);
/// Axis-angle vector of each rotation. r: [N, 3, 3] -> [N, 3].
Var axis_angle(const Var& r);

/// Per-sample motion estimate in batched tensors.
struct MotionEstimate {
  Var canonical;    ///< [N, n, 3]
  Var rotation;     ///< [N, 3, 3], exact rotations
  Var expression;   ///< [N, n, 3]
  Var translation;  ///< [N, 3]

  Var keypoints() const { return compose(canonical, rotation, expression, translation); }
  /// Sample i as plain matrices.
  KeypointSet canonical_at(int i) const;
  MotionParams motion_at(int i) const;
};

/// Small convolutional regressor from an image to keypoints and motion.
class MotionExtractor {
 public:
  MotionExtractor() = default;
  MotionExtractor(int image_size, int n_keypoints, Rng& rng);

  /// images: [N, 3, S, S].
  MotionEstimate operator()(const Var& images) const;
  void collect(const std::string& prefix, nn::NamedParams& out) const;

  int image_size() const { return image_size_; }
  int keypoints() const { return n_; }

 private:
  int image_size_ = 0;
  int n_ = 0;
  nn::Conv2d c1_, c2_, c3_;
  nn::Linear fc_;
  nn::Linear head_xc_, head_rot_, head_exp_, head_t_;
};

}  // namespace canonface::motion
