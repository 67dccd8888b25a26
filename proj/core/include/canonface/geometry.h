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

#include <Eigen/Core>

namespace canonface {

using KeypointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Mat3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
using Vec3 = Eigen::RowVector3d;

/// n x 3 keypoints in normalized scene units, row per keypoint.
struct KeypointSet {
  KeypointMatrix points;

  KeypointSet() = default;
  explicit KeypointSet(KeypointMatrix p) : points(std::move(p)) {}

  int count() const { return static_cast<int>(points.rows()); }
  /// Throws invalid_argument unless n >= 3 and every coordinate is finite.
  void validate() const;
};

/// Pose rotation (right-multiplied, row-vector convention), per-keypoint
/// expression offsets and a global translation.
struct MotionParams {
  Mat3 rotation = Mat3::Identity();
  KeypointMatrix expression;
  Vec3 translation = Vec3::Zero();

  static MotionParams identity(int n);
  /// Throws invalid_argument unless rotation is orthonormal with det +1.
  void validate(double tol = 1e-6) const;
};

bool is_rotation(const Mat3& r, double tol = 1e-6);

/// Rotation from yaw (about y), pitch (about x) and roll (about z), applied
/// to row vectors as v * R.
Mat3 rotation_from_euler(double yaw, double pitch, double roll);
/// Inverse of rotation_from_euler for angles in (-pi/2, pi/2).
Vec3 euler_from_rotation(const Mat3& r);

/// Rodrigues map. The vector is the rotation axis scaled by the angle.
Mat3 rotation_from_axis_angle(const Vec3& w);
Vec3 axis_angle_from_rotation(const Mat3& r);

/// Nearest orthonormal matrix with det +1 (polar factor via SVD).
Mat3 nearest_rotation(const Mat3& m);

}  // namespace canonface
