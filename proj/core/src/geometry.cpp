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

#include "canonface/geometry.h"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace canonface {

void KeypointSet::validate() const {
  if (points.rows() < 3) throw std::invalid_argument("keypoint set needs at least 3 points");
  if (!points.allFinite()) throw std::invalid_argument("keypoint set contains non-finite coordinates");
}

MotionParams MotionParams::identity(int n) {
  MotionParams m;
  m.expression = KeypointMatrix::Zero(n, 3);
  return m;
}

void MotionParams::validate(double tol) const {
  if (!is_rotation(rotation, tol)) throw std::invalid_argument("motion rotation is not a proper rotation");
  if (!expression.allFinite() || !translation.allFinite()) {
    throw std::invalid_argument("motion parameters contain non-finite values");
  }
}

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  const double ortho = (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

namespace {

// Rotation matrices written for row vectors: v_rot = v * R.
Mat3 rot_y(double a) {
  Mat3 r;
  const double c = std::cos(a), s = std::sin(a);
  r << c, 0, -s,  //
      0, 1, 0,    //
      s, 0, c;
  return r;
}

Mat3 rot_x(double a) {
  Mat3 r;
  const double c = std::cos(a), s = std::sin(a);
  r << 1, 0, 0,  //
      0, c, s,   //
      0, -s, c;
  return r;
}

Mat3 rot_z(double a) {
  Mat3 r;
  const double c = std::cos(a), s = std::sin(a);
  r << c, s, 0,  //
      -s, c, 0,  //
      0, 0, 1;
  return r;
}

}  // namespace

Mat3 rotation_from_euler(double yaw, double pitch, double roll) {
  // Roll first, then pitch, then yaw (row vectors compose left to right).
  return rot_z(roll) * rot_x(pitch) * rot_y(yaw);
}

Vec3 euler_from_rotation(const Mat3& r) {
  // Entries of Rz(roll) Rx(pitch) Ry(yaw):
  //   r(2,1) = -sin(pitch)
  //   r(2,0) = cos(pitch) sin(yaw),  r(2,2) = cos(pitch) cos(yaw)
  //   r(0,1) = cos(pitch) sin(roll), r(1,1) = cos(pitch) cos(roll)
  const double pitch = std::asin(std::clamp(-r(2, 1), -1.0, 1.0));
  const double yaw = std::atan2(r(2, 0), r(2, 2));
  const double roll = std::atan2(r(0, 1), r(1, 1));
  return Vec3(yaw, pitch, roll);
}

Mat3 rotation_from_axis_angle(const Vec3& w) {
  const double theta = w.norm();
  Mat3 k;
  k << 0, -w(2), w(1),  //
      w(2), 0, -w(0),   //
      -w(1), w(0), 0;
  double a, b;
  if (theta < 1e-8) {
    a = 1.0 - theta * theta / 6.0;
    b = 0.5 - theta * theta / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Mat3::Identity() + a * k + b * k * k;
}

Vec3 axis_angle_from_rotation(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(c);
  const Vec3 v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double f = theta < 1e-3 ? 0.5 + theta * theta / 12.0 : theta / (2.0 * std::sin(theta));
  return f * v;
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(Eigen::Matrix3d(m), Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0) u.col(2) *= -1.0;
  return Mat3(u * v.transpose());
}

}  // namespace canonface
