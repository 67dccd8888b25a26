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
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "canonface/geometry.h"
#include "canonface/nn.h"
#include "canonface/tensor.h"

// Procedural 2.5-D faces with exact ground truth. Every quantity a
// downstream component needs to be checked against (identity, pose,
// keypoints, masks, gaze, eye landmarks) is produced analytically here.
namespace canonface::synth {

inline constexpr int kIdentityDim = 16;
inline constexpr int kAudioDim = 8;
inline constexpr int kDefaultKeypoints = 10;
inline constexpr int kMaxKeypoints = 14;

struct ExpressionScalars {
  double eye_aperture = 1.0;  ///< [0, 1]
  double mouth_open = 0.0;    ///< [0, 1]
  double gaze_yaw = 0.0;      ///< radians, [-0.5, 0.5]
  double gaze_pitch = 0.0;    ///< radians, [-0.5, 0.5]

  void validate() const;
};

struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

struct SceneLatents {
  std::vector<double> identity_code;  ///< unit norm, kIdentityDim entries
  Pose pose;
  ExpressionScalars expression;
  std::uint64_t seed = 0;  ///< background pattern

  void validate() const;
};

struct EyeLandmarks {
  /// p1..p6 in order; p1/p4 horizontal corners, p2/p3 top, p6/p5 bottom.
  std::array<Eigen::Vector2d, 6> points;
};

struct GroundTruth {
  KeypointSet keypoints;
  MotionParams motion;
  KeypointSet canonical_keypoints;
  std::array<EyeLandmarks, 2> eye_landmarks;
  Tensor face_mask;   ///< [H, W] binary
  Tensor eye_mask;    ///< [H, W] binary
  Tensor mouth_mask;  ///< [H, W] binary
  Vec3 gaze = Vec3(0, 0, -1);
  double ear_value = 0.0;
};

struct Render {
  Tensor image;  ///< [3, H, W] in [0, 1]
  GroundTruth truth;
};

/// Per-keypoint neutral model coordinates for an identity.
KeypointSet canonical_keypoints(const std::vector<double>& identity_code, int n = kDefaultKeypoints);
/// Model-space expression offsets; independent of identity.
KeypointMatrix expression_offsets(const ExpressionScalars& e, int n = kDefaultKeypoints);
/// Ground-truth motion: expression offsets are expressed in the posed frame.
MotionParams motion_params(const SceneLatents& latents, int n = kDefaultKeypoints);

Render render_face(const SceneLatents& latents, int size, int n_keypoints = kDefaultKeypoints);

/// Same identity, background and gaze, with identity rotation, zero
/// translation and neutral mouth: the canonical-space rendering.
SceneLatents canonical_latents(const SceneLatents& latents);

double eye_aspect_ratio(const EyeLandmarks& eye);

/// Fixed deterministic map from mouth opening to an audio latent.
std::vector<double> audio_from_mouth(double mouth_open);
/// Fixed linear readout inverting audio_from_mouth to first order.
double mouth_readout(const std::vector<double>& audio);

std::vector<double> random_identity(Rng& rng);
/// Shared 16x16 orthogonal matrix used to build the identity oracle.
const Eigen::Matrix<double, kIdentityDim, kIdentityDim>& identity_projection();

struct PoseRanges {
  double yaw = 0.45;
  double pitch = 0.3;
  double roll = 0.25;
  double shift = 0.08;
  double depth_shift = 0.05;
};

Pose random_pose(Rng& rng, const PoseRanges& ranges = {});
ExpressionScalars random_expression(Rng& rng);
SceneLatents random_latents(Rng& rng, const std::vector<double>& identity, const PoseRanges& ranges = {});

struct FrameMotion {
  Pose pose;
  ExpressionScalars expression;
};

struct Clip {
  std::vector<Tensor> frames;
  std::vector<SceneLatents> latents_per_frame;
  std::vector<std::vector<double>> audio_latents;

  std::size_t size() const { return frames.size(); }
  void validate() const;
};

Clip make_clip(const std::vector<double>& identity, const std::vector<FrameMotion>& trajectory,
               bool synced_audio, int size, std::uint64_t seed);

/// Smooth random trajectory: sinusoidal pose and expression tracks.
std::vector<FrameMotion> random_trajectory(Rng& rng, int frames, const PoseRanges& ranges = {});

/// [3, H, W] tensor in [0, 1] to and from 8-bit RGB PNG.
void save_png(const Tensor& image, const std::filesystem::path& path);
Tensor load_png(const std::filesystem::path& path);

/// Directory of frame_00000.png, frame_00001.png, ... plus meta.json.
void save_clip(const Clip& clip, const std::filesystem::path& dir);
Clip load_clip(const std::filesystem::path& dir);

/// Fixed pools of unit identities, disjoint by construction (distinct seeds).
class IdentityPool {
 public:
  IdentityPool(std::uint64_t seed, int count);
  const std::vector<double>& operator[](std::size_t i) const { return ids_[i]; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::vector<double>>& all() const { return ids_; }

 private:
  std::vector<std::vector<double>> ids_;
};

}  // namespace canonface::synth
