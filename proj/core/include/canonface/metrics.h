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
#include <string>
#include <vector>

#include "canonface/synthworld.h"
#include "canonface/tensor.h"

// Video face-swap evaluation: blink (EAR), gaze, temporal consistency from
// optical flow, lip sync, identity similarity/retrieval and Frechet
// distances between Gaussian feature statistics.
namespace canonface::metrics {

/// (|p2 - p6| + |p3 - p5|) / (2 |p1 - p4|). Throws std::domain_error when
/// the corners coincide.
double ear(const synth::EyeLandmarks& eye);
/// Mean EAR of both eyes of a frame.
double frame_ear(const std::array<synth::EyeLandmarks, 2>& eyes);

/// 100 * mean |a_t - b_t| over per-frame EAR values.
double ear_metric(const std::vector<double>& ear_a, const std::vector<double>& ear_b);

struct GazeError {
  double value = 0.0;
  bool renormalized = false;  ///< some input was not unit length
};
/// Mean per-frame L2 distance between unit gaze vectors.
GazeError gaze_error(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b);

struct FlowOptions {
  int levels = 3;
  int block = 8;
  int radius = 4;
};

/// Integer block-matching flow. flow(y, x) = (dx, dy) with
/// a(y, x) ~ b(y + dy, x + dx). Frames are [3, H, W] or [H, W].
/// Returns [H, W, 2].
Tensor optical_flow(const Tensor& frame_a, const Tensor& frame_b, const FlowOptions& opt = {});

/// Mean over consecutive pairs of the mean endpoint error between the
/// two videos' flows.
double temporal_consistency(const std::vector<Tensor>& video_a, const std::vector<Tensor>& video_b,
                            const FlowOptions& opt = {});

struct SyncScores {
  double lse_d = 0.0;
  double lse_c = 0.0;
  /// Offset o minimizing the mean distance over valid frames; audio frame
  /// t + o is matched with video frame t.
  int best_offset = 0;
};
/// video, audio: T x d rows. Frames t with every t + o in range are used.
SyncScores sync_metrics(const Eigen::MatrixXd& video, const Eigen::MatrixXd& audio, int max_offset = 15);

/// Mean cosine between the source embedding and each row of `frames`.
double id_similarity(const Eigen::VectorXd& source, const Eigen::MatrixXd& frames);

struct Retrieval {
  double percent = 0.0;
  bool degenerate_ties = false;  ///< some argmax was a tie (lowest index wins)
};
/// frames: T x d; source_index[t] is the gallery row of frame t's source.
Retrieval id_retrieval(const Eigen::MatrixXd& frames, const std::vector<int>& source_index,
                       const Eigen::MatrixXd& gallery);

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
/// Sample mean and unbiased covariance of the rows.
Gaussian fit_gaussian(const Eigen::MatrixXd& samples);

/// |mu1 - mu2|^2 + tr(C1 + C2 - 2 (C1 C2)^(1/2)).
double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                        const Eigen::MatrixXd& cov2);
inline double frechet_distance(const Gaussian& a, const Gaussian& b) {
  return frechet_distance(a.mean, a.cov, b.mean, b.cov);
}

/// One line of an evaluation report.
struct MetricRecord {
  std::string name;
  double value = 0.0;
  std::string implementation;
  int frames = 0;
};

}  // namespace canonface::metrics
