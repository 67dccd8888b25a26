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

#include "canonface/synthworld.h"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace canonface::synth {

namespace {

using IdMatrix = Eigen::Matrix<double, kIdentityDim, kIdentityDim>;

constexpr double kEyeY = -0.10;
constexpr double kEyeHalfWidth = 0.085;
constexpr double kEyeHalfHeight = 0.05;
constexpr double kIrisRadius = 0.035;
constexpr double kPupilRadius = 0.014;
constexpr double kGazeShift = 0.06;
constexpr double kNoseY = 0.08;
constexpr double kNoseDepth = 0.08;
constexpr double kChinFraction = 0.92;
constexpr double kJawDrop = 0.1;
// Model units to scene units.
constexpr double kScale = 1.4;

// Attribute slots produced by identity_attributes().
enum Attr { kSkin = 0, kHair = 3, kIris = 6, kLip = 9, kWidth = 12, kHeight = 13, kEyeSpacing = 14, kMouthWidth = 15 };

struct Geometry {
  double a, b, c;      // ellipsoid semi-axes
  double b_low;        // lower semi-axis below the equator (jaw)
  double eye_x;        // eye center |x|
  double mouth_y;      // mouth center
  double mouth_half;   // mouth half-width
  double lip_half_h;   // lip ellipse half-height
  double inner_half_h; // mouth interior half-height
};

std::array<double, kIdentityDim> identity_attributes(const std::vector<double>& id) {
  const auto& m = identity_projection();
  std::array<double, kIdentityDim> out{};
  for (int i = 0; i < kIdentityDim; ++i) {
    double s = 0;
    for (int j = 0; j < kIdentityDim; ++j) s += m(i, j) * id[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = std::tanh(2.5 * s);
  }
  return out;
}

Geometry face_geometry(const std::array<double, kIdentityDim>& at, double mouth_open) {
  Geometry g{};
  g.a = 0.42 * (1.0 + 0.12 * at[kWidth]);
  g.b = 0.52 * (1.0 + 0.10 * at[kHeight]);
  g.c = 0.36;
  g.b_low = g.b + kJawDrop * mouth_open;
  g.eye_x = 0.17 * (1.0 + 0.15 * at[kEyeSpacing]);
  g.mouth_y = 0.28 + 0.03 * mouth_open;
  g.mouth_half = 0.12 * (1.0 + 0.15 * at[kMouthWidth]) - 0.02 * mouth_open;
  g.lip_half_h = 0.025 + 0.04 * mouth_open;
  g.inner_half_h = 0.035 * mouth_open;
  return g;
}

double surface_z(const Geometry& g, double x, double y) {
  const double by = y > 0 ? g.b_low : g.b;
  const double r = 1.0 - (x / g.a) * (x / g.a) - (y / by) * (y / by);
  return -g.c * std::sqrt(std::max(0.0, r));
}

Eigen::Vector3d color_from(const std::array<double, kIdentityDim>& at, int slot, double base, double span) {
  return {base + span * at[static_cast<std::size_t>(slot)], base + span * at[static_cast<std::size_t>(slot + 1)],
          base + span * at[static_cast<std::size_t>(slot + 2)]};
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct Background {
  Eigen::Vector3d c0, c1, c2;
  double angle, freq, phase;
};

Background background_for(std::uint64_t seed) {
  Rng rng(splitmix(seed ^ 0xB4C4u));
  Background bg;
  for (int k = 0; k < 3; ++k) {
    bg.c0[k] = uniform(rng, 0.1, 0.9);
    bg.c1[k] = uniform(rng, 0.1, 0.9);
    bg.c2[k] = uniform(rng, -0.12, 0.12);
  }
  bg.angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  bg.freq = uniform(rng, 3.0, 9.0);
  bg.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return bg;
}

Eigen::Vector3d background_color(const Background& bg, double u, double v) {
  const double s = 0.5 + 0.25 * (u * std::cos(bg.angle) + v * std::sin(bg.angle));
  const double wave = std::sin(bg.freq * (u * std::sin(bg.angle) - v * std::cos(bg.angle)) + bg.phase);
  return (1.0 - s) * bg.c0 + s * bg.c1 + wave * bg.c2;
}

struct Hit {
  bool hit = false;
  Eigen::Vector3d model;   // model-space surface point
  Eigen::Vector3d normal;  // world-space unit normal
};

// Orthographic ray along +z through (u, v). The head is the union of an
// upper half-ellipsoid (semi-axis b) and a lower one (b_low).
Hit cast(const Geometry& g, const Mat3& r, const Vec3& t, double u, double v) {
  // Scene point q = s m R + t, so m = (q - t) R^T / s. Along the ray m = m0 + z d.
  const Eigen::RowVector3d m0 = (Eigen::RowVector3d(u, v, 0.0) - t) * r.transpose() / kScale;
  const Eigen::RowVector3d d = Eigen::RowVector3d(0, 0, 1) * r.transpose() / kScale;
  Hit best;
  double best_z = std::numeric_limits<double>::infinity();
  for (int piece = 0; piece < 2; ++piece) {
    const double by = piece == 0 ? g.b : g.b_low;
    const Eigen::Vector3d inv(1.0 / (g.a * g.a), 1.0 / (by * by), 1.0 / (g.c * g.c));
    const double qa = d(0) * d(0) * inv(0) + d(1) * d(1) * inv(1) + d(2) * d(2) * inv(2);
    const double qb = 2.0 * (m0(0) * d(0) * inv(0) + m0(1) * d(1) * inv(1) + m0(2) * d(2) * inv(2));
    const double qc = m0(0) * m0(0) * inv(0) + m0(1) * m0(1) * inv(1) + m0(2) * m0(2) * inv(2) - 1.0;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0) continue;
    const double sq = std::sqrt(disc);
    for (double z : {(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)}) {
      const Eigen::RowVector3d m = m0 + z * d;
      const bool upper = m(1) <= 0.0;
      if (upper != (piece == 0) || z >= best_z) continue;
      best_z = z;
      best.hit = true;
      best.model = m.transpose();
      const Eigen::RowVector3d nm(m(0) * inv(0), m(1) * inv(1), m(2) * inv(2));
      best.normal = (nm * r).normalized().transpose();
    }
  }
  return best;
}

struct Sample {
  Eigen::Vector3d color;
  bool face = false, eye = false, mouth = false;
};

inline double sq(double x) { return x * x; }

Sample shade(const SceneLatents& lat, const std::array<double, kIdentityDim>& at, const Geometry& g,
             const Background& bg, double u, double v) {
  Sample s;
  const Hit h = cast(g, lat.pose.rotation, lat.pose.translation, u, v);
  if (!h.hit) {
    s.color = background_color(bg, u, v);
    return s;
  }
  s.face = true;
  const double mx = h.model(0), my = h.model(1), mz = h.model(2);
  const Eigen::Vector3d skin = color_from(at, kSkin, 0.6, 0.25);
  Eigen::Vector3d albedo = skin * (1.0 + 0.04 * std::sin(25.0 * mx) * std::sin(25.0 * my));
  bool lit = true;

  if (my < -0.45 * g.b) {
    albedo = color_from(at, kHair, 0.35, 0.3) * (1.0 + 0.08 * std::sin(60.0 * mx));
  } else if (mz < 0.0) {
    const double nose = sq(mx / 0.05) + sq((my - kNoseY) / 0.06);
    if (nose < 1.0) albedo *= 0.88 + 0.08 * nose;

    const auto& e = lat.expression;
    const double hh = kEyeHalfHeight * e.eye_aperture;
    for (double side : {-1.0, 1.0}) {
      const double ex = side * g.eye_x;
      const double dx = (mx - ex) / kEyeHalfWidth;
      if (std::abs(dx) >= 1.0) continue;
      const double dy = my - kEyeY;
      const double lid = std::sqrt(1.0 - dx * dx);
      if (hh > 0 && sq(dx) + sq(dy / hh) < 1.0) {
        s.eye = true;
        albedo = Eigen::Vector3d(0.95, 0.95, 0.93);
        const double ix = ex + kGazeShift * std::sin(e.gaze_yaw);
        const double iy = kEyeY + kGazeShift * std::sin(e.gaze_pitch);
        const double rr = std::hypot(mx - ix, my - iy);
        if (rr < kPupilRadius) {
          albedo = Eigen::Vector3d(0.03, 0.03, 0.05);
        } else if (rr < kIrisRadius) {
          albedo = color_from(at, kIris, 0.45, 0.35);
        }
        lit = false;
      } else if (dy < 0 && dy > -(hh + 0.012) * lid) {
        // Upper lid line; remains visible when the eye is shut.
        albedo = 0.35 * skin;
      } else if (hh == 0 && std::abs(dy) < 0.008 * lid) {
        albedo = 0.35 * skin;
      }
    }

    const double mdx = mx / g.mouth_half;
    if (std::abs(mdx) < 1.0) {
      const double mdy = my - g.mouth_y;
      if (sq(mdx) + sq(mdy / g.lip_half_h) < 1.0) {
        s.mouth = true;
        albedo = color_from(at, kLip, 0.5, 0.3);
        if (g.inner_half_h > 0 && sq(mdx / 0.8) + sq(mdy / g.inner_half_h) < 1.0) {
          albedo = Eigen::Vector3d(0.12, 0.04, 0.05);
        }
      }
    }
  }

  if (lit) {
    const Eigen::Vector3d light = Eigen::Vector3d(-0.3, -0.4, -1.0).normalized();
    const double lambert = std::max(0.0, h.normal.dot(light));
    albedo *= 0.35 + 0.65 * lambert;
  } else {
    albedo *= 0.75 + 0.25 * std::max(0.0, -h.normal(2));
  }
  s.color = albedo;
  return s;
}

// Eye landmark model coordinates p1..p6 for one eye.
std::array<Eigen::RowVector3d, 6> eye_model_points(const Geometry& g, double side, double aperture) {
  const double ex = side * g.eye_x;
  const double hh = kEyeHalfHeight * aperture * std::sqrt(0.75);
  const double w = kEyeHalfWidth;
  const std::array<Eigen::Vector2d, 6> xy = {
      Eigen::Vector2d(ex - w, kEyeY),           Eigen::Vector2d(ex - w / 2, kEyeY - hh),
      Eigen::Vector2d(ex + w / 2, kEyeY - hh),  Eigen::Vector2d(ex + w, kEyeY),
      Eigen::Vector2d(ex + w / 2, kEyeY + hh),  Eigen::Vector2d(ex - w / 2, kEyeY + hh)};
  std::array<Eigen::RowVector3d, 6> out;
  for (std::size_t i = 0; i < 6; ++i) out[i] = Eigen::RowVector3d(xy[i](0), xy[i](1), surface_z(g, xy[i](0), xy[i](1)));
  return out;
}

void check_identity(const std::vector<double>& id) {
  if (id.size() != static_cast<std::size_t>(kIdentityDim)) {
    throw std::invalid_argument("identity code must have " + std::to_string(kIdentityDim) + " entries");
  }
  double n = 0;
  for (double x : id) n += x * x;
  if (!std::isfinite(n) || std::abs(std::sqrt(n) - 1.0) > 1e-6) {
    throw std::invalid_argument("identity code must have unit norm");
  }
}

}  // namespace

void ExpressionScalars::validate() const {
  if (!(eye_aperture >= 0.0 && eye_aperture <= 1.0)) throw std::invalid_argument("eye_aperture outside [0, 1]");
  if (!(mouth_open >= 0.0 && mouth_open <= 1.0)) throw std::invalid_argument("mouth_open outside [0, 1]");
  if (!(std::abs(gaze_yaw) <= 0.5 && std::abs(gaze_pitch) <= 0.5)) {
    throw std::invalid_argument("gaze angles outside [-0.5, 0.5]");
  }
}

void SceneLatents::validate() const {
  check_identity(identity_code);
  expression.validate();
  if (!is_rotation(pose.rotation)) throw std::invalid_argument("pose rotation is not a proper rotation");
  if (!pose.translation.allFinite()) throw std::invalid_argument("pose translation is not finite");
}

const IdMatrix& identity_projection() {
  static const IdMatrix m = [] {
    Rng rng(0x1DE7u);
    IdMatrix g;
    for (int i = 0; i < kIdentityDim; ++i)
      for (int j = 0; j < kIdentityDim; ++j) g(i, j) = normal(rng);
    Eigen::HouseholderQR<IdMatrix> qr(g);
    return IdMatrix(qr.householderQ());
  }();
  return m;
}

KeypointSet canonical_keypoints(const std::vector<double>& identity_code, int n) {
  check_identity(identity_code);
  if (n < 3 || n > kMaxKeypoints) throw std::invalid_argument("keypoint count must be in [3, 14]");
  const Geometry g = face_geometry(identity_attributes(identity_code), 0.0);
  const double w = kEyeHalfWidth;
  const std::array<Eigen::Vector2d, kMaxKeypoints> xy = {
      Eigen::Vector2d(-g.eye_x, kEyeY),          Eigen::Vector2d(g.eye_x, kEyeY),
      Eigen::Vector2d(-g.eye_x - w, kEyeY),      Eigen::Vector2d(-g.eye_x + w, kEyeY),
      Eigen::Vector2d(g.eye_x - w, kEyeY),       Eigen::Vector2d(g.eye_x + w, kEyeY),
      Eigen::Vector2d(-g.mouth_half, g.mouth_y), Eigen::Vector2d(g.mouth_half, g.mouth_y),
      Eigen::Vector2d(0.0, kNoseY),              Eigen::Vector2d(0.0, kChinFraction * g.b),
      Eigen::Vector2d(-0.25, 0.12),              Eigen::Vector2d(0.25, 0.12),
      Eigen::Vector2d(0.0, -0.35),               Eigen::Vector2d(0.0, 0.21)};
  KeypointMatrix p(n, 3);
  for (int k = 0; k < n; ++k) {
    const auto& q = xy[static_cast<std::size_t>(k)];
    p.row(k) << q(0), q(1), surface_z(g, q(0), q(1));
  }
  if (n > 8) p(8, 2) -= kNoseDepth;
  return KeypointSet(kScale * p);
}

KeypointMatrix expression_offsets(const ExpressionScalars& e, int n) {
  if (n < 3 || n > kMaxKeypoints) throw std::invalid_argument("keypoint count must be in [3, 14]");
  KeypointMatrix off = KeypointMatrix::Zero(n, 3);
  const double o = e.mouth_open;
  if (n > 7) {
    off.row(6) << 0.02 * o, 0.03 * o, 0.0;
    off.row(7) << -0.02 * o, 0.03 * o, 0.0;
  }
  if (n > 9) off.row(9) << 0.0, kChinFraction * kJawDrop * o, 0.0;
  if (n > 13) off.row(13) << 0.0, 0.03 * o, 0.0;
  return kScale * off;
}

MotionParams motion_params(const SceneLatents& latents, int n) {
  MotionParams m;
  m.rotation = latents.pose.rotation;
  m.translation = latents.pose.translation;
  m.expression = expression_offsets(latents.expression, n) * latents.pose.rotation;
  return m;
}

SceneLatents canonical_latents(const SceneLatents& latents) {
  SceneLatents c = latents;
  c.pose = Pose{};
  c.expression.mouth_open = 0.0;
  return c;
}

double eye_aspect_ratio(const EyeLandmarks& eye) {
  const auto& p = eye.points;
  const double horiz = (p[0] - p[3]).norm();
  if (horiz <= 0) throw std::invalid_argument("degenerate eye: coincident corners");
  return ((p[1] - p[5]).norm() + (p[2] - p[4]).norm()) / (2.0 * horiz);
}

Render render_face(const SceneLatents& latents, int size, int n_keypoints) {
  if (size < 32) throw std::invalid_argument("render size must be at least 32");
  latents.validate();
  const auto at = identity_attributes(latents.identity_code);
  const Geometry g = face_geometry(at, latents.expression.mouth_open);
  const Background bg = background_for(latents.seed);

  Render out;
  out.image = Tensor(Shape{3, size, size});
  GroundTruth& gt = out.truth;
  gt.face_mask = Tensor(Shape{size, size});
  gt.eye_mask = Tensor(Shape{size, size});
  gt.mouth_mask = Tensor(Shape{size, size});
  const double px = 2.0 / size;
  constexpr int kSuper = 3;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double uc = -1.0 + (x + 0.5) * px;
      const double vc = -1.0 + (y + 0.5) * px;
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double u = uc + ((sx + 0.5) / kSuper - 0.5) * px;
          const double v = vc + ((sy + 0.5) / kSuper - 0.5) * px;
          acc += shade(latents, at, g, bg, u, v).color;
        }
      }
      acc /= kSuper * kSuper;
      for (int ch = 0; ch < 3; ++ch) out.image.at({ch, y, x}) = std::clamp(acc(ch), 0.0, 1.0);
      const Sample center = shade(latents, at, g, bg, uc, vc);
      gt.face_mask.at({y, x}) = center.face ? 1.0 : 0.0;
      gt.eye_mask.at({y, x}) = center.eye ? 1.0 : 0.0;
      gt.mouth_mask.at({y, x}) = center.mouth ? 1.0 : 0.0;
    }
  }

  const Mat3& r = latents.pose.rotation;
  const Vec3& t = latents.pose.translation;
  gt.canonical_keypoints = canonical_keypoints(latents.identity_code, n_keypoints);
  gt.motion = motion_params(latents, n_keypoints);
  KeypointMatrix posed = gt.canonical_keypoints.points * r + gt.motion.expression;
  posed.rowwise() += t;
  gt.keypoints = KeypointSet(posed);

  double ear = 0;
  for (int e = 0; e < 2; ++e) {
    const auto pts = eye_model_points(g, e == 0 ? -1.0 : 1.0, latents.expression.eye_aperture);
    for (std::size_t i = 0; i < 6; ++i) {
      const Eigen::RowVector3d q = kScale * pts[i] * r + t;
      gt.eye_landmarks[static_cast<std::size_t>(e)].points[i] = Eigen::Vector2d(q(0), q(1));
    }
    ear += eye_aspect_ratio(gt.eye_landmarks[static_cast<std::size_t>(e)]);
  }
  gt.ear_value = ear / 2.0;

  const auto& ex = latents.expression;
  const Vec3 dir(std::sin(ex.gaze_yaw) * std::cos(ex.gaze_pitch), std::sin(ex.gaze_pitch),
                 -std::cos(ex.gaze_yaw) * std::cos(ex.gaze_pitch));
  gt.gaze = (dir * r).normalized();
  return out;
}

namespace {

struct AudioBasis {
  Eigen::VectorXd u, v, w, readout;
};

const AudioBasis& audio_basis() {
  static const AudioBasis basis = [] {
    Rng rng(0xA0D10u);
    AudioBasis b;
    b.u = Eigen::VectorXd(kAudioDim);
    b.v = Eigen::VectorXd(kAudioDim);
    b.w = Eigen::VectorXd(kAudioDim);
    for (int i = 0; i < kAudioDim; ++i) {
      b.u(i) = normal(rng);
      b.v(i) = 0.1 * normal(rng);
      b.w(i) = 0.2 * normal(rng);
    }
    b.readout = b.u / b.u.squaredNorm();
    return b;
  }();
  return basis;
}

}  // namespace

std::vector<double> audio_from_mouth(double mouth_open) {
  const auto& b = audio_basis();
  const Eigen::VectorXd a = b.u * mouth_open + b.v * (mouth_open * mouth_open) + b.w;
  return {a.data(), a.data() + a.size()};
}

double mouth_readout(const std::vector<double>& audio) {
  if (audio.size() != static_cast<std::size_t>(kAudioDim)) throw std::invalid_argument("audio latent has wrong size");
  const auto& b = audio_basis();
  double s = 0;
  for (int i = 0; i < kAudioDim; ++i) s += b.readout(i) * (audio[static_cast<std::size_t>(i)] - b.w(i));
  return s;
}

std::vector<double> random_identity(Rng& rng) {
  std::vector<double> id(kIdentityDim);
  double n = 0;
  do {
    n = 0;
    for (double& x : id) {
      x = normal(rng);
      n += x * x;
    }
  } while (n < 1e-12);
  n = std::sqrt(n);
  for (double& x : id) x /= n;
  return id;
}

Pose random_pose(Rng& rng, const PoseRanges& rg) {
  Pose p;
  const double yaw = uniform(rng, -rg.yaw, rg.yaw);
  const double pitch = uniform(rng, -rg.pitch, rg.pitch);
  const double roll = uniform(rng, -rg.roll, rg.roll);
  p.rotation = rotation_from_euler(yaw, pitch, roll);
  p.translation = Vec3(uniform(rng, -rg.shift, rg.shift), uniform(rng, -rg.shift, rg.shift),
                       uniform(rng, -rg.depth_shift, rg.depth_shift));
  return p;
}

ExpressionScalars random_expression(Rng& rng) {
  ExpressionScalars e;
  e.eye_aperture = uniform(rng, 0.0, 1.0);
  e.mouth_open = uniform(rng, 0.0, 1.0);
  e.gaze_yaw = uniform(rng, -0.45, 0.45);
  e.gaze_pitch = uniform(rng, -0.45, 0.45);
  return e;
}

SceneLatents random_latents(Rng& rng, const std::vector<double>& identity, const PoseRanges& ranges) {
  SceneLatents l;
  l.identity_code = identity;
  l.pose = random_pose(rng, ranges);
  l.expression = random_expression(rng);
  l.seed = rng();
  return l;
}

void Clip::validate() const {
  if (frames.empty()) throw std::invalid_argument("clip has no frames");
  if (latents_per_frame.size() != frames.size() || audio_latents.size() != frames.size()) {
    throw std::invalid_argument("clip frame, latent and audio counts differ");
  }
  for (const auto& f : frames) {
    if (f.shape() != frames.front().shape()) throw std::invalid_argument("clip frames differ in size");
  }
}

Clip make_clip(const std::vector<double>& identity, const std::vector<FrameMotion>& trajectory, bool synced_audio,
               int size, std::uint64_t seed) {
  if (trajectory.empty()) throw std::invalid_argument("make_clip: empty trajectory");
  Clip clip;
  Rng noise(splitmix(seed ^ 0x5EEDu));
  for (const auto& fm : trajectory) {
    SceneLatents l;
    l.identity_code = identity;
    l.pose = fm.pose;
    l.expression = fm.expression;
    l.seed = seed;
    clip.frames.push_back(render_face(l, size).image);
    clip.latents_per_frame.push_back(l);
    if (synced_audio) {
      clip.audio_latents.push_back(audio_from_mouth(fm.expression.mouth_open));
    } else {
      std::vector<double> a(kAudioDim);
      for (double& x : a) x = normal(noise);
      clip.audio_latents.push_back(std::move(a));
    }
  }
  return clip;
}

std::vector<FrameMotion> random_trajectory(Rng& rng, int frames, const PoseRanges& rg) {
  if (frames <= 0) throw std::invalid_argument("trajectory length must be positive");
  struct Track {
    double amp, freq, phase;
    double at(int t) const { return amp * std::sin(2.0 * std::numbers::pi * freq * t + phase); }
  };
  auto track = [&](double amp) {
    return Track{amp * uniform(rng, 0.5, 1.0), uniform(rng, 0.02, 0.08), uniform(rng, 0.0, 2.0 * std::numbers::pi)};
  };
  const Track yaw = track(rg.yaw), pitch = track(rg.pitch), roll = track(rg.roll);
  const Track tx = track(rg.shift), ty = track(rg.shift), tz = track(rg.depth_shift);
  const Track mouth{0.5, uniform(rng, 0.08, 0.2), uniform(rng, 0.0, 2.0 * std::numbers::pi)};
  const Track gy = track(0.4), gp = track(0.3);
  const int blink_period = static_cast<int>(uniform(rng, 12, 30));
  const int blink_phase = static_cast<int>(uniform(rng, 0, blink_period));

  std::vector<FrameMotion> out(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    auto& f = out[static_cast<std::size_t>(t)];
    f.pose.rotation = rotation_from_euler(yaw.at(t), pitch.at(t), roll.at(t));
    f.pose.translation = Vec3(tx.at(t), ty.at(t), tz.at(t));
    f.expression.mouth_open = std::clamp(0.5 + mouth.at(t), 0.0, 1.0);
    const int b = (t + blink_phase) % blink_period;
    f.expression.eye_aperture = b == 0 ? 0.0 : (b == 1 || b == blink_period - 1) ? 0.5 : 1.0;
    f.expression.gaze_yaw = gy.at(t);
    f.expression.gaze_pitch = gp.at(t);
  }
  return out;
}

IdentityPool::IdentityPool(std::uint64_t seed, int count) {
  if (count <= 0) throw std::invalid_argument("identity pool must be non-empty");
  Rng rng(splitmix(seed));
  for (int i = 0; i < count; ++i) ids_.push_back(random_identity(rng));
}

}  // namespace canonface::synth
