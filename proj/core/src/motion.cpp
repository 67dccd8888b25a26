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

#include "canonface/motion.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace canonface::motion {

namespace {

void require_keypoint_batch(const Var& v, const char* what) {
  if (v.value().rank() != 3 || v.dim(2) != 3) throw std::invalid_argument(std::string(what) + " must be [N, n, 3]");
}

Tensor keypoints_to_tensor(const KeypointSet& k) {
  Tensor t(Shape{1, k.count(), 3});
  for (int i = 0; i < k.count(); ++i)
    for (int c = 0; c < 3; ++c) t.at({0, i, c}) = k.points(i, c);
  return t;
}

void check_shape(VolumeShape s) {
  if (s.depth <= 0 || s.height <= 0 || s.width <= 0) throw std::invalid_argument("volume dimensions must be positive");
}

using Mat3d = Eigen::Matrix3d;

Mat3d block(const Tensor& t, int n) {
  Mat3d m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = t[static_cast<std::size_t>(n * 9 + i * 3 + j)];
  return m;
}

void put_block(Tensor& t, int n, const Mat3d& m) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[static_cast<std::size_t>(n * 9 + i * 3 + j)] = m(i, j);
}

Mat3d skew(const Eigen::Vector3d& w) {
  Mat3d k;
  k << 0, -w(2), w(1), w(2), 0, -w(0), -w(1), w(0), 0;
  return k;
}

}  // namespace

KeypointSet compose_keypoints(const KeypointSet& canonical, const MotionParams& motion) {
  if (motion.expression.rows() != canonical.points.rows()) {
    throw std::invalid_argument("compose_keypoints: expression rows do not match keypoint count");
  }
  KeypointMatrix out = canonical.points * motion.rotation + motion.expression;
  out.rowwise() += motion.translation;
  return KeypointSet(out);
}

Var compose(const Var& xc, const Var& r, const Var& e, const Var& t) {
  require_keypoint_batch(xc, "canonical keypoints");
  if (e.shape() != xc.shape()) throw std::invalid_argument("compose: expression shape mismatch");
  if (r.value().rank() != 3 || r.dim(0) != xc.dim(0) || r.dim(1) != 3 || r.dim(2) != 3) {
    throw std::invalid_argument("compose: rotation must be [N, 3, 3]");
  }
  if (t.value().rank() != 2 || t.dim(0) != xc.dim(0) || t.dim(1) != 3) {
    throw std::invalid_argument("compose: translation must be [N, 3]");
  }
  return ag::add_rows(ag::add(ag::bmm(xc, r), e), t);
}

Var deformation(const Var& src, const Var& dst, VolumeShape shape, double sigma) {
  require_keypoint_batch(src, "source keypoints");
  require_keypoint_batch(dst, "destination keypoints");
  if (src.shape() != dst.shape()) throw std::invalid_argument("deformation: keypoint counts differ");
  if (!(sigma > 0)) throw std::invalid_argument("deformation: sigma must be positive");
  check_shape(shape);
  const int nb = src.dim(0), nk = src.dim(1);
  const int d = shape.depth, h = shape.height, w = shape.width;
  const int pts = d * h * w;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

  // Softmax weights are cached for the backward pass.
  auto weights = std::make_shared<std::vector<double>>(static_cast<std::size_t>(nb) * pts * nk);
  Tensor out(Shape{nb, d, h, w, 3});
  const Tensor& sv = src.value();
  const Tensor& dv = dst.value();
  std::vector<double> logits(static_cast<std::size_t>(nk));
  for (int b = 0; b < nb; ++b) {
    const double* s = sv.data() + static_cast<std::size_t>(b) * nk * 3;
    const double* q = dv.data() + static_cast<std::size_t>(b) * nk * 3;
    for (int z = 0; z < d; ++z)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double p[3] = {voxel_center(x, w), voxel_center(y, h), voxel_center(z, d)};
          double mx = -std::numeric_limits<double>::infinity();
          for (int k = 0; k < nk; ++k) {
            double r2 = 0;
            for (int c = 0; c < 3; ++c) r2 += (p[c] - q[k * 3 + c]) * (p[c] - q[k * 3 + c]);
            logits[static_cast<std::size_t>(k)] = -r2 * inv2s2;
            mx = std::max(mx, logits[static_cast<std::size_t>(k)]);
          }
          const int pi = (z * h + y) * w + x;
          double* wk = weights->data() + (static_cast<std::size_t>(b) * pts + pi) * nk;
          double total = 0;
          for (int k = 0; k < nk; ++k) total += (wk[k] = std::exp(logits[static_cast<std::size_t>(k)] - mx));
          double* o = out.data() + (static_cast<std::size_t>(b) * pts + pi) * 3;
          for (int c = 0; c < 3; ++c) o[c] = p[c];
          for (int k = 0; k < nk; ++k) {
            wk[k] /= total;
            for (int c = 0; c < 3; ++c) o[c] += wk[k] * (s[k * 3 + c] - q[k * 3 + c]);
          }
        }
  }
  return ag::make_op(std::move(out), {src, dst}, [=](ag::Node& node) {
    const Tensor& g = node.grad;
    const Tensor& sv = node.input_value(0);
    const Tensor& dv = node.input_value(1);
    const bool want_s = node.input_wants_grad(0), want_d = node.input_wants_grad(1);
    Tensor gs(sv.shape()), gd(dv.shape());
    std::vector<double> a(static_cast<std::size_t>(nk));
    for (int b = 0; b < nb; ++b) {
      const double* s = sv.data() + static_cast<std::size_t>(b) * nk * 3;
      const double* q = dv.data() + static_cast<std::size_t>(b) * nk * 3;
      double* gsb = gs.data() + static_cast<std::size_t>(b) * nk * 3;
      double* gdb = gd.data() + static_cast<std::size_t>(b) * nk * 3;
      for (int z = 0; z < d; ++z)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const double p[3] = {voxel_center(x, w), voxel_center(y, h), voxel_center(z, d)};
            const int pi = (z * h + y) * w + x;
            const double* wk = weights->data() + (static_cast<std::size_t>(b) * pts + pi) * nk;
            const double* gp = g.data() + (static_cast<std::size_t>(b) * pts + pi) * 3;
            double abar = 0;
            for (int k = 0; k < nk; ++k) {
              double ak = 0;
              for (int c = 0; c < 3; ++c) ak += gp[c] * (s[k * 3 + c] - q[k * 3 + c]);
              a[static_cast<std::size_t>(k)] = ak;
              abar += wk[k] * ak;
            }
            for (int k = 0; k < nk; ++k) {
              const double coef = wk[k] * (a[static_cast<std::size_t>(k)] - abar) * 2.0 * inv2s2;
              for (int c = 0; c < 3; ++c) {
                gsb[k * 3 + c] += wk[k] * gp[c];
                gdb[k * 3 + c] += -wk[k] * gp[c] + coef * (p[c] - q[k * 3 + c]);
              }
            }
          }
    }
    if (want_s) node.input_grad(0) += gs;
    if (want_d) node.input_grad(1) += gd;
  });
}

DeformationField estimate_deformation(const KeypointSet& src, const KeypointSet& dst, VolumeShape shape,
                                      double sigma) {
  if (src.count() != dst.count()) throw std::invalid_argument("estimate_deformation: keypoint counts differ");
  src.validate();
  dst.validate();
  const Var f = deformation(ag::constant(keypoints_to_tensor(src)), ag::constant(keypoints_to_tensor(dst)), shape,
                            sigma);
  return DeformationField{f.value().reshaped({shape.depth, shape.height, shape.width, 3})};
}

FieldPair canonical_pair(const KeypointSet& x, const KeypointSet& xc, VolumeShape shape, double sigma) {
  return FieldPair{estimate_deformation(x, xc, shape, sigma), estimate_deformation(xc, x, shape, sigma)};
}

KeypointSet animation_retarget(const KeypointSet& canonical, const MotionParams& target_motion,
                               const KeypointMatrix& source_expression) {
  if (source_expression.rows() != canonical.points.rows()) {
    throw std::invalid_argument("animation_retarget: expression rows do not match keypoint count");
  }
  MotionParams m = target_motion;
  m.expression = source_expression;
  return compose_keypoints(canonical, m);
}

Var orthonormalize(const Var& m) {
  if (m.value().rank() != 3 || m.dim(1) != 3 || m.dim(2) != 3) {
    throw std::invalid_argument("orthonormalize expects [N, 3, 3]");
  }
  const int nb = m.dim(0);
  Tensor out(m.shape());
  // Per sample: R and the signed symmetric factor S with M = R S.
  auto sym = std::make_shared<std::vector<Mat3d>>(static_cast<std::size_t>(nb));
  for (int b = 0; b < nb; ++b) {
    const Mat3d mb = block(m.value(), b);
    Eigen::JacobiSVD<Mat3d> svd(mb, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3d u = svd.matrixU();
    const Mat3d v = svd.matrixV();
    Eigen::Vector3d s = svd.singularValues();
    if ((u * v.transpose()).determinant() < 0) {
      u.col(2) *= -1.0;
      s(2) = -s(2);
    }
    put_block(out, b, u * v.transpose());
    (*sym)[static_cast<std::size_t>(b)] = v * s.asDiagonal() * v.transpose();
  }
  return ag::make_op(std::move(out), {m}, [=](ag::Node& node) {
    Tensor gm(node.value.shape());
    for (int b = 0; b < nb; ++b) {
      const Mat3d r = block(node.value, b);
      const Mat3d& s = (*sym)[static_cast<std::size_t>(b)];
      const Mat3d a = r.transpose() * block(node.grad, b);
      const Eigen::Vector3d av(a(2, 1) - a(1, 2), a(0, 2) - a(2, 0), a(1, 0) - a(0, 1));
      const Mat3d k = s.trace() * Mat3d::Identity() - s;
      const Eigen::Vector3d bv = k.completeOrthogonalDecomposition().solve(av);
      put_block(gm, b, r * skew(bv));
    }
    node.input_grad(0) += gm;
  });
}

Var axis_angle(const Var& r) {
  if (r.value().rank() != 3 || r.dim(1) != 3 || r.dim(2) != 3) throw std::invalid_argument("axis_angle expects [N, 3, 3]");
  const int nb = r.dim(0);
  Tensor out(Shape{nb, 3});
  for (int b = 0; b < nb; ++b) {
    const Vec3 w = axis_angle_from_rotation(Mat3(block(r.value(), b)));
    for (int c = 0; c < 3; ++c) out.at({b, c}) = w(c);
  }
  return ag::make_op(std::move(out), {r}, [=](ag::Node& node) {
    Tensor gr(node.input_value(0).shape());
    for (int b = 0; b < nb; ++b) {
      const Mat3d rb = block(node.input_value(0), b);
      const double c = std::clamp((rb.trace() - 1.0) * 0.5, -1.0, 1.0);
      const double theta = std::acos(c);
      double f, dfdc;
      if (theta < 1e-3) {
        f = 0.5 + theta * theta / 12.0;
        dfdc = -1.0 / 6.0 - theta * theta / 15.0;
      } else {
        const double s = std::sin(theta);
        f = theta / (2.0 * s);
        dfdc = -(s - theta * c) / (2.0 * s * s * s);
      }
      const Eigen::Vector3d v(rb(2, 1) - rb(1, 2), rb(0, 2) - rb(2, 0), rb(1, 0) - rb(0, 1));
      const Eigen::Vector3d g(node.grad.at({b, 0}), node.grad.at({b, 1}), node.grad.at({b, 2}));
      // w = f(c) v with c = (tr R - 1) / 2.
      Mat3d gb = Mat3d::Zero();
      gb(2, 1) += f * g(0);
      gb(1, 2) -= f * g(0);
      gb(0, 2) += f * g(1);
      gb(2, 0) -= f * g(1);
      gb(1, 0) += f * g(2);
      gb(0, 1) -= f * g(2);
      gb += Mat3d::Identity() * (0.5 * dfdc * g.dot(v));
      put_block(gr, b, gb);
    }
    node.input_grad(0) += gr;
  });
}

KeypointSet MotionEstimate::canonical_at(int i) const {
  const int n = canonical.dim(1);
  KeypointMatrix p(n, 3);
  for (int k = 0; k < n; ++k)
    for (int c = 0; c < 3; ++c) p(k, c) = canonical.value().at({i, k, c});
  return KeypointSet(p);
}

MotionParams MotionEstimate::motion_at(int i) const {
  const int n = expression.dim(1);
  MotionParams m = MotionParams::identity(n);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) m.rotation(a, b) = rotation.value().at({i, a, b});
    m.translation(a) = translation.value().at({i, a});
  }
  for (int k = 0; k < n; ++k)
    for (int c = 0; c < 3; ++c) m.expression(k, c) = expression.value().at({i, k, c});
  return m;
}

MotionExtractor::MotionExtractor(int image_size, int n_keypoints, Rng& rng)
    : image_size_(image_size), n_(n_keypoints) {
  if (image_size % 8 != 0) throw std::invalid_argument("motion extractor needs an image size divisible by 8");
  if (n_keypoints < 3) throw std::invalid_argument("motion extractor needs at least 3 keypoints");
  c1_ = nn::Conv2d(3, 16, 3, 2, rng);
  c2_ = nn::Conv2d(16, 32, 3, 2, rng);
  c3_ = nn::Conv2d(32, 64, 3, 2, rng);
  const int flat = 64 * (image_size / 8) * (image_size / 8);
  fc_ = nn::Linear(flat, 128, rng);
  head_xc_ = nn::Linear(128, 3 * n_keypoints, rng, 0.1);
  head_rot_ = nn::Linear(128, 9, rng, 0.1);
  head_exp_ = nn::Linear(128, 3 * n_keypoints, rng, 0.01);
  head_t_ = nn::Linear(128, 3, rng, 0.1);
  Tensor& bias = head_rot_.bias.mutable_value();
  bias[0] = bias[4] = bias[8] = 1.0;
}

MotionEstimate MotionExtractor::operator()(const Var& images) const {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != image_size_ || s[3] != image_size_) {
    throw std::invalid_argument("motion extractor: expected [N, 3, " + std::to_string(image_size_) + ", " +
                                std::to_string(image_size_) + "] images, got " + shape_str(s));
  }
  const int nb = s[0];
  constexpr double slope = nn::kLeakySlope;
  Var h = ag::leaky_relu(c1_(images), slope);
  h = ag::leaky_relu(c2_(h), slope);
  h = ag::leaky_relu(c3_(h), slope);
  h = ag::reshape(h, {nb, static_cast<int>(h.value().size()) / nb});
  h = ag::leaky_relu(fc_(h), slope);
  MotionEstimate est;
  est.canonical = ag::reshape(head_xc_(h), {nb, n_, 3});
  est.rotation = orthonormalize(ag::reshape(head_rot_(h), {nb, 3, 3}));
  est.expression = ag::reshape(head_exp_(h), {nb, n_, 3});
  est.translation = head_t_(h);
  return est;
}

void MotionExtractor::collect(const std::string& prefix, nn::NamedParams& out) const {
  c1_.collect(prefix + ".c1", out);
  c2_.collect(prefix + ".c2", out);
  c3_.collect(prefix + ".c3", out);
  fc_.collect(prefix + ".fc", out);
  head_xc_.collect(prefix + ".xc", out);
  head_rot_.collect(prefix + ".rot", out);
  head_exp_.collect(prefix + ".exp", out);
  head_t_.collect(prefix + ".t", out);
}

}  // namespace canonface::motion
