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

#include "canonface/metrics.h"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace canonface::metrics {

double ear(const synth::EyeLandmarks& eye) {
  const auto& p = eye.points;
  const double width = (p[0] - p[3]).norm();
  if (!(width > 1e-12)) throw std::domain_error("EAR undefined: eye corners coincide");
  return ((p[1] - p[5]).norm() + (p[2] - p[4]).norm()) / (2.0 * width);
}

double frame_ear(const std::array<synth::EyeLandmarks, 2>& eyes) { return 0.5 * (ear(eyes[0]) + ear(eyes[1])); }

double ear_metric(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("ear_metric: sequence lengths differ");
  if (a.empty()) throw std::invalid_argument("ear_metric: empty sequences");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 100.0 * s / static_cast<double>(a.size());
}

GazeError gaze_error(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("gaze_error: sequence lengths differ");
  if (a.empty()) throw std::invalid_argument("gaze_error: empty sequences");
  GazeError r;
  auto unit = [&](const Eigen::Vector3d& v) {
    const double n = v.norm();
    if (!(n > 0)) throw std::invalid_argument("gaze_error: zero gaze vector");
    if (std::abs(n - 1.0) > 1e-6) r.renormalized = true;
    return Eigen::Vector3d(v / n);
  };
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (unit(a[i]) - unit(b[i])).norm();
  r.value = s / static_cast<double>(a.size());
  return r;
}

namespace {

using Image = Eigen::MatrixXd;  // rows = y

Image to_gray(const Tensor& f) {
  if (f.rank() == 2) {
    Image g(f.dim(0), f.dim(1));
    for (int y = 0; y < f.dim(0); ++y)
      for (int x = 0; x < f.dim(1); ++x) g(y, x) = f.at({y, x});
    return g;
  }
  if (f.rank() == 3 && (f.dim(0) == 3 || f.dim(0) == 1)) {
    const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
    Image g(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        g(y, x) = c == 1 ? f.at({0, y, x})
                         : 0.299 * f.at({0, y, x}) + 0.587 * f.at({1, y, x}) + 0.114 * f.at({2, y, x});
      }
    return g;
  }
  throw std::invalid_argument("optical_flow: frame must be [3, H, W], [1, H, W] or [H, W], got " +
                              shape_str(f.shape()));
}

Image downsample(const Image& g) {
  const int h = std::max(1, static_cast<int>(g.rows()) / 2), w = std::max(1, static_cast<int>(g.cols()) / 2);
  Image d(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      int n = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int yy = std::min<int>(2 * y + dy, g.rows() - 1), xx = std::min<int>(2 * x + dx, g.cols() - 1);
          s += g(yy, xx);
          ++n;
        }
      d(y, x) = s / n;
    }
  return d;
}

inline double clamped(const Image& g, int y, int x) {
  y = std::clamp<int>(y, 0, g.rows() - 1);
  x = std::clamp<int>(x, 0, g.cols() - 1);
  return g(y, x);
}

// flow entries are integer displacements stored as int pairs.
struct IntFlow {
  int h = 0, w = 0;
  std::vector<int> dx, dy;
};

IntFlow match_level(const Image& a, const Image& b, const IntFlow* coarse, const FlowOptions& opt) {
  IntFlow f;
  f.h = static_cast<int>(a.rows());
  f.w = static_cast<int>(a.cols());
  f.dx.assign(static_cast<std::size_t>(f.h * f.w), 0);
  f.dy.assign(static_cast<std::size_t>(f.h * f.w), 0);
  const int lo = -opt.block / 2, hi = opt.block - opt.block / 2;
  for (int y = 0; y < f.h; ++y)
    for (int x = 0; x < f.w; ++x) {
      int ix = 0, iy = 0;
      if (coarse) {
        const int cy = std::min(y / 2, coarse->h - 1), cx = std::min(x / 2, coarse->w - 1);
        ix = 2 * coarse->dx[static_cast<std::size_t>(cy * coarse->w + cx)];
        iy = 2 * coarse->dy[static_cast<std::size_t>(cy * coarse->w + cx)];
      }
      double best = std::numeric_limits<double>::infinity();
      int bx = 0, by = 0;
      long best_mag = std::numeric_limits<long>::max();
      auto consider = [&](int ux, int uy) {
        double cost = 0;
        for (int by_ = lo; by_ < hi; ++by_)
          for (int bx_ = lo; bx_ < hi; ++bx_)
            cost += std::abs(clamped(a, y + by_, x + bx_) - clamped(b, y + by_ + uy, x + bx_ + ux));
        const long mag = static_cast<long>(ux) * ux + static_cast<long>(uy) * uy;
        // Equal costs go to the smallest total displacement.
        if (cost < best - 1e-12 || (std::abs(cost - best) <= 1e-12 && mag < best_mag)) {
          best = cost;
          bx = ux;
          by = uy;
          best_mag = mag;
        }
      };
      // Search around the upsampled coarse estimate and around zero, so a
      // wrong coarse match cannot hide a small true displacement.
      for (int sy = -opt.radius; sy <= opt.radius; ++sy)
        for (int sx = -opt.radius; sx <= opt.radius; ++sx) {
          consider(sx, sy);
          const int ux = ix + sx, uy = iy + sy;
          if (std::abs(ux) > opt.radius || std::abs(uy) > opt.radius) consider(ux, uy);
        }
      f.dx[static_cast<std::size_t>(y * f.w + x)] = bx;
      f.dy[static_cast<std::size_t>(y * f.w + x)] = by;
    }
  return f;
}

}  // namespace

Tensor optical_flow(const Tensor& frame_a, const Tensor& frame_b, const FlowOptions& opt) {
  if (frame_a.shape() != frame_b.shape()) {
    throw std::invalid_argument("optical_flow: frame sizes differ: " + shape_str(frame_a.shape()) + " vs " +
                                shape_str(frame_b.shape()));
  }
  if (opt.levels < 1 || opt.block < 1 || opt.radius < 0) throw std::invalid_argument("optical_flow: bad options");
  std::vector<Image> pa{to_gray(frame_a)}, pb{to_gray(frame_b)};
  for (int l = 1; l < opt.levels; ++l) {
    pa.push_back(downsample(pa.back()));
    pb.push_back(downsample(pb.back()));
  }
  IntFlow flow;
  for (int l = opt.levels - 1; l >= 0; --l) {
    const bool has_coarse = l < opt.levels - 1;
    IntFlow next = match_level(pa[static_cast<std::size_t>(l)], pb[static_cast<std::size_t>(l)],
                               has_coarse ? &flow : nullptr, opt);
    flow = std::move(next);
  }
  Tensor out(Shape{flow.h, flow.w, 2});
  for (int y = 0; y < flow.h; ++y)
    for (int x = 0; x < flow.w; ++x) {
      out.at({y, x, 0}) = flow.dx[static_cast<std::size_t>(y * flow.w + x)];
      out.at({y, x, 1}) = flow.dy[static_cast<std::size_t>(y * flow.w + x)];
    }
  return out;
}

double temporal_consistency(const std::vector<Tensor>& a, const std::vector<Tensor>& b, const FlowOptions& opt) {
  if (a.size() != b.size()) throw std::invalid_argument("temporal_consistency: frame counts differ");
  if (a.size() < 2) throw std::invalid_argument("temporal_consistency: need at least two frames");
  double total = 0;
  for (std::size_t t = 0; t + 1 < a.size(); ++t) {
    if (a[t].shape() != b[t].shape()) throw std::invalid_argument("temporal_consistency: frame sizes differ");
    const Tensor fa = optical_flow(a[t], a[t + 1], opt);
    const Tensor fb = optical_flow(b[t], b[t + 1], opt);
    const std::size_t np = fa.size() / 2;
    double epe = 0;
    for (std::size_t p = 0; p < np; ++p) epe += std::hypot(fa[2 * p] - fb[2 * p], fa[2 * p + 1] - fb[2 * p + 1]);
    total += epe / static_cast<double>(np);
  }
  return total / static_cast<double>(a.size() - 1);
}

SyncScores sync_metrics(const Eigen::MatrixXd& video, const Eigen::MatrixXd& audio, int max_offset) {
  if (video.rows() != audio.rows() || video.cols() != audio.cols()) {
    throw std::invalid_argument("sync_metrics: video and audio embeddings differ in shape");
  }
  if (max_offset < 0) throw std::invalid_argument("sync_metrics: negative offset window");
  const int t_count = static_cast<int>(video.rows());
  if (t_count <= 2 * max_offset) throw std::invalid_argument("sync_metrics: clip shorter than the offset window");
  const int n_off = 2 * max_offset + 1;
  std::vector<double> per_offset(static_cast<std::size_t>(n_off), 0.0), d(static_cast<std::size_t>(n_off));
  SyncScores s;
  int used = 0;
  for (int t = max_offset; t < t_count - max_offset; ++t, ++used) {
    for (int k = 0; k < n_off; ++k) {
      d[static_cast<std::size_t>(k)] = (video.row(t) - audio.row(t + k - max_offset)).norm();
      per_offset[static_cast<std::size_t>(k)] += d[static_cast<std::size_t>(k)];
    }
    const double mn = *std::min_element(d.begin(), d.end());
    std::nth_element(d.begin(), d.begin() + max_offset, d.end());
    s.lse_d += mn;
    s.lse_c += d[static_cast<std::size_t>(max_offset)] - mn;
  }
  s.lse_d /= used;
  s.lse_c /= used;
  int best = 0;
  for (int k = 1; k < n_off; ++k) {
    const double cur = per_offset[static_cast<std::size_t>(k)], bv = per_offset[static_cast<std::size_t>(best)];
    if (cur < bv || (cur == bv && std::abs(k - max_offset) < std::abs(best - max_offset))) best = k;
  }
  s.best_offset = best - max_offset;
  return s;
}

double id_similarity(const Eigen::VectorXd& source, const Eigen::MatrixXd& frames) {
  if (frames.rows() == 0) throw std::invalid_argument("id_similarity: no frames");
  if (frames.cols() != source.size()) throw std::invalid_argument("id_similarity: embedding sizes differ");
  const Eigen::VectorXd s = source.normalized();
  double acc = 0;
  for (int t = 0; t < frames.rows(); ++t) acc += frames.row(t).normalized().dot(s);
  return acc / static_cast<double>(frames.rows());
}

Retrieval id_retrieval(const Eigen::MatrixXd& frames, const std::vector<int>& source_index,
                       const Eigen::MatrixXd& gallery) {
  if (gallery.rows() == 0) throw std::invalid_argument("id_retrieval: empty gallery");
  if (frames.rows() == 0 || static_cast<std::size_t>(frames.rows()) != source_index.size()) {
    throw std::invalid_argument("id_retrieval: one source index per frame required");
  }
  if (frames.cols() != gallery.cols()) throw std::invalid_argument("id_retrieval: embedding sizes differ");
  Eigen::MatrixXd g = gallery;
  for (int i = 0; i < g.rows(); ++i) g.row(i).normalize();
  Retrieval r;
  int hits = 0;
  for (int t = 0; t < frames.rows(); ++t) {
    const Eigen::VectorXd sims = g * frames.row(t).normalized().transpose();
    int best = 0;
    for (int i = 1; i < sims.size(); ++i)
      if (sims(i) > sims(best)) best = i;
    for (int i = 0; i < sims.size(); ++i)
      if (i != best && std::abs(sims(i) - sims(best)) <= 1e-12) r.degenerate_ties = true;
    if (best == source_index[static_cast<std::size_t>(t)]) ++hits;
  }
  r.percent = 100.0 * hits / static_cast<double>(frames.rows());
  return r;
}

Gaussian fit_gaussian(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw std::invalid_argument("fit_gaussian: need at least two samples");
  Gaussian g;
  g.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd c = samples.rowwise() - g.mean.transpose();
  g.cov = (c.transpose() * c) / static_cast<double>(samples.rows() - 1);
  return g;
}

namespace {

void check_cov(const Eigen::MatrixXd& c, Eigen::Index d) {
  if (c.rows() != d || c.cols() != d) throw std::invalid_argument("frechet_distance: covariance size mismatch");
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-8) {
    throw std::invalid_argument("frechet_distance: covariance is not symmetric");
  }
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                        const Eigen::MatrixXd& cov2) {
  const Eigen::Index d = mu1.size();
  if (mu2.size() != d) throw std::invalid_argument("frechet_distance: mean sizes differ");
  check_cov(cov1, d);
  check_cov(cov2, d);
  // tr (C1 C2)^(1/2) = tr (S C2 S)^(1/2) with S = C1^(1/2); the latter is symmetric.
  const Eigen::MatrixXd s = psd_sqrt(cov1);
  const Eigen::MatrixXd m = s * cov2 * s;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (mu1 - mu2).squaredNorm() + cov1.trace() + cov2.trace() - 2.0 * tr_sqrt;
}

}  // namespace canonface::metrics
