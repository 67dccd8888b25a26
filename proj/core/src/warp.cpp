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

#include "canonface/warp.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace canonface::warp {

namespace {

struct Axis {
  int i0, i1;
  double frac;
  double dcoord;  // d(index)/d(normalized coordinate), 0 when clamped
};

// Unnormalized index (voxel centers at integers), border-clamped.
Axis locate(double coord, int n) {
  double ix = ((coord + 1.0) * n - 1.0) * 0.5;
  double dix = 0.5 * n;
  if (ix < 0.0) {
    ix = 0.0;
    dix = 0.0;
  } else if (ix > n - 1) {
    ix = n - 1;
    dix = 0.0;
  }
  const double r = std::round(ix);
  if (std::abs(ix - r) < 1e-9) ix = r;
  Axis a;
  a.i0 = std::min(static_cast<int>(std::floor(ix)), n - 1);
  a.i1 = std::min(a.i0 + 1, n - 1);
  a.frac = ix - a.i0;
  a.dcoord = dix;
  return a;
}

}  // namespace

DeformationField identity_field(VolumeShape s) {
  if (s.depth <= 0 || s.height <= 0 || s.width <= 0) throw std::invalid_argument("identity_field: dimensions must be positive");
  Tensor g(Shape{s.depth, s.height, s.width, 3});
  for (int z = 0; z < s.depth; ++z)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) {
        g.at({z, y, x, 0}) = motion::voxel_center(x, s.width);
        g.at({z, y, x, 1}) = motion::voxel_center(y, s.height);
        g.at({z, y, x, 2}) = motion::voxel_center(z, s.depth);
      }
  return DeformationField{g};
}

Var grid_sample3d(const Var& volume, const Var& grid) {
  const auto& vs = volume.shape();
  const auto& gs = grid.shape();
  if (vs.size() != 5) throw std::invalid_argument("grid_sample3d: volume must be [N, C, D, H, W]");
  if (gs.size() != 5 || gs[4] != 3 || gs[0] != vs[0]) {
    throw std::invalid_argument("grid_sample3d: grid must be [N, Do, Ho, Wo, 3] matching the batch");
  }
  if (!volume.value().all_finite()) throw std::invalid_argument("grid_sample3d: non-finite volume");
  const int nb = vs[0], nc = vs[1], d = vs[2], h = vs[3], w = vs[4];
  const int od = gs[1], oh = gs[2], ow = gs[3];
  const std::size_t in_sp = static_cast<std::size_t>(d) * h * w;
  const std::size_t out_sp = static_cast<std::size_t>(od) * oh * ow;

  Tensor out(Shape{nb, nc, od, oh, ow});
  const Tensor& vv = volume.value();
  const Tensor& gv = grid.value();
  for (int b = 0; b < nb; ++b)
    for (std::size_t p = 0; p < out_sp; ++p) {
      const double* gp = gv.data() + (static_cast<std::size_t>(b) * out_sp + p) * 3;
      const Axis ax = locate(gp[0], w), ay = locate(gp[1], h), az = locate(gp[2], d);
      const int xs[2] = {ax.i0, ax.i1}, ys[2] = {ay.i0, ay.i1}, zs[2] = {az.i0, az.i1};
      const double wx[2] = {1 - ax.frac, ax.frac}, wy[2] = {1 - ay.frac, ay.frac}, wz[2] = {1 - az.frac, az.frac};
      for (int c = 0; c < nc; ++c) {
        const double* src = vv.data() + (static_cast<std::size_t>(b) * nc + c) * in_sp;
        double acc = 0;
        for (int k = 0; k < 2; ++k)
          for (int j = 0; j < 2; ++j)
            for (int i = 0; i < 2; ++i)
              acc += wz[k] * wy[j] * wx[i] * src[(static_cast<std::size_t>(zs[k]) * h + ys[j]) * w + xs[i]];
        out[(static_cast<std::size_t>(b) * nc + c) * out_sp + p] = acc;
      }
    }

  return ag::make_op(std::move(out), {volume, grid}, [=](ag::Node& node) {
    const Tensor& vv = node.input_value(0);
    const Tensor& gv = node.input_value(1);
    const Tensor& g = node.grad;
    const bool want_v = node.input_wants_grad(0), want_g = node.input_wants_grad(1);
    Tensor gvol = want_v ? Tensor(vv.shape()) : Tensor();
    Tensor ggrid = want_g ? Tensor(gv.shape()) : Tensor();
    for (int b = 0; b < nb; ++b)
      for (std::size_t p = 0; p < out_sp; ++p) {
        const double* gp = gv.data() + (static_cast<std::size_t>(b) * out_sp + p) * 3;
        const Axis ax = locate(gp[0], w), ay = locate(gp[1], h), az = locate(gp[2], d);
        const int xs[2] = {ax.i0, ax.i1}, ys[2] = {ay.i0, ay.i1}, zs[2] = {az.i0, az.i1};
        const double wx[2] = {1 - ax.frac, ax.frac}, wy[2] = {1 - ay.frac, ay.frac}, wz[2] = {1 - az.frac, az.frac};
        const double sx[2] = {-1, 1};
        double dgx = 0, dgy = 0, dgz = 0;
        for (int c = 0; c < nc; ++c) {
          const double go = g[(static_cast<std::size_t>(b) * nc + c) * out_sp + p];
          if (go == 0) continue;
          const std::size_t base = (static_cast<std::size_t>(b) * nc + c) * in_sp;
          for (int k = 0; k < 2; ++k)
            for (int j = 0; j < 2; ++j)
              for (int i = 0; i < 2; ++i) {
                const std::size_t idx = base + (static_cast<std::size_t>(zs[k]) * h + ys[j]) * w + xs[i];
                if (want_v) gvol[idx] += go * wz[k] * wy[j] * wx[i];
                if (want_g) {
                  const double v = vv[idx] * go;
                  dgx += sx[i] * wy[j] * wz[k] * v;
                  dgy += wx[i] * sx[j] * wz[k] * v;
                  dgz += wx[i] * wy[j] * sx[k] * v;
                }
              }
        }
        if (want_g) {
          double* gg = ggrid.data() + (static_cast<std::size_t>(b) * out_sp + p) * 3;
          gg[0] += dgx * ax.dcoord;
          gg[1] += dgy * ay.dcoord;
          gg[2] += dgz * az.dcoord;
        }
      }
    if (want_v) node.input_grad(0) += gvol;
    if (want_g) node.input_grad(1) += ggrid;
  });
}

Tensor warp_volume(const Tensor& volume, const DeformationField& field) {
  if (volume.rank() != 4) throw std::invalid_argument("warp_volume: volume must be [C, D, H, W]");
  const Shape& gs = field.grid.shape();
  if (gs.size() != 4 || gs[3] != 3 || gs[0] != volume.dim(1) || gs[1] != volume.dim(2) || gs[2] != volume.dim(3)) {
    throw std::invalid_argument("warp_volume: field shape " + shape_str(gs) + " does not match volume " +
                                shape_str(volume.shape()));
  }
  Shape vb = volume.shape();
  vb.insert(vb.begin(), 1);
  Shape gb = gs;
  gb.insert(gb.begin(), 1);
  const Var out = grid_sample3d(ag::constant(volume.reshaped(vb)), ag::constant(field.grid.reshaped(gb)));
  return out.value().reshaped(volume.shape());
}

AppearanceEncoder::AppearanceEncoder(const VolumeConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.image_size % 4 != 0) throw std::invalid_argument("appearance encoder: image size must be divisible by 4");
  c1_ = nn::Conv2d(3, 16, 3, 1, rng);
  c2_ = nn::Conv2d(16, 32, 3, 2, rng);
  c3_ = nn::Conv2d(32, cfg.channels * cfg.depth, 3, 2, rng, true, 1.0);
}

std::vector<Var> AppearanceEncoder::features(const Var& images) const {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != cfg_.image_size || s[3] != cfg_.image_size) {
    throw std::invalid_argument("appearance encoder: expected [N, 3, " + std::to_string(cfg_.image_size) + ", " +
                                std::to_string(cfg_.image_size) + "], got " + shape_str(s));
  }
  Var h1 = ag::leaky_relu(c1_(images), nn::kLeakySlope);
  Var h2 = ag::leaky_relu(c2_(h1), nn::kLeakySlope);
  return {h1, h2};
}

Var AppearanceEncoder::operator()(const Var& images) const {
  const Var h = features(images)[1];
  const int nb = images.dim(0), sp = cfg_.spatial();
  return ag::reshape(ag::softplus(c3_(h)), {nb, cfg_.channels, cfg_.depth, sp, sp});
}

void AppearanceEncoder::collect(const std::string& prefix, nn::NamedParams& out) const {
  c1_.collect(prefix + ".c1", out);
  c2_.collect(prefix + ".c2", out);
  c3_.collect(prefix + ".c3", out);
}

AppearanceDecoder::AppearanceDecoder(const VolumeConfig& cfg, Rng& rng) : cfg_(cfg) {
  c1_ = nn::Conv2d(cfg.channels * cfg.depth, 32, 3, 1, rng);
  c2_ = nn::Conv2d(32, 16, 3, 1, rng);
  c3_ = nn::Conv2d(16, 16, 3, 1, rng);
  out_ = nn::Conv2d(16, 3, 3, 1, rng, true, 1.0);
}

Var AppearanceDecoder::operator()(const Var& volumes) const {
  const auto& s = volumes.shape();
  const int sp = cfg_.spatial();
  if (s.size() != 5 || s[1] != cfg_.channels || s[2] != cfg_.depth || s[3] != sp || s[4] != sp) {
    throw std::invalid_argument("appearance decoder: volume shape " + shape_str(s) + " does not match configuration");
  }
  const int nb = s[0];
  Var h = ag::reshape(volumes, {nb, cfg_.channels * cfg_.depth, sp, sp});
  h = ag::leaky_relu(c1_(h), nn::kLeakySlope);
  h = ag::upsample_nearest2d(h, 2);
  h = ag::leaky_relu(c2_(h), nn::kLeakySlope);
  h = ag::upsample_nearest2d(h, 2);
  h = ag::leaky_relu(c3_(h), nn::kLeakySlope);
  return ag::sigmoid(out_(h));
}

void AppearanceDecoder::collect(const std::string& prefix, nn::NamedParams& out) const {
  c1_.collect(prefix + ".c1", out);
  c2_.collect(prefix + ".c2", out);
  c3_.collect(prefix + ".c3", out);
  out_.collect(prefix + ".out", out);
}

}  // namespace canonface::warp
