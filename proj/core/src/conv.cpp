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

#include <Eigen/Core>
#include <stdexcept>

#include "canonface/autograd.h"

namespace canonface::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

struct Geom3 {
  int ci, d, h, w;
  int kd, kh, kw;
  int sd, sh, sw;
  int pd, ph, pw;
  int od, oh, ow;

  int rows() const { return ci * kd * kh * kw; }
  int cols() const { return od * oh * ow; }
  std::size_t in_size() const { return static_cast<std::size_t>(ci) * d * h * w; }
};

int out_extent(int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; }

// Volumetric im2col; 2-D convolution is the d = kd = 1 case.
void im2col(const double* x, const Geom3& g, double* cols) {
  const int ncols = g.cols();
  for (int c = 0; c < g.ci; ++c)
    for (int a = 0; a < g.kd; ++a)
      for (int b = 0; b < g.kh; ++b)
        for (int e = 0; e < g.kw; ++e) {
          const int row = ((c * g.kd + a) * g.kh + b) * g.kw + e;
          double* out = cols + static_cast<std::size_t>(row) * ncols;
          int idx = 0;
          for (int z = 0; z < g.od; ++z) {
            const int iz = z * g.sd - g.pd + a;
            for (int y = 0; y < g.oh; ++y) {
              const int iy = y * g.sh - g.ph + b;
              const bool zy_ok = iz >= 0 && iz < g.d && iy >= 0 && iy < g.h;
              const double* src = x + ((static_cast<std::size_t>(c) * g.d + (zy_ok ? iz : 0)) * g.h +
                                       (zy_ok ? iy : 0)) * g.w;
              for (int xx = 0; xx < g.ow; ++xx, ++idx) {
                const int ix = xx * g.sw - g.pw + e;
                out[idx] = (zy_ok && ix >= 0 && ix < g.w) ? src[ix] : 0.0;
              }
            }
          }
        }
}

void col2im(const double* cols, const Geom3& g, double* x) {
  const int ncols = g.cols();
  for (int c = 0; c < g.ci; ++c)
    for (int a = 0; a < g.kd; ++a)
      for (int b = 0; b < g.kh; ++b)
        for (int e = 0; e < g.kw; ++e) {
          const int row = ((c * g.kd + a) * g.kh + b) * g.kw + e;
          const double* in = cols + static_cast<std::size_t>(row) * ncols;
          int idx = 0;
          for (int z = 0; z < g.od; ++z) {
            const int iz = z * g.sd - g.pd + a;
            for (int y = 0; y < g.oh; ++y) {
              const int iy = y * g.sh - g.ph + b;
              if (iz < 0 || iz >= g.d || iy < 0 || iy >= g.h) {
                idx += g.ow;
                continue;
              }
              double* dst = x + (static_cast<std::size_t>(c) * g.d + iz) * g.h * g.w +
                            static_cast<std::size_t>(iy) * g.w;
              for (int xx = 0; xx < g.ow; ++xx, ++idx) {
                const int ix = xx * g.sw - g.pw + e;
                if (ix >= 0 && ix < g.w) dst[ix] += in[idx];
              }
            }
          }
        }
}

// Shared implementation: x [N, Ci, D, H, W], weights either shared
// [Co, rows] or per-sample [N, Co, rows].
Var conv_impl(const Var& x, const Var& w, const Var& b, const Geom3& g, int n, int co,
              bool per_sample, const Shape& out_shape) {
  const bool has_b = b.defined();
  if (has_b && (b.shape().size() != 1 || b.shape()[0] != co)) {
    throw std::invalid_argument("conv: bias must have one entry per output channel");
  }
  const int rows = g.rows();
  const int ncols = g.cols();
  Tensor out(out_shape);
  Storage cols(static_cast<std::size_t>(rows) * ncols);
  for (int s = 0; s < n; ++s) {
    im2col(x.value().data() + s * g.in_size(), g, cols.data());
    const double* wp = w.value().data() + (per_sample ? static_cast<std::size_t>(s) * co * rows : 0);
    CMapMat wm(wp, co, rows);
    CMapMat cm(cols.data(), rows, ncols);
    MapMat om(out.data() + static_cast<std::size_t>(s) * co * ncols, co, ncols);
    om.noalias() = wm * cm;
    if (has_b) {
      for (int o = 0; o < co; ++o) om.row(o).array() += b.value()[o];
    }
  }
  std::vector<Var> inputs{x, w};
  if (has_b) inputs.push_back(b);
  return make_op(std::move(out), inputs, [g, n, co, per_sample, has_b](Node& self) {
    const int rows = g.rows();
    const int ncols = g.cols();
    const bool gx_on = self.input_wants_grad(0);
    const bool gw_on = self.input_wants_grad(1);
    const auto& xv = self.input_value(0);
    const auto& wv = self.input_value(1);
    Storage cols(static_cast<std::size_t>(rows) * ncols);
    Storage gcols(gx_on ? cols.size() : 0);
    for (int s = 0; s < n; ++s) {
      CMapMat go(self.grad.data() + static_cast<std::size_t>(s) * co * ncols, co, ncols);
      const std::size_t woff = per_sample ? static_cast<std::size_t>(s) * co * rows : 0;
      if (gw_on) {
        im2col(xv.data() + s * g.in_size(), g, cols.data());
        CMapMat cm(cols.data(), rows, ncols);
        MapMat gw(self.input_grad(1).data() + woff, co, rows);
        gw.noalias() += go * cm.transpose();
      }
      if (gx_on) {
        CMapMat wm(wv.data() + woff, co, rows);
        MapMat gc(gcols.data(), rows, ncols);
        gc.noalias() = wm.transpose() * go;
        col2im(gcols.data(), g, self.input_grad(0).data() + s * g.in_size());
      }
      if (has_b && self.input_wants_grad(2)) {
        auto& gb = self.input_grad(2);
        const double* gp = self.grad.data() + static_cast<std::size_t>(s) * co * ncols;
        for (int o = 0; o < co; ++o) {
          double acc = 0;
          for (int j = 0; j < ncols; ++j) acc += gp[static_cast<std::size_t>(o) * ncols + j];
          gb[o] += acc;
        }
      }
    }
  });
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4) throw std::invalid_argument("conv2d: input must be [N,C,H,W], got " + shape_str(xs));
  const bool per_sample = ws.size() == 5;
  if (ws.size() != 4 && !per_sample) throw std::invalid_argument("conv2d: bad weight rank");
  if (per_sample && ws[0] != xs[0]) throw std::invalid_argument("conv2d: per-sample weight batch mismatch");
  const int off = per_sample ? 1 : 0;
  const int co = ws[off], ci = ws[off + 1], kh = ws[off + 2], kw = ws[off + 3];
  if (ci != xs[1]) {
    throw std::invalid_argument("conv2d: channel mismatch, input has " + std::to_string(xs[1]) +
                                ", weights expect " + std::to_string(ci));
  }
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
  Geom3 g{ci, 1, xs[2], xs[3], 1, kh, kw, 1, stride, stride, 0, pad, pad, 1, 0, 0};
  g.oh = out_extent(g.h, kh, stride, pad);
  g.ow = out_extent(g.w, kw, stride, pad);
  if (g.oh < 1 || g.ow < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");
  return conv_impl(x, w, b, g, xs[0], co, per_sample, Shape{xs[0], co, g.oh, g.ow});
}

Var conv3d(const Var& x, const Var& w, const Var& b, std::array<int, 3> stride, std::array<int, 3> pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 5 || ws.size() != 5) throw std::invalid_argument("conv3d: expected 5-D input and weights");
  if (ws[1] != xs[1]) throw std::invalid_argument("conv3d: channel mismatch");
  Geom3 g{xs[1], xs[2], xs[3], xs[4], ws[2], ws[3], ws[4], stride[0], stride[1], stride[2],
          pad[0], pad[1], pad[2], 0, 0, 0};
  g.od = out_extent(g.d, g.kd, g.sd, g.pd);
  g.oh = out_extent(g.h, g.kh, g.sh, g.ph);
  g.ow = out_extent(g.w, g.kw, g.sw, g.pw);
  if (g.od < 1 || g.oh < 1 || g.ow < 1) throw std::invalid_argument("conv3d: kernel larger than padded input");
  return conv_impl(x, w, b, g, xs[0], ws[0], false, Shape{xs[0], ws[0], g.od, g.oh, g.ow});
}

}  // namespace canonface::ag
