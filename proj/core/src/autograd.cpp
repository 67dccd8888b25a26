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

#include "canonface/autograd.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace canonface::ag {

Tensor& Node::grad_ref() {
  if (grad.size() != value.size()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var constant(Tensor value) { return Var(std::move(value), false); }
Var parameter(Tensor value) { return Var(std::move(value), true); }
Var detach(const Var& v) { return Var(v.value(), false); }

Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.defined() ? in.node() : nullptr);
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

namespace {

std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next].get();
      ++next;
      if (child && child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

void backward(const Var& root, const Tensor& seed) {
  if (!root.requires_grad()) return;
  Node* r = root.node().get();
  if (seed.size() != r->value.size()) throw std::invalid_argument("backward seed shape mismatch");
  r->grad_ref() += seed;
  auto order = topo_order(r);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) {
      n->backward_fn(*n);
      // Interior gradients are no longer needed once propagated.
      n->grad = Tensor();
    }
  }
}

void backward(const Var& root) {
  Tensor seed(root.shape(), 1.0);
  backward(root, seed);
}

namespace {

void require_same(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

template <typename F, typename G>
Var unary(const Var& a, F f, G dfdx) {
  Tensor out(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return make_op(std::move(out), {a}, [dfdx](Node& self) {
    const auto& x = self.input_value(0);
    auto& gx = self.input_grad(0);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += self.grad[i] * dfdx(x[i], self.value[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value() + b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (self.input_wants_grad(0)) self.input_grad(0) += self.grad;
    if (self.input_wants_grad(1)) self.input_grad(1) += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = a.value() - b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (self.input_wants_grad(0)) self.input_grad(0) += self.grad;
    if (self.input_wants_grad(1)) {
      auto& g = self.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.input_value(0);
    const auto& bv = self.input_value(1);
    if (self.input_wants_grad(0)) {
      auto& g = self.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (self.input_wants_grad(1)) {
      auto& g = self.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
      [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_op(Tensor::scalar(s), {a}, [](Node& self) {
    auto& g = self.input_grad(0);
    const double go = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go;
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var mean_per_sample(const Var& a) {
  const int n = a.dim(0);
  const std::size_t per = a.value().size() / static_cast<std::size_t>(n);
  Tensor out(Shape{n});
  for (int s = 0; s < n; ++s) {
    double acc = 0.0;
    const double* p = a.value().data() + s * per;
    for (std::size_t i = 0; i < per; ++i) acc += p[i];
    out[s] = acc / static_cast<double>(per);
  }
  return make_op(std::move(out), {a}, [n, per](Node& self) {
    auto& g = self.input_grad(0);
    for (int s = 0; s < n; ++s) {
      const double go = self.grad[s] / static_cast<double>(per);
      double* p = g.data() + s * per;
      for (std::size_t i = 0; i < per; ++i) p[i] += go;
    }
  });
}

Var weighted_sum(const Var& a, const std::vector<double>& weights) {
  if (a.value().size() != weights.size()) throw std::invalid_argument("weighted_sum size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * a.value()[i];
  return make_op(Tensor::scalar(s), {a}, [weights](Node& self) {
    auto& g = self.input_grad(0);
    for (std::size_t i = 0; i < weights.size(); ++i) g[i] += self.grad[0] * weights[i];
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_op(std::move(out), {a}, [](Node& self) {
    auto& g = self.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

namespace {

// Views a tensor as [outer, axis, inner] around axis 1 (or 0).
struct Split3 {
  std::size_t outer, mid, inner;
};

Split3 split_at(const Shape& s, int axis) {
  Split3 r{1, static_cast<std::size_t>(s[axis]), 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

Var concat_axis(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  Shape out_shape = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != static_cast<int>(out_shape.size())) throw std::invalid_argument("concat rank mismatch");
    for (int i = 0; i < p.value().rank(); ++i) {
      if (i != axis && p.shape()[i] != out_shape[i]) throw std::invalid_argument("concat shape mismatch");
    }
    total += p.shape()[axis];
  }
  out_shape[axis] = total;
  Tensor out(out_shape);
  const Split3 o = split_at(out_shape, axis);
  std::vector<int> offsets;
  int off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const Split3 s = split_at(p.shape(), axis);
    for (std::size_t a = 0; a < s.outer; ++a) {
      std::copy_n(p.value().data() + a * s.mid * s.inner, s.mid * s.inner,
                  out.data() + (a * o.mid + off) * o.inner);
    }
    off += p.shape()[axis];
  }
  return make_op(std::move(out), parts, [offsets, axis](Node& self) {
    const Split3 o = split_at(self.value.shape(), axis);
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      if (!self.input_wants_grad(k)) continue;
      auto& g = self.input_grad(k);
      const Split3 s = split_at(g.shape(), axis);
      for (std::size_t a = 0; a < s.outer; ++a) {
        const double* src = self.grad.data() + (a * o.mid + offsets[k]) * o.inner;
        double* dst = g.data() + a * s.mid * s.inner;
        for (std::size_t i = 0; i < s.mid * s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var slice_axis(const Var& a, int axis, int begin, int end) {
  const Shape& in = a.shape();
  if (begin < 0 || end > in[axis] || begin >= end) throw std::invalid_argument("bad slice range");
  Shape out_shape = in;
  out_shape[axis] = end - begin;
  Tensor out(out_shape);
  const Split3 s = split_at(in, axis);
  const std::size_t len = static_cast<std::size_t>(end - begin) * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(a.value().data() + (o * s.mid + begin) * s.inner, len, out.data() + o * len);
  }
  return make_op(std::move(out), {a}, [axis, begin, end](Node& self) {
    auto& g = self.input_grad(0);
    const Split3 s = split_at(g.shape(), axis);
    const std::size_t len = static_cast<std::size_t>(end - begin) * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = g.data() + (o * s.mid + begin) * s.inner;
      const double* src = self.grad.data() + o * len;
      for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
    }
  });
}

}  // namespace

Var concat_channels(const std::vector<Var>& parts) { return concat_axis(parts, 1); }
Var concat_batch(const std::vector<Var>& parts) { return concat_axis(parts, 0); }
Var slice_channels(const Var& a, int begin, int end) { return slice_axis(a, 1, begin, end); }
Var slice_batch(const Var& a, int begin, int end) { return slice_axis(a, 0, begin, end); }

Var mul_channel_broadcast(const Var& f, const Var& m) {
  const Shape& fs = f.shape();
  const Shape& ms = m.shape();
  if (fs.size() < 2 || ms.size() != fs.size() || ms[0] != fs[0] || ms[1] != 1) {
    throw std::invalid_argument("mul_channel_broadcast: expected [N,C,...] and [N,1,...]");
  }
  for (std::size_t i = 2; i < fs.size(); ++i) {
    if (fs[i] != ms[i]) throw std::invalid_argument("mul_channel_broadcast: spatial mismatch");
  }
  const int n = fs[0], c = fs[1];
  const std::size_t sp = f.value().size() / static_cast<std::size_t>(n * c);
  Tensor out(fs);
  for (int b = 0; b < n; ++b) {
    const double* mp = m.value().data() + b * sp;
    for (int ch = 0; ch < c; ++ch) {
      const double* fp = f.value().data() + (b * c + ch) * sp;
      double* op = out.data() + (b * c + ch) * sp;
      for (std::size_t i = 0; i < sp; ++i) op[i] = fp[i] * mp[i];
    }
  }
  return make_op(std::move(out), {f, m}, [n, c, sp](Node& self) {
    const auto& fv = self.input_value(0);
    const auto& mv = self.input_value(1);
    if (self.input_wants_grad(0)) {
      auto& g = self.input_grad(0);
      for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < sp; ++i)
            g[(b * c + ch) * sp + i] += self.grad[(b * c + ch) * sp + i] * mv[b * sp + i];
    }
    if (self.input_wants_grad(1)) {
      auto& g = self.input_grad(1);
      for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < sp; ++i)
            g[b * sp + i] += self.grad[(b * c + ch) * sp + i] * fv[(b * c + ch) * sp + i];
    }
  });
}

Var add_rows(const Var& x, const Var& t) {
  const Shape& xs = x.shape();
  if (xs.size() != 3 || t.shape().size() != 2 || t.shape()[0] != xs[0] || t.shape()[1] != xs[2]) {
    throw std::invalid_argument("add_rows: expected [N,K,C] and [N,C]");
  }
  const int n = xs[0], k = xs[1], c = xs[2];
  Tensor out = x.value();
  for (int b = 0; b < n; ++b)
    for (int r = 0; r < k; ++r)
      for (int j = 0; j < c; ++j) out[(b * k + r) * c + j] += t.value()[b * c + j];
  return make_op(std::move(out), {x, t}, [n, k, c](Node& self) {
    if (self.input_wants_grad(0)) self.input_grad(0) += self.grad;
    if (self.input_wants_grad(1)) {
      auto& g = self.input_grad(1);
      for (int b = 0; b < n; ++b)
        for (int r = 0; r < k; ++r)
          for (int j = 0; j < c; ++j) g[b * c + j] += self.grad[(b * k + r) * c + j];
    }
  });
}

Var add_channel_bias(const Var& x, const Var& b) {
  const Shape& xs = x.shape();
  if (xs.size() < 2 || b.shape().size() != 1 || b.shape()[0] != xs[1]) {
    throw std::invalid_argument("add_channel_bias: bias size must equal channel count");
  }
  const int n = xs[0], c = xs[1];
  const std::size_t sp = x.value().size() / static_cast<std::size_t>(n * c);
  Tensor out = x.value();
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch) {
      double* p = out.data() + (s * c + ch) * sp;
      for (std::size_t i = 0; i < sp; ++i) p[i] += b.value()[ch];
    }
  return make_op(std::move(out), {x, b}, [n, c, sp](Node& self) {
    if (self.input_wants_grad(0)) self.input_grad(0) += self.grad;
    if (self.input_wants_grad(1)) {
      auto& g = self.input_grad(1);
      for (int s = 0; s < n; ++s)
        for (int ch = 0; ch < c; ++ch) {
          const double* p = self.grad.data() + (s * c + ch) * sp;
          double acc = 0.0;
          for (std::size_t i = 0; i < sp; ++i) acc += p[i];
          g[ch] += acc;
        }
    }
  });
}

Var bmm(const Var& a, const Var& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1]) {
    throw std::invalid_argument("bmm: incompatible shapes " + shape_str(as) + " x " + shape_str(bs));
  }
  const int n = as[0], m = as[1], k = as[2], p = bs[2];
  Tensor out(Shape{n, m, p});
  for (int s = 0; s < n; ++s)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < p; ++j) {
        double acc = 0.0;
        for (int q = 0; q < k; ++q) acc += a.value()[(s * m + i) * k + q] * b.value()[(s * k + q) * p + j];
        out[(s * m + i) * p + j] = acc;
      }
  return make_op(std::move(out), {a, b}, [n, m, k, p](Node& self) {
    const auto& av = self.input_value(0);
    const auto& bv = self.input_value(1);
    const auto& g = self.grad;
    if (self.input_wants_grad(0)) {
      auto& ga = self.input_grad(0);
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < m; ++i)
          for (int q = 0; q < k; ++q) {
            double acc = 0.0;
            for (int j = 0; j < p; ++j) acc += g[(s * m + i) * p + j] * bv[(s * k + q) * p + j];
            ga[(s * m + i) * k + q] += acc;
          }
    }
    if (self.input_wants_grad(1)) {
      auto& gb = self.input_grad(1);
      for (int s = 0; s < n; ++s)
        for (int q = 0; q < k; ++q)
          for (int j = 0; j < p; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += av[(s * m + i) * k + q] * g[(s * m + i) * p + j];
            gb[(s * k + q) * p + j] += acc;
          }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1]) {
    throw std::invalid_argument("linear: incompatible shapes " + shape_str(xs) + " x " + shape_str(ws));
  }
  const int n = xs[0], in = xs[1], out_dim = ws[0];
  const bool has_b = b.defined();
  if (has_b && (b.shape().size() != 1 || b.shape()[0] != out_dim)) throw std::invalid_argument("linear: bias size");
  Tensor out(Shape{n, out_dim});
  for (int s = 0; s < n; ++s)
    for (int o = 0; o < out_dim; ++o) {
      double acc = has_b ? b.value()[o] : 0.0;
      const double* wr = w.value().data() + o * in;
      const double* xr = x.value().data() + s * in;
      for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
      out[s * out_dim + o] = acc;
    }
  std::vector<Var> inputs{x, w};
  if (has_b) inputs.push_back(b);
  return make_op(std::move(out), inputs, [n, in, out_dim, has_b](Node& self) {
    const auto& xv = self.input_value(0);
    const auto& wv = self.input_value(1);
    const auto& g = self.grad;
    if (self.input_wants_grad(0)) {
      auto& gx = self.input_grad(0);
      for (int s = 0; s < n; ++s)
        for (int o = 0; o < out_dim; ++o) {
          const double go = g[s * out_dim + o];
          if (go == 0.0) continue;
          for (int i = 0; i < in; ++i) gx[s * in + i] += go * wv[o * in + i];
        }
    }
    if (self.input_wants_grad(1)) {
      auto& gw = self.input_grad(1);
      for (int s = 0; s < n; ++s)
        for (int o = 0; o < out_dim; ++o) {
          const double go = g[s * out_dim + o];
          if (go == 0.0) continue;
          for (int i = 0; i < in; ++i) gw[o * in + i] += go * xv[s * in + i];
        }
    }
    if (has_b && self.input_wants_grad(2)) {
      auto& gb = self.input_grad(2);
      for (int s = 0; s < n; ++s)
        for (int o = 0; o < out_dim; ++o) gb[o] += g[s * out_dim + o];
    }
  });
}

Var normalize_rows(const Var& x, double eps) {
  if (x.shape().size() != 2) throw std::invalid_argument("normalize_rows expects [N,D]");
  const int n = x.dim(0), d = x.dim(1);
  Tensor out(x.shape());
  std::vector<double> norms(n);
  for (int s = 0; s < n; ++s) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) acc += x.value()[s * d + i] * x.value()[s * d + i];
    norms[s] = std::sqrt(acc + eps);
    for (int i = 0; i < d; ++i) out[s * d + i] = x.value()[s * d + i] / norms[s];
  }
  return make_op(std::move(out), {x}, [n, d, norms](Node& self) {
    auto& gx = self.input_grad(0);
    for (int s = 0; s < n; ++s) {
      double dotp = 0.0;
      for (int i = 0; i < d; ++i) dotp += self.grad[s * d + i] * self.value[s * d + i];
      for (int i = 0; i < d; ++i) {
        gx[s * d + i] += (self.grad[s * d + i] - self.value[s * d + i] * dotp) / norms[s];
      }
    }
  });
}

Var normalize_channels(const Var& x, double eps) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw std::invalid_argument("normalize_channels expects [N,C,...]");
  const int n = xs[0], c = xs[1];
  const std::size_t sp = x.value().size() / static_cast<std::size_t>(n * c);
  Tensor out(xs);
  std::vector<double> norms(static_cast<std::size_t>(n) * sp);
  for (int s = 0; s < n; ++s)
    for (std::size_t p = 0; p < sp; ++p) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const double v = x.value()[(s * c + ch) * sp + p];
        acc += v * v;
      }
      const double nr = std::sqrt(acc + eps);
      norms[s * sp + p] = nr;
      for (int ch = 0; ch < c; ++ch) out[(s * c + ch) * sp + p] = x.value()[(s * c + ch) * sp + p] / nr;
    }
  return make_op(std::move(out), {x}, [n, c, sp, norms](Node& self) {
    auto& gx = self.input_grad(0);
    for (int s = 0; s < n; ++s)
      for (std::size_t p = 0; p < sp; ++p) {
        double dotp = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t i = (s * c + ch) * sp + p;
          dotp += self.grad[i] * self.value[i];
        }
        const double nr = norms[s * sp + p];
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t i = (s * c + ch) * sp + p;
          gx[i] += (self.grad[i] - self.value[i] * dotp) / nr;
        }
      }
  });
}

Var dot_rows(const Var& a, const Var& b) {
  require_same(a, b, "dot_rows");
  if (a.shape().size() != 2) throw std::invalid_argument("dot_rows expects [N,D]");
  const int n = a.dim(0), d = a.dim(1);
  Tensor out(Shape{n});
  for (int s = 0; s < n; ++s) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) acc += a.value()[s * d + i] * b.value()[s * d + i];
    out[s] = acc;
  }
  return make_op(std::move(out), {a, b}, [n, d](Node& self) {
    const auto& av = self.input_value(0);
    const auto& bv = self.input_value(1);
    if (self.input_wants_grad(0)) {
      auto& g = self.input_grad(0);
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < d; ++i) g[s * d + i] += self.grad[s] * bv[s * d + i];
    }
    if (self.input_wants_grad(1)) {
      auto& g = self.input_grad(1);
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < d; ++i) g[s * d + i] += self.grad[s] * av[s * d + i];
    }
  });
}

Var upsample_nearest2d(const Var& x, int factor) {
  const Shape& xs = x.shape();
  if (xs.size() != 4 || factor < 1) throw std::invalid_argument("upsample_nearest2d expects [N,C,H,W]");
  const int nc = xs[0] * xs[1], h = xs[2], w = xs[3];
  const int ho = h * factor, wo = w * factor;
  Tensor out(Shape{xs[0], xs[1], ho, wo});
  for (int p = 0; p < nc; ++p)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx)
        out[(static_cast<std::size_t>(p) * ho + y) * wo + xx] =
            x.value()[(static_cast<std::size_t>(p) * h + y / factor) * w + xx / factor];
  return make_op(std::move(out), {x}, [nc, h, w, ho, wo, factor](Node& self) {
    auto& g = self.input_grad(0);
    for (int p = 0; p < nc; ++p)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx)
          g[(static_cast<std::size_t>(p) * h + y / factor) * w + xx / factor] +=
              self.grad[(static_cast<std::size_t>(p) * ho + y) * wo + xx];
  });
}

Var upsample_nearest3d(const Var& x, std::array<int, 3> f) {
  const Shape& xs = x.shape();
  if (xs.size() != 5) throw std::invalid_argument("upsample_nearest3d expects [N,C,D,H,W]");
  const int nc = xs[0] * xs[1], d = xs[2], h = xs[3], w = xs[4];
  const int dout = d * f[0], ho = h * f[1], wo = w * f[2];
  Tensor out(Shape{xs[0], xs[1], dout, ho, wo});
  auto in_index = [=](int p, int z, int y, int xx) {
    return ((static_cast<std::size_t>(p) * d + z / f[0]) * h + y / f[1]) * w + xx / f[2];
  };
  std::size_t o = 0;
  for (int p = 0; p < nc; ++p)
    for (int z = 0; z < dout; ++z)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx) out[o++] = x.value()[in_index(p, z, y, xx)];
  return make_op(std::move(out), {x}, [=](Node& self) {
    auto& g = self.input_grad(0);
    std::size_t o = 0;
    for (int p = 0; p < nc; ++p)
      for (int z = 0; z < dout; ++z)
        for (int y = 0; y < ho; ++y)
          for (int xx = 0; xx < wo; ++xx) g[in_index(p, z, y, xx)] += self.grad[o++];
  });
}

Var avg_pool2d(const Var& x, int factor) {
  const Shape& xs = x.shape();
  if (xs.size() != 4 || factor < 1 || xs[2] % factor || xs[3] % factor) {
    throw std::invalid_argument("avg_pool2d: spatial dims must be divisible by factor");
  }
  const int nc = xs[0] * xs[1], h = xs[2], w = xs[3];
  const int ho = h / factor, wo = w / factor;
  const double inv = 1.0 / (factor * factor);
  Tensor out(Shape{xs[0], xs[1], ho, wo});
  for (int p = 0; p < nc; ++p)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        out[(static_cast<std::size_t>(p) * ho + y / factor) * wo + xx / factor] +=
            inv * x.value()[(static_cast<std::size_t>(p) * h + y) * w + xx];
  return make_op(std::move(out), {x}, [=](Node& self) {
    auto& g = self.input_grad(0);
    for (int p = 0; p < nc; ++p)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          g[(static_cast<std::size_t>(p) * h + y) * w + xx] +=
              inv * self.grad[(static_cast<std::size_t>(p) * ho + y / factor) * wo + xx / factor];
  });
}

}  // namespace canonface::ag
