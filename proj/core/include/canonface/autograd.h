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
#include <functional>
#include <memory>
#include <vector>

#include "canonface/tensor.h"

namespace canonface::ag {

struct Node;
using BackwardFn = std::function<void(Node&)>;

/// One vertex of the reverse-mode tape. Nodes that do not require gradients
/// keep neither inputs nor a backward closure, so constant subgraphs are
/// released as soon as their values are consumed.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward_fn;

  Tensor& grad_ref();
  bool input_wants_grad(std::size_t i) const { return inputs[i] && inputs[i]->requires_grad; }
  Tensor& input_grad(std::size_t i) { return inputs[i]->grad_ref(); }
  const Tensor& input_value(std::size_t i) const { return inputs[i]->value; }
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int axis) const { return node_->value.dim(axis); }
  bool defined() const { return static_cast<bool>(node_); }
  double item() const { return node_->value.item(); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);
Var detach(const Var& v);

/// Creates a result node. The closure is retained only when some input
/// requires gradients.
Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn fn);

/// Reverse sweep from a scalar root. Leaf gradients accumulate.
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

// ---- elementwise ----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var abs(const Var& a);
Var square(const Var& a);

// ---- reductions -----------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
/// [N, ...] -> [N] mean over all non-batch axes.
Var mean_per_sample(const Var& a);
/// [N] weighted by constant per-sample factors then summed.
Var weighted_sum(const Var& a, const std::vector<double>& weights);

// ---- shape ----------------------------------------------------------------
Var reshape(const Var& a, Shape shape);
/// Concatenate along axis 1.
Var concat_channels(const std::vector<Var>& parts);
/// Rows [begin, end) along axis 1.
Var slice_channels(const Var& a, int begin, int end);
/// Samples [begin, end) along axis 0.
Var slice_batch(const Var& a, int begin, int end);
Var concat_batch(const std::vector<Var>& parts);

// ---- broadcasting ---------------------------------------------------------
/// f: [N, C, ...], m: [N, 1, ...] -> f * m broadcast over C.
Var mul_channel_broadcast(const Var& f, const Var& m);
/// x: [N, K, C], t: [N, C] -> x + t broadcast over K.
Var add_rows(const Var& x, const Var& t);
/// x: [N, C, ...], b: [C] -> x + b broadcast.
Var add_channel_bias(const Var& x, const Var& b);

// ---- linear algebra -------------------------------------------------------
/// a: [N, M, K], b: [N, K, P] -> [N, M, P].
Var bmm(const Var& a, const Var& b);
/// x: [N, in], w: [out, in], b: [out] (optional) -> [N, out].
Var linear(const Var& x, const Var& w, const Var& b);
/// Rows of x: [N, D] scaled to unit L2 norm; eps is added to the squared norm.
Var normalize_rows(const Var& x, double eps = 1e-24);
/// x: [N, C, ...] normalized across C at every position.
Var normalize_channels(const Var& x, double eps = 1e-10);
/// [N, D] x [N, D] -> [N].
Var dot_rows(const Var& a, const Var& b);

// ---- convolution & resampling --------------------------------------------
/// x: [N, Ci, H, W]; w: [Co, Ci, K, K] or per-sample [N, Co, Ci, K, K];
/// b: [Co] or undefined. Zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
/// x: [N, Ci, D, H, W]; w: [Co, Ci, Kd, Kh, Kw]; b: [Co] or undefined.
Var conv3d(const Var& x, const Var& w, const Var& b, std::array<int, 3> stride,
           std::array<int, 3> pad);
/// Nearest-neighbour upsampling of the trailing spatial axes.
Var upsample_nearest2d(const Var& x, int factor);
Var upsample_nearest3d(const Var& x, std::array<int, 3> factor);
Var avg_pool2d(const Var& x, int factor);

}  // namespace canonface::ag
