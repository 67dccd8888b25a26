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

#include "canonface/losses.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "canonface/synthworld.h"

namespace canonface::losses {

namespace {

Var relu(const Var& x) { return ag::leaky_relu(x, 0.0); }

Var sum_abs_batch_mean(const Var& x) {
  return ag::scale(ag::sum(ag::abs(x)), 1.0 / static_cast<double>(x.dim(0)));
}

void require_same(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

}  // namespace

AttributeProbe::AttributeProbe(int image_size, Rng& rng) : image_size_(image_size) {
  if (image_size % 8 != 0) throw std::invalid_argument("attribute probe needs an image size divisible by 8");
  c1_ = nn::Conv2d(3, 16, 3, 1, rng);
  c2_ = nn::Conv2d(16, 32, 3, 2, rng);
  c3_ = nn::Conv2d(32, 32, 3, 2, rng);
  c4_ = nn::Conv2d(32, 64, 3, 2, rng);
  fc_ = nn::Linear(64 * (image_size / 8) * (image_size / 8), 128, rng);
  head_id_ = nn::Linear(128, kIdentityDim, rng, 1.0);
  head_eye_ = nn::Linear(128, 24, rng, 0.1);
  head_gaze_ = nn::Linear(128, 3, rng, 0.1);
  head_mouth_ = nn::Linear(128, 1, rng, 0.1);
  head_gaze_.bias.mutable_value()[2] = -1.0;
}

ProbeOutput AttributeProbe::operator()(const Var& images) const {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != image_size_ || s[3] != image_size_) {
    throw std::invalid_argument("attribute probe: unexpected image shape " + shape_str(s));
  }
  const int nb = s[0];
  constexpr double slope = nn::kLeakySlope;
  Var h = ag::leaky_relu(c1_(images), slope);
  h = ag::leaky_relu(c2_(h), slope);
  h = ag::leaky_relu(c3_(h), slope);
  h = ag::leaky_relu(c4_(h), slope);
  h = ag::reshape(h, {nb, static_cast<int>(h.value().size()) / nb});
  h = ag::leaky_relu(fc_(h), slope);
  ProbeOutput out;
  out.features = h;
  out.identity = ag::normalize_rows(head_id_(h));
  out.eye_landmarks = head_eye_(h);
  out.gaze = ag::normalize_rows(head_gaze_(h));
  out.mouth_open = ag::reshape(head_mouth_(h), {nb});
  return out;
}

std::vector<Var> AttributeProbe::layer_features(const Var& images) const {
  constexpr double slope = nn::kLeakySlope;
  const Var h1 = ag::leaky_relu(c1_(images), slope);
  const Var h2 = ag::leaky_relu(c2_(h1), slope);
  return {images, h1, h2};
}

void AttributeProbe::collect(const std::string& prefix, nn::NamedParams& out) const {
  c1_.collect(prefix + ".c1", out);
  c2_.collect(prefix + ".c2", out);
  c3_.collect(prefix + ".c3", out);
  c4_.collect(prefix + ".c4", out);
  fc_.collect(prefix + ".fc", out);
  head_id_.collect(prefix + ".id", out);
  head_eye_.collect(prefix + ".eye", out);
  head_gaze_.collect(prefix + ".gaze", out);
  head_mouth_.collect(prefix + ".mouth", out);
}

Var EncoderPerceptual::embed(const Var& images) const {
  const Var h = encoder_->features(images).back();
  const int nb = images.dim(0);
  return ag::normalize_rows(ag::reshape(h, {nb, static_cast<int>(h.value().size()) / nb}));
}

std::vector<Var> EncoderPerceptual::layer_features(const Var& images) const {
  std::vector<Var> out{images};
  for (auto& f : encoder_->features(images)) out.push_back(f);
  return out;
}

LatentOracle::LatentOracle() {
  constexpr int d = AttributeProbe::kIdentityDim;
  static_assert(d == synth::kIdentityDim);
  const auto& q = synth::identity_projection();
  q_.resize(static_cast<std::size_t>(d * d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) q_[static_cast<std::size_t>(i * d + j)] = q(i, j);
}

std::vector<double> LatentOracle::embed(const std::vector<double>& code) const {
  constexpr int d = AttributeProbe::kIdentityDim;
  if (code.size() != static_cast<std::size_t>(d)) throw std::invalid_argument("latent oracle: wrong code size");
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  double n = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i)] += q_[static_cast<std::size_t>(i * d + j)] * code[static_cast<std::size_t>(j)];
    n += out[static_cast<std::size_t>(i)] * out[static_cast<std::size_t>(i)];
  }
  n = std::sqrt(n);
  if (n > 0)
    for (double& x : out) x /= n;
  return out;
}

Tensor LatentOracle::embed_batch(const std::vector<std::vector<double>>& codes) const {
  constexpr int d = AttributeProbe::kIdentityDim;
  Tensor t(Shape{static_cast<int>(codes.size()), d});
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const auto e = embed(codes[i]);
    std::copy(e.begin(), e.end(), t.data() + i * d);
  }
  return t;
}

void LossWeights::validate() const {
  for (double w : {identity, perceptual, motion, reconstruction, adversarial, mask}) {
    if (!(w >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
  }
}

Var identity_loss(const Var& e_s, const Var& e_c, const Var& e_o) {
  require_same(e_s, e_c, "identity_loss");
  require_same(e_s, e_o, "identity_loss");
  const Var s = ag::normalize_rows(e_s);
  const Var sim = ag::add(ag::dot_rows(s, ag::normalize_rows(e_c)), ag::dot_rows(s, ag::normalize_rows(e_o)));
  return ag::scale(ag::mean(sim), -1.0);
}

Var identity_loss(const Var& source, const SwapOutputs& out, const Embedder& embedder) {
  return identity_loss(embedder.embed(source), embedder.embed(out.swapped_canonical),
                       embedder.embed(out.swapped_original));
}

Var perceptual_distance(const std::vector<Var>& a, const std::vector<Var>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("perceptual_distance: layer lists differ");
  std::vector<Var> per_layer;
  for (std::size_t l = 0; l < a.size(); ++l) {
    require_same(a[l], b[l], "perceptual_distance");
    if (l == 0) {
      per_layer.push_back(ag::mean(ag::square(ag::sub(a[l], b[l]))));
    } else {
      const Var d = ag::sub(ag::normalize_channels(a[l]), ag::normalize_channels(b[l]));
      per_layer.push_back(ag::scale(ag::mean(ag::square(d)), static_cast<double>(a[l].dim(1))));
    }
  }
  Var total = per_layer[0];
  for (std::size_t l = 1; l < per_layer.size(); ++l) total = ag::add(total, per_layer[l]);
  return ag::scale(total, 1.0 / static_cast<double>(per_layer.size()));
}

Var perceptual_loss(const SwapOutputs& out, const Var& target, const Embedder& embedder) {
  const Var pc = perceptual_distance(embedder.layer_features(out.swapped_canonical),
                                     embedder.layer_features(out.target_canonical));
  const Var po = perceptual_distance(embedder.layer_features(out.swapped_original), embedder.layer_features(target));
  return ag::add(pc, po);
}

Var motion_loss(const Var& pose_c, const Var& expr_c, const Var& pose_o, const Var& expr_o, const Var& pose_t,
                const Var& expr_t) {
  require_same(pose_o, pose_t, "motion_loss");
  require_same(expr_o, expr_t, "motion_loss");
  return ag::add(ag::add(sum_abs_batch_mean(pose_c), sum_abs_batch_mean(expr_c)),
                 ag::add(sum_abs_batch_mean(ag::sub(pose_o, pose_t)), sum_abs_batch_mean(ag::sub(expr_o, expr_t))));
}

Var reconstruction_loss(const Var& swapped_c, const Var& target_c, const Var& swapped_o, const Var& target_o,
                        const std::vector<bool>& same_identity) {
  require_same(swapped_c, target_c, "reconstruction_loss");
  require_same(swapped_o, target_o, "reconstruction_loss");
  const int nb = swapped_c.dim(0);
  if (same_identity.size() != static_cast<std::size_t>(nb)) {
    throw std::invalid_argument("reconstruction_loss: one same-identity flag per sample required");
  }
  std::vector<double> w(static_cast<std::size_t>(nb));
  bool any = false;
  for (int i = 0; i < nb; ++i) {
    w[static_cast<std::size_t>(i)] = same_identity[static_cast<std::size_t>(i)] ? 1.0 / nb : 0.0;
    any = any || same_identity[static_cast<std::size_t>(i)];
  }
  if (!any) return ag::constant(Tensor::scalar(0.0));
  const Var per = ag::add(ag::mean_per_sample(ag::abs(ag::sub(swapped_c, target_c))),
                          ag::mean_per_sample(ag::abs(ag::sub(swapped_o, target_o))));
  return ag::weighted_sum(per, w);
}

Discriminator::Discriminator(Rng& rng) {
  c1_ = nn::Conv2d(3, 16, 3, 2, rng);
  c2_ = nn::Conv2d(16, 32, 3, 2, rng);
  c3_ = nn::Conv2d(32, 1, 3, 1, rng, true, 1.0);
}

Var Discriminator::operator()(const Var& images) const {
  Var h = ag::leaky_relu(c1_(images), nn::kLeakySlope);
  h = ag::leaky_relu(c2_(h), nn::kLeakySlope);
  return c3_(h);
}

void Discriminator::collect(const std::string& prefix, nn::NamedParams& out) const {
  c1_.collect(prefix + ".c1", out);
  c2_.collect(prefix + ".c2", out);
  c3_.collect(prefix + ".c3", out);
}

Var hinge_discriminator(const Var& d_real, const Var& d_fake_c, const Var& d_fake_o) {
  // The real term is counted once per space.
  const Var real = ag::mean(relu(ag::add_scalar(ag::scale(d_real, -1.0), 1.0)));
  const Var fake_c = ag::mean(relu(ag::add_scalar(d_fake_c, 1.0)));
  const Var fake_o = ag::mean(relu(ag::add_scalar(d_fake_o, 1.0)));
  return ag::add(ag::scale(real, 2.0), ag::add(fake_c, fake_o));
}

Var hinge_generator(const Var& d_fake_c, const Var& d_fake_o) {
  return ag::scale(ag::add(ag::mean(d_fake_c), ag::mean(d_fake_o)), -1.0);
}

R1Result r1_penalty(const Critic& critic, const nn::NamedParams& params, const Tensor& real, double gamma,
                    bool accumulate_param_grads) {
  if (real.rank() < 1 || real.dim(0) < 1) throw std::invalid_argument("r1_penalty: empty batch");
  const int nb = real.dim(0);
  R1Result res;
  nn::set_trainable(params, false);
  {
    Var x(real, true);
    const Var d = critic(x);
    if (d.value().rank() != 1 || d.dim(0) != nb) {
      nn::set_trainable(params, true);
      throw std::invalid_argument("r1_penalty: critic must return [N]");
    }
    ag::backward(ag::sum(d));
    res.input_gradient = x.grad();
  }
  nn::set_trainable(params, true);
  const Tensor& g = res.input_gradient;
  double sq = 0, gmax = 0;
  for (double v : g.values()) {
    sq += v * v;
    gmax = std::max(gmax, std::abs(v));
  }
  res.penalty = 0.5 * gamma * sq / nb;
  if (!accumulate_param_grads || gmax == 0.0) return res;

  // d/dtheta of gamma/(2N) |g|^2 is (gamma/N) H_{theta x} g, taken as a
  // central difference of grad_theta sum D along g.
  const double h = 1e-4 / gmax;
  const double c = gamma / (nb * 2.0 * h);
  Tensor xp = real, xm = real;
  for (std::size_t i = 0; i < xp.size(); ++i) {
    xp[i] += h * g[i];
    xm[i] -= h * g[i];
  }
  ag::backward(ag::sum(critic(ag::constant(xp))), Tensor::scalar(c));
  ag::backward(ag::sum(critic(ag::constant(xm))), Tensor::scalar(-c));
  return res;
}

Var total_variation(const Var& a) {
  const auto& s = a.shape();
  if (s.size() != 4 || s[1] != 1) throw std::invalid_argument("total_variation expects [N, 1, H, W]");
  const int nb = s[0], h = s[2], w = s[3];
  const double norm = 1.0 / (static_cast<double>(nb) * h * w);
  const Tensor& v = a.value();
  double tv = 0;
  for (int n = 0; n < nb; ++n)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double c = v.at({n, 0, i, j});
        if (j + 1 < w) tv += std::abs(v.at({n, 0, i, j + 1}) - c);
        if (i + 1 < h) tv += std::abs(v.at({n, 0, i + 1, j}) - c);
      }
  // Each unordered neighbour pair appears twice among ordered pairs.
  Tensor out = Tensor::scalar(2.0 * tv * norm);
  return ag::make_op(std::move(out), {a}, [=](ag::Node& node) {
    const Tensor& v = node.input_value(0);
    const double g = node.grad.item() * 2.0 * norm;
    Tensor& ga = node.input_grad(0);
    auto sgn = [](double x) { return static_cast<double>((x > 0) - (x < 0)); };
    for (int n = 0; n < nb; ++n)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const double c = v.at({n, 0, i, j});
          if (j + 1 < w) {
            const double sd = sgn(v.at({n, 0, i, j + 1}) - c) * g;
            ga.at({n, 0, i, j + 1}) += sd;
            ga.at({n, 0, i, j}) -= sd;
          }
          if (i + 1 < h) {
            const double sd = sgn(v.at({n, 0, i + 1, j}) - c) * g;
            ga.at({n, 0, i + 1, j}) += sd;
            ga.at({n, 0, i, j}) -= sd;
          }
        }
  });
}

Var mask_loss(const std::vector<Var>& masks, const std::vector<Tensor>& gt) {
  if (masks.empty() || masks.size() != gt.size()) throw std::invalid_argument("mask_loss: one target per block");
  Var total;
  for (std::size_t b = 0; b < masks.size(); ++b) {
    if (masks[b].shape() != gt[b].shape()) {
      throw std::invalid_argument("mask_loss: mask " + shape_str(masks[b].shape()) + " vs target " +
                                  shape_str(gt[b].shape()));
    }
    const Var term =
        ag::add(total_variation(masks[b]), ag::mean(ag::abs(ag::sub(masks[b], ag::constant(gt[b])))));
    total = b == 0 ? term : ag::add(total, term);
  }
  return ag::scale(total, 1.0 / static_cast<double>(masks.size()));
}

Var total_loss(const LossTerms& t, const LossWeights& w) {
  w.validate();
  Var total = ag::scale(t.identity, w.identity);
  total = ag::add(total, ag::scale(t.perceptual, w.perceptual));
  total = ag::add(total, ag::scale(t.motion, w.motion));
  total = ag::add(total, ag::scale(t.reconstruction, w.reconstruction));
  total = ag::add(total, ag::scale(t.adversarial, w.adversarial));
  total = ag::add(total, ag::scale(t.mask, w.mask));
  return total;
}

bool sample_same_identity(Rng& rng, double probability) {
  if (!(probability >= 0.0 && probability <= 1.0)) throw std::invalid_argument("probability outside [0, 1]");
  std::bernoulli_distribution d(probability);
  return d(rng);
}

}  // namespace canonface::losses
