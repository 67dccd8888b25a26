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

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "canonface/autograd.h"
#include "canonface/nn.h"
#include "canonface/warp.h"

// Training objective: identity, perceptual, motion, reconstruction,
// adversarial and mask terms, plus the embedders they are measured with.
namespace canonface::losses {

using ag::Var;

/// Maps images to unit-norm identity vectors and to per-layer features.
class Embedder {
 public:
  virtual ~Embedder() = default;
  /// images: [N, 3, S, S] -> [N, d], unit rows.
  virtual Var embed(const Var& images) const = 0;
  /// First entry is the image itself.
  virtual std::vector<Var> layer_features(const Var& images) const = 0;
  virtual std::string name() const = 0;
};

struct ProbeOutput {
  Var identity;       ///< [N, 16], unit rows
  Var eye_landmarks;  ///< [N, 24]: two eyes x six points x (x, y)
  Var gaze;           ///< [N, 3], unit rows
  Var mouth_open;     ///< [N]
  Var features;       ///< [N, 128] penultimate activations
};

/// Small regressor trained on rendered faces to read identity, eye
/// landmarks, gaze and mouth opening from an image. It is the image-side
/// identity embedder and the default attribute estimator for metrics.
class AttributeProbe : public Embedder {
 public:
  AttributeProbe() = default;
  AttributeProbe(int image_size, Rng& rng);

  ProbeOutput operator()(const Var& images) const;
  Var embed(const Var& images) const override { return (*this)(images).identity; }
  std::vector<Var> layer_features(const Var& images) const override;
  std::string name() const override { return "synthworld-probe"; }
  void collect(const std::string& prefix, nn::NamedParams& out) const;

  static constexpr int kIdentityDim = 16;

 private:
  int image_size_ = 0;
  nn::Conv2d c1_, c2_, c3_, c4_;
  nn::Linear fc_, head_id_, head_eye_, head_gaze_, head_mouth_;
};

/// Perceptual features from the frozen appearance encoder.
class EncoderPerceptual : public Embedder {
 public:
  explicit EncoderPerceptual(const warp::AppearanceEncoder* encoder) : encoder_(encoder) {}
  Var embed(const Var& images) const override;
  std::vector<Var> layer_features(const Var& images) const override;
  std::string name() const override { return "appearance-encoder"; }

 private:
  const warp::AppearanceEncoder* encoder_;
};

/// Ground-truth identity latent through a fixed random orthogonal map.
/// Works on latents rather than pixels, so it is an oracle for tests and
/// gallery retrieval.
class LatentOracle {
 public:
  LatentOracle();
  std::vector<double> embed(const std::vector<double>& identity_code) const;
  /// [N, 16] tensor of the embeddings of each code.
  Tensor embed_batch(const std::vector<std::vector<double>>& codes) const;
  std::string name() const { return "latent-oracle"; }

 private:
  std::vector<double> q_;  // 16 x 16 row-major
};

struct LossWeights {
  double identity = 10.0;
  double perceptual = 5.0;
  double motion = 5.0;
  double reconstruction = 10.0;
  double adversarial = 1.0;
  double mask = 1.0;

  void validate() const;
};

/// Images and readbacks of one swap batch.
struct SwapOutputs {
  Var swapped_canonical;  ///< I^c_{s->t}, [N, 3, S, S]
  Var swapped_original;   ///< I^o_{s->t}
  Var target_canonical;   ///< I^c_t
  std::vector<Var> masks; ///< per PIM block, [N, 1, h, w]
  Var pose_canonical;     ///< axis-angle readback of swapped canonical, [N, 3]
  Var expr_canonical;     ///< [N, n, 3]
  Var pose_original;      ///< [N, 3]
  Var expr_original;      ///< [N, n, 3]
};

/// -[cos(e_s, e_c) + cos(e_s, e_o)], batch mean.
Var identity_loss(const Var& e_source, const Var& e_canonical, const Var& e_original);
Var identity_loss(const Var& source, const SwapOutputs& out, const Embedder& embedder);

/// Mean over layers of per-layer distances; layer 0 (the image) uses mean
/// squared error, deeper layers compare channel-normalized features.
Var perceptual_distance(const std::vector<Var>& a, const std::vector<Var>& b);
/// Sum over the canonical and original spaces.
Var perceptual_loss(const SwapOutputs& out, const Var& target, const Embedder& embedder);

/// |P^c|_1 + |E^c|_1 + |P^o - P_t|_1 + |E^o - E_t|_1, batch mean.
Var motion_loss(const Var& pose_c, const Var& expr_c, const Var& pose_o, const Var& expr_o, const Var& pose_t,
                const Var& expr_t);

/// Mean-L1 in both spaces for samples flagged same-identity, 0 for the
/// rest; averaged over the batch.
Var reconstruction_loss(const Var& swapped_c, const Var& target_c, const Var& swapped_o, const Var& target_o,
                        const std::vector<bool>& same_identity);

/// Patch discriminator: [N, 3, S, S] -> [N, 1, S/4, S/4] logits.
class Discriminator {
 public:
  Discriminator() = default;
  explicit Discriminator(Rng& rng);
  Var operator()(const Var& images) const;
  /// Per-sample mean logit, [N].
  Var score(const Var& images) const { return ag::mean_per_sample((*this)(images)); }
  void collect(const std::string& prefix, nn::NamedParams& out) const;

 private:
  nn::Conv2d c1_, c2_, c3_;
};

struct AdversarialTerms {
  Var generator;      ///< -mean D(fake) summed over both spaces
  Var discriminator;  ///< hinge, summed over both spaces (no penalty)
};

/// d_fake_* and d_real are patch logit maps.
Var hinge_discriminator(const Var& d_real, const Var& d_fake_c, const Var& d_fake_o);
Var hinge_generator(const Var& d_fake_c, const Var& d_fake_o);

/// Per-sample critic D: images [N, ...] -> [N].
using Critic = std::function<Var(const Var&)>;

struct R1Result {
  double penalty = 0.0;
  Tensor input_gradient;  ///< dD/dx per sample
};

/// gamma/2 * mean_n |grad_x D(x_n)|^2. `params` are the critic's trainable
/// parameters; their .grad buffers are left as they were unless
/// accumulate_param_grads is set, in which case the penalty's parameter
/// gradient is added using a central-difference Hessian-vector product.
R1Result r1_penalty(const Critic& critic, const nn::NamedParams& params, const Tensor& real, double gamma,
                    bool accumulate_param_grads = false);

/// Sum over ordered 4-neighbour pairs of |A_p - A_q|, divided by the pixel
/// count. a: [N, 1, H, W].
Var total_variation(const Var& a);
/// Mean over blocks of TV(A_b) + mean |A_b - gt_b|.
Var mask_loss(const std::vector<Var>& masks, const std::vector<Tensor>& gt);

struct LossTerms {
  Var identity, perceptual, motion, reconstruction, adversarial, mask;
};
Var total_loss(const LossTerms& terms, const LossWeights& w);

/// Bernoulli draw for the same-identity pairing.
bool sample_same_identity(Rng& rng, double probability);

}  // namespace canonface::losses
