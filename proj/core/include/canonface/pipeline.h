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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "canonface/losses.h"
#include "canonface/metrics.h"
#include "canonface/motion.h"
#include "canonface/nn.h"
#include "canonface/pim.h"
#include "canonface/refine.h"
#include "canonface/synthworld.h"
#include "canonface/warp.h"

// End-to-end assembly: encode, extract motion, warp into canonical space,
// modulate identity, refine, warp back, decode. Also the training loop,
// evaluation, canonical-space visualization and checkpoints.
namespace canonface::pipeline {

using ag::Var;

struct Ablation {
  bool no_warp = false;
  bool no_mask = false;  ///< mask forced to 1: global modulation
  bool no_refine = false;

  std::string name() const;
  static Ablation parse(const std::string& name);
  bool operator==(const Ablation&) const = default;
};

struct BackboneSchedule {
  int motion_steps = 1500;
  int probe_steps = 1500;
  int autoencoder_steps = 4000;
  int batch = 8;
  double lr = 2e-3;
};

struct PipelineConfig {
  int image_size = 32;
  int channels = 8;
  int depth = 4;
  int keypoints = synth::kDefaultKeypoints;
  int pim_blocks = 4;
  int pim_kernel = 3;
  double sigma = motion::kDefaultSigma;
  losses::LossWeights weights;
  nn::AdamWConfig optimizer;
  int batch = 6;
  int steps = 5000;
  double same_identity_probability = 0.3;
  double r1_gamma = 10.0;
  Ablation ablation;
  std::uint64_t seed = 1;

  std::uint64_t backbone_seed = 17;
  BackboneSchedule backbone;
  int train_identities = 200;  ///< per pool; source and target pools are disjoint

  warp::VolumeConfig volume() const { return {image_size, channels, depth}; }
  void validate() const;

  /// TOML-style "key = value" lines; [section] headers prefix keys with "section.".
  std::string to_text() const;
  static PipelineConfig parse(const std::string& text);
  static PipelineConfig load(const std::filesystem::path& path);
};

/// Pretrained, frozen networks: appearance autoencoder, motion extractor and
/// the attribute probe used as identity embedder.
struct Backbone {
  warp::AppearanceEncoder encoder;
  warp::AppearanceDecoder decoder;
  motion::MotionExtractor extractor;
  losses::AttributeProbe probe;

  Backbone() = default;
  Backbone(const PipelineConfig& cfg, Rng& rng);
  nn::NamedParams params() const;
};

/// Trainable swap networks and the discriminator.
struct SwapModel {
  pim::PimStack pim;
  refine::Refiner refiner;
  losses::Discriminator discriminator;

  SwapModel() = default;
  SwapModel(const PipelineConfig& cfg, Rng& rng);
  nn::NamedParams generator_params() const;
  nn::NamedParams discriminator_params() const;
};

struct BackboneLog {
  std::vector<double> motion_loss, probe_loss, autoencoder_loss;
};

/// Supervised motion extractor and probe on synthworld ground truth, then
/// the autoencoder on reconstruction and keypoint-driven reenactment.
Backbone pretrain_backbone(const PipelineConfig& cfg, BackboneLog* log = nullptr);

/// Everything computed in one swap forward pass.
struct ForwardResult {
  losses::SwapOutputs outputs;
  Tensor target_pose;        ///< [N, 3] axis-angle of the target estimate
  Tensor target_expression;  ///< [N, n, 3]
  Var canonical_volume;      ///< target volume in canonical space
  Var swapped_volume;        ///< after PIM and refinement, canonical space
};

struct ForwardOptions {
  Ablation ablation;
  /// Replaces the warp-back keypoints, [N, n, 3]; used for animation.
  std::optional<Tensor> driving_keypoints;
  /// Skip the motion readbacks (not needed at inference).
  bool readbacks = true;
};

/// sources, targets: [N, 3, S, S] in [0, 1].
ForwardResult swap_forward(const Backbone& bb, const SwapModel& model, const PipelineConfig& cfg,
                           const Tensor& sources, const Tensor& targets, const ForwardOptions& opt = {});

/// Batch helpers.
Tensor stack_images(const std::vector<Tensor>& images);
Tensor image_at(const Tensor& batch, int i);

Tensor swap_frame(const Backbone& bb, const SwapModel& model, const PipelineConfig& cfg, const Tensor& source,
                  const Tensor& target, const Ablation& ablation = {});
/// Frame-by-frame; audio latents and per-frame latents pass through.
synth::Clip swap_clip(const Backbone& bb, const SwapModel& model, const PipelineConfig& cfg, const Tensor& source,
                      const synth::Clip& target, const Ablation& ablation = {});
/// Drives the identity in `target` with the source clip's expressions at
/// the target's pose. With shape_transfer the source frames' canonical
/// keypoints replace the target's.
synth::Clip animate_clip(const Backbone& bb, const SwapModel& model, const PipelineConfig& cfg,
                         const synth::Clip& source, const Tensor& target, bool shape_transfer = false);

/// One training example.
struct Sample {
  Tensor source, target;  ///< [3, S, S]
  Tensor target_face_mask;  ///< [S, S], original space
  Tensor canonical_face_mask;  ///< [S, S], target rendered at canonical latents
  bool same_identity = false;
};

/// Disjoint source and target identity pools, same-identity branch with the
/// configured probability.
class PairSampler {
 public:
  PairSampler(const PipelineConfig& cfg, std::uint64_t seed, std::uint64_t pool_seed);

  struct Draw {
    std::size_t target = 0;
    std::size_t source = 0;  ///< index into the target pool when same_identity
    bool same_identity = false;
  };
  /// The identity part of next(), without rendering.
  Draw draw();
  Sample next();
  std::vector<Sample> batch(int n);
  Rng& rng() { return rng_; }

 private:
  PipelineConfig cfg_;
  synth::IdentityPool sources_, targets_;
  Rng rng_;
};

/// Generator side of one training step: the swap forward pass and every
/// weighted loss term. The discriminator enters only through the
/// adversarial term.
struct GeneratorObjective {
  ForwardResult forward;
  losses::LossTerms terms;
  Var total;
};
GeneratorObjective generator_objective(const Backbone& bb, const SwapModel& model, const PipelineConfig& cfg,
                                       const std::vector<Sample>& batch, const losses::Embedder& perceptual);

struct LossRecord {
  int step = 0;
  double identity = 0, perceptual = 0, motion = 0, reconstruction = 0, adversarial = 0, mask = 0, total = 0;
  double discriminator = 0, r1 = 0;
};
std::string format_loss_record(const LossRecord& r);
std::string loss_log_header();

struct TrainState {
  SwapModel model;
  std::vector<LossRecord> log;
  int step = 0;
  std::vector<Tensor> g_m, g_v, d_m, d_v;
  std::int64_t g_t = 0, d_t = 0;
};

struct TrainHooks {
  /// Called after every step with the new record.
  std::function<void(const LossRecord&)> on_step;
};

/// Swap training with a frozen backbone. Alternates one generator and one
/// discriminator update per step. Throws std::runtime_error on a non-finite
/// loss, after writing a diagnostic snapshot to `snapshot_dir` if set.
TrainState train(const PipelineConfig& cfg, const Backbone& backbone, const TrainHooks& hooks = {},
                 const std::filesystem::path& snapshot_dir = {});

/// Moving average with a trailing window.
std::vector<double> moving_average(const std::vector<double>& v, int window);

// ---- checkpoints ---------------------------------------------------------

struct Checkpoint {
  PipelineConfig config;
  Backbone backbone;
  TrainState state;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
void save_backbone(const Backbone& bb, const PipelineConfig& cfg, const std::filesystem::path& path);
Backbone load_backbone(const PipelineConfig& cfg, const std::filesystem::path& path);
/// Named parameter values, for comparisons.
std::vector<std::pair<std::string, Tensor>> snapshot(const nn::NamedParams& params);

// ---- evaluation ----------------------------------------------------------

struct BenchmarkPair {
  Tensor source;  ///< [3, S, S]
  std::vector<double> source_identity;
  synth::Clip target;
};

/// Held-out pairs from identity pools disjoint from training.
std::vector<BenchmarkPair> make_benchmark(const PipelineConfig& cfg, int pairs, int frames, std::uint64_t seed,
                                          bool same_identity = false);
void save_benchmark(const std::vector<BenchmarkPair>& bench, const std::filesystem::path& dir);
std::vector<BenchmarkPair> load_benchmark(const std::filesystem::path& dir);

struct EvalReport {
  std::string ablation;
  std::vector<metrics::MetricRecord> records;

  double value(const std::string& name) const;
  std::string to_json() const;
};

EvalReport evaluate(const Backbone& bb, const SwapModel& model, const PipelineConfig& cfg,
                    const std::vector<BenchmarkPair>& bench, const Ablation& ablation);

// ---- canonical-space visualization ---------------------------------------

/// One mask type averaged over every frame.
struct MaskAverage {
  std::string name;        ///< "face", "eye" or "mouth"
  Tensor canonical_mean;   ///< [R, R]
  Tensor aligned_mean;     ///< [R, R]
  double canonical_score = 0;  ///< mean p (1 - p) of the averaged mask
  double aligned_score = 0;
};

struct CanonicalViz {
  std::vector<MaskAverage> parts;
  /// Sums over parts.
  double canonical_score = 0;
  double aligned_score = 0;

  const MaskAverage& part(const std::string& name) const;
};

/// Masks are rendered at kVizScale times the image size. The canonical
/// side warps them with the image-plane projection of the estimated
/// original-to-canonical keypoint field; the aligned side applies a 2-D
/// similarity fit of the projected keypoints to their mean.
inline constexpr int kVizScale = 4;
CanonicalViz visualize_canonical(const Backbone& bb, const PipelineConfig& cfg, const std::vector<synth::Clip>& clips);
/// Mean over pixels of p (1 - p) for the pixelwise mean p of the masks.
double mask_sharpness(const std::vector<Tensor>& masks);

}  // namespace canonface::pipeline
