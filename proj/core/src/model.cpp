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

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "canonface/pipeline.h"

namespace canonface::pipeline {

Backbone::Backbone(const PipelineConfig& cfg, Rng& rng)
    : encoder(cfg.volume(), rng),
      decoder(cfg.volume(), rng),
      extractor(cfg.image_size, cfg.keypoints, rng),
      probe(cfg.image_size, rng) {}

nn::NamedParams Backbone::params() const {
  nn::NamedParams p;
  encoder.collect("encoder", p);
  decoder.collect("decoder", p);
  extractor.collect("extractor", p);
  probe.collect("probe", p);
  return p;
}

SwapModel::SwapModel(const PipelineConfig& cfg, Rng& rng)
    : pim(cfg.channels, cfg.depth, cfg.pim_blocks, cfg.pim_kernel, losses::AttributeProbe::kIdentityDim, rng),
      refiner(cfg.channels, rng),
      discriminator(rng) {}

nn::NamedParams SwapModel::generator_params() const {
  nn::NamedParams p;
  pim.collect("pim", p);
  refiner.collect("refine", p);
  return p;
}

nn::NamedParams SwapModel::discriminator_params() const {
  nn::NamedParams p;
  discriminator.collect("disc", p);
  return p;
}

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw std::invalid_argument("stack_images: empty list");
  Shape s = images[0].shape();
  const std::size_t per = images[0].size();
  s.insert(s.begin(), static_cast<int>(images.size()));
  Tensor out(s);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != images[0].shape()) throw std::invalid_argument("stack_images: shapes differ");
    std::copy(images[i].data(), images[i].data() + per, out.data() + i * per);
  }
  return out;
}

Tensor image_at(const Tensor& batch, int i) {
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t per = shape_numel(s);
  Tensor out(s);
  std::copy(batch.data() + static_cast<std::size_t>(i) * per, batch.data() + static_cast<std::size_t>(i + 1) * per,
            out.data());
  return out;
}

ForwardResult swap_forward(const Backbone& bb, const SwapModel& model, const PipelineConfig& cfg,
                           const Tensor& sources, const Tensor& targets, const ForwardOptions& opt) {
  const Shape want{targets.rank() > 0 ? targets.dim(0) : 0, 3, cfg.image_size, cfg.image_size};
  if (targets.shape() != want || sources.shape() != want) {
    throw std::invalid_argument("swap: expected source and target batches of shape " + shape_str(want) + ", got " +
                                shape_str(sources.shape()) + " and " + shape_str(targets.shape()));
  }
  const Ablation& ab = opt.ablation;
  const motion::VolumeShape vs = cfg.volume().shape();
  const Var tgt = ag::constant(targets);

  // Frozen backbone quantities are plain values.
  const Var e_s = ag::constant(bb.probe.embed(ag::constant(sources)).value());
  const Var vt = ag::constant(bb.encoder(tgt).value());
  const motion::MotionEstimate mt = bb.extractor(tgt);
  const Tensor x = mt.keypoints().value();
  const Tensor xc = mt.canonical.value();

  ForwardResult r;
  r.target_pose = motion::axis_angle(mt.rotation).value();
  r.target_expression = mt.expression.value();

  Var vc = vt;
  if (!ab.no_warp) {
    const Tensor field = motion::deformation(ag::constant(x), ag::constant(xc), vs, cfg.sigma).value();
    vc = ag::constant(warp::grid_sample3d(vt, ag::constant(field)).value());
  }
  r.canonical_volume = vc;

  pim::BlockOptions bo;
  bo.mask = ab.no_mask ? pim::MaskMode::kOne : pim::MaskMode::kPredicted;
  const pim::StackOutput st = model.pim(vc, e_s, bo);
  Var v = ab.no_refine ? st.volume : model.refiner(st.volume);
  r.swapped_volume = v;

  Var vo = v;
  if (!ab.no_warp) {
    const Tensor drive = opt.driving_keypoints ? *opt.driving_keypoints : x;
    if (drive.shape() != x.shape()) throw std::invalid_argument("swap: driving keypoints must be [N, n, 3]");
    const Tensor field = motion::deformation(ag::constant(xc), ag::constant(drive), vs, cfg.sigma).value();
    vo = warp::grid_sample3d(v, ag::constant(field));
  }

  auto& out = r.outputs;
  out.swapped_original = bb.decoder(vo);
  if (ab.no_warp) {
    out.swapped_canonical = out.swapped_original;
    out.target_canonical = ag::constant(bb.decoder(vt).value());
  } else {
    out.swapped_canonical = bb.decoder(v);
    out.target_canonical = ag::constant(bb.decoder(vc).value());
  }
  out.masks = st.masks;

  if (opt.readbacks) {
    const int nb = targets.dim(0), n = cfg.keypoints;
    const motion::MotionEstimate mo = bb.extractor(out.swapped_original);
    out.pose_original = motion::axis_angle(mo.rotation);
    out.expr_original = mo.expression;
    if (ab.no_warp) {
      // No canonical space: the canonical terms are dropped.
      out.pose_canonical = ag::constant(Tensor(Shape{nb, 3}));
      out.expr_canonical = ag::constant(Tensor(Shape{nb, n, 3}));
    } else {
      const motion::MotionEstimate mc = bb.extractor(out.swapped_canonical);
      out.pose_canonical = motion::axis_angle(mc.rotation);
      out.expr_canonical = mc.expression;
    }
  }
  return r;
}

Tensor swap_frame(const Backbone& bb, const SwapModel& model, const PipelineConfig& cfg, const Tensor& source,
                  const Tensor& target, const Ablation& ablation) {
  ForwardOptions opt;
  opt.ablation = ablation;
  opt.readbacks = false;
  const ForwardResult r = swap_forward(bb, model, cfg, stack_images({source}), stack_images({target}), opt);
  return image_at(r.outputs.swapped_original.value(), 0);
}

synth::Clip swap_clip(const Backbone& bb, const SwapModel& model, const PipelineConfig& cfg, const Tensor& source,
                      const synth::Clip& target, const Ablation& ablation) {
  target.validate();
  synth::Clip out = target;
  for (std::size_t f = 0; f < target.size(); ++f) out.frames[f] = swap_frame(bb, model, cfg, source, target.frames[f], ablation);
  return out;
}

synth::Clip animate_clip(const Backbone& bb, const SwapModel& model, const PipelineConfig& cfg,
                         const synth::Clip& source, const Tensor& target, bool shape_transfer) {
  source.validate();
  const Var tgt = ag::constant(stack_images({target}));
  const motion::MotionEstimate mt = bb.extractor(tgt);
  const KeypointSet xc_t = mt.canonical_at(0);
  const MotionParams m_t = mt.motion_at(0);
  synth::Clip out = source;
  for (std::size_t f = 0; f < source.size(); ++f) {
    const motion::MotionEstimate ms = bb.extractor(ag::constant(stack_images({source.frames[f]})));
    const KeypointSet canonical = shape_transfer ? ms.canonical_at(0) : xc_t;
    const KeypointSet drive = motion::animation_retarget(canonical, m_t, ms.motion_at(0).expression);
    Tensor dk(Shape{1, cfg.keypoints, 3});
    for (int k = 0; k < cfg.keypoints; ++k)
      for (int c = 0; c < 3; ++c) dk.at({0, k, c}) = drive.points(k, c);
    ForwardOptions opt;
    opt.readbacks = false;
    opt.driving_keypoints = dk;
    const ForwardResult r = swap_forward(bb, model, cfg, stack_images({target}), stack_images({target}), opt);
    out.frames[f] = image_at(r.outputs.swapped_original.value(), 0);
  }
  return out;
}

}  // namespace canonface::pipeline
