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

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "canonface/pipeline.h"

namespace canonface::pipeline {

namespace {

using losses::LatentOracle;

Tensor keypoint_tensor(const std::vector<const KeypointMatrix*>& rows, int n) {
  Tensor t(Shape{static_cast<int>(rows.size()), n, 3});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int k = 0; k < n; ++k)
      for (int c = 0; c < 3; ++c) t.at({static_cast<int>(i), k, c}) = (*rows[i])(k, c);
  return t;
}

// Average-pools an [S, S] mask down to [1, 1, S/f, S/f] rows of a batch.
Tensor pooled_masks(const std::vector<const Tensor*>& masks, int factor) {
  const int s = masks[0]->dim(0), o = s / factor;
  Tensor out(Shape{static_cast<int>(masks.size()), 1, o, o});
  for (std::size_t i = 0; i < masks.size(); ++i)
    for (int y = 0; y < o; ++y)
      for (int x = 0; x < o; ++x) {
        double acc = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) acc += masks[i]->at({y * factor + dy, x * factor + dx});
        out.at({static_cast<int>(i), 0, y, x}) = acc / (factor * factor);
      }
  return out;
}

double lr_at(double base, int step, int total) { return step < (total * 4) / 5 ? base : 0.1 * base; }

struct Rendered {
  synth::SceneLatents latents;
  synth::Render render;
};

Rendered render_random(Rng& rng, int size, int n) {
  Rendered r;
  r.latents = synth::random_latents(rng, synth::random_identity(rng));
  r.render = synth::render_face(r.latents, size, n);
  return r;
}

}  // namespace

Backbone pretrain_backbone(const PipelineConfig& cfg, BackboneLog* log) {
  cfg.validate();
  Rng init(cfg.backbone_seed);
  Backbone bb(cfg, init);
  Rng data(cfg.backbone_seed ^ 0xBACCB0u);
  const int s = cfg.image_size, n = cfg.keypoints, nb = cfg.backbone.batch;
  const BackboneSchedule& sch = cfg.backbone;
  nn::AdamWConfig oc;
  oc.lr = sch.lr;
  oc.beta1 = 0.9;
  oc.weight_decay = 0.0;

  {
    nn::NamedParams p;
    bb.extractor.collect("extractor", p);
    nn::AdamW opt(p, oc);
    for (int step = 0; step < sch.motion_steps; ++step) {
      std::vector<Tensor> imgs;
      std::vector<Rendered> rs;
      for (int i = 0; i < nb; ++i) {
        rs.push_back(render_random(data, s, n));
        imgs.push_back(rs.back().render.image);
      }
      std::vector<const KeypointMatrix*> xc, ex;
      Tensor rot(Shape{nb, 3, 3}), tr(Shape{nb, 3});
      for (int i = 0; i < nb; ++i) {
        const auto& gt = rs[static_cast<std::size_t>(i)].render.truth;
        xc.push_back(&gt.canonical_keypoints.points);
        ex.push_back(&gt.motion.expression);
        for (int a = 0; a < 3; ++a) {
          tr.at({i, a}) = gt.motion.translation(a);
          for (int b = 0; b < 3; ++b) rot.at({i, a, b}) = gt.motion.rotation(a, b);
        }
      }
      const motion::MotionEstimate est = bb.extractor(ag::constant(stack_images(imgs)));
      auto l1 = [](const Var& a, const Tensor& b) { return ag::mean(ag::abs(ag::sub(a, ag::constant(b)))); };
      Var loss = ag::add(l1(est.canonical, keypoint_tensor(xc, n)), l1(est.rotation, rot));
      loss = ag::add(loss, ag::scale(l1(est.expression, keypoint_tensor(ex, n)), 5.0));
      loss = ag::add(loss, ag::scale(l1(est.translation, tr), 2.0));
      opt.zero_grad();
      ag::backward(loss);
      opt.set_lr(lr_at(sch.lr, step, sch.motion_steps));
      opt.step();
      if (log) log->motion_loss.push_back(loss.item());
    }
    nn::zero_grad(p);
  }

  {
    nn::NamedParams p;
    bb.probe.collect("probe", p);
    nn::AdamW opt(p, oc);
    const LatentOracle oracle;
    for (int step = 0; step < sch.probe_steps; ++step) {
      std::vector<Tensor> imgs;
      std::vector<std::vector<double>> ids;
      Tensor eyes(Shape{nb, 24}), gaze(Shape{nb, 3}), mouth(Shape{nb});
      for (int i = 0; i < nb; ++i) {
        const Rendered r = render_random(data, s, n);
        imgs.push_back(r.render.image);
        ids.push_back(r.latents.identity_code);
        const auto& gt = r.render.truth;
        for (int e = 0; e < 2; ++e)
          for (int k = 0; k < 6; ++k)
            for (int c = 0; c < 2; ++c)
              eyes.at({i, e * 12 + k * 2 + c}) = gt.eye_landmarks[static_cast<std::size_t>(e)].points[static_cast<std::size_t>(k)](c);
        for (int c = 0; c < 3; ++c) gaze.at({i, c}) = gt.gaze(c);
        mouth[static_cast<std::size_t>(i)] = r.latents.expression.mouth_open;
      }
      const losses::ProbeOutput out = bb.probe(ag::constant(stack_images(imgs)));
      const Var id_term = ag::add_scalar(ag::scale(ag::mean(ag::dot_rows(out.identity, ag::constant(oracle.embed_batch(ids)))), -1.0), 1.0);
      const Var gaze_term = ag::add_scalar(ag::scale(ag::mean(ag::dot_rows(out.gaze, ag::constant(gaze))), -1.0), 1.0);
      Var loss = ag::add(id_term, gaze_term);
      loss = ag::add(loss, ag::scale(ag::mean(ag::abs(ag::sub(out.eye_landmarks, ag::constant(eyes)))), 5.0));
      loss = ag::add(loss, ag::mean(ag::abs(ag::sub(out.mouth_open, ag::constant(mouth)))));
      opt.zero_grad();
      ag::backward(loss);
      opt.set_lr(lr_at(sch.lr, step, sch.probe_steps));
      opt.step();
      if (log) log->probe_loss.push_back(loss.item());
    }
    nn::zero_grad(p);
  }

  {
    nn::NamedParams p, frozen;
    bb.encoder.collect("encoder", p);
    bb.decoder.collect("decoder", p);
    bb.extractor.collect("extractor", frozen);
    nn::set_trainable(frozen, false);
    nn::AdamW opt(p, oc);
    const motion::VolumeShape vs = cfg.volume().shape();
    for (int step = 0; step < sch.autoencoder_steps; ++step) {
      // Two frames of one identity and background, plus the canonical render.
      std::vector<Tensor> src, drv, can;
      for (int i = 0; i < nb; ++i) {
        const auto id = synth::random_identity(data);
        synth::SceneLatents a = synth::random_latents(data, id);
        synth::SceneLatents b = synth::random_latents(data, id);
        b.seed = a.seed;
        src.push_back(synth::render_face(a, s, n).image);
        drv.push_back(synth::render_face(b, s, n).image);
        can.push_back(synth::render_face(synth::canonical_latents(a), s, n).image);
      }
      const Tensor ts = stack_images(src), td = stack_images(drv), tc = stack_images(can);
      const motion::MotionEstimate ms = bb.extractor(ag::constant(ts));
      const motion::MotionEstimate md = bb.extractor(ag::constant(td));
      const Tensor xs = ms.keypoints().value(), xcs = ms.canonical.value();
      const Tensor xd = motion::compose(ag::constant(xcs), md.rotation, md.expression, md.translation).value();
      const Tensor to_c = motion::deformation(ag::constant(xs), ag::constant(xcs), vs, cfg.sigma).value();
      const Tensor to_d = motion::deformation(ag::constant(xcs), ag::constant(xd), vs, cfg.sigma).value();

      const Var v = bb.encoder(ag::constant(ts));
      const Var vc = warp::grid_sample3d(v, ag::constant(to_c));
      const Var vd = warp::grid_sample3d(vc, ag::constant(to_d));
      auto l1 = [](const Var& a, const Tensor& b) { return ag::mean(ag::abs(ag::sub(a, ag::constant(b)))); };
      Var loss = l1(bb.decoder(v), ts);
      loss = ag::add(loss, l1(bb.decoder(vc), tc));
      loss = ag::add(loss, l1(bb.decoder(vd), td));
      opt.zero_grad();
      ag::backward(loss);
      opt.set_lr(lr_at(sch.lr, step, sch.autoencoder_steps));
      opt.step();
      if (log) log->autoencoder_loss.push_back(loss.item());
    }
    nn::set_trainable(frozen, true);
    nn::zero_grad(p);
  }
  return bb;
}

PairSampler::PairSampler(const PipelineConfig& cfg, std::uint64_t seed, std::uint64_t pool_seed)
    : cfg_(cfg),
      sources_(pool_seed * 2 + 1, cfg.train_identities),
      targets_(pool_seed * 2 + 2, cfg.train_identities),
      rng_(seed) {}

PairSampler::Draw PairSampler::draw() {
  Draw d;
  std::uniform_int_distribution<std::size_t> pick(0, targets_.size() - 1);
  d.target = pick(rng_);
  d.same_identity = losses::sample_same_identity(rng_, cfg_.same_identity_probability);
  d.source = d.same_identity ? d.target : pick(rng_);
  return d;
}

Sample PairSampler::next() {
  Sample s;
  const Draw d = draw();
  const auto& tid = targets_[d.target];
  s.same_identity = d.same_identity;
  const auto& sid = s.same_identity ? tid : sources_[d.source];
  const synth::SceneLatents tl = synth::random_latents(rng_, tid);
  const synth::SceneLatents sl = synth::random_latents(rng_, sid);
  const synth::Render tr = synth::render_face(tl, cfg_.image_size, cfg_.keypoints);
  s.target = tr.image;
  s.target_face_mask = tr.truth.face_mask;
  s.source = synth::render_face(sl, cfg_.image_size, cfg_.keypoints).image;
  s.canonical_face_mask = synth::render_face(synth::canonical_latents(tl), cfg_.image_size, cfg_.keypoints).truth.face_mask;
  return s;
}

std::vector<Sample> PairSampler::batch(int n) {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(next());
  return out;
}

std::string loss_log_header() {
  return "step identity perceptual motion reconstruction adversarial mask total discriminator r1";
}

std::string format_loss_record(const LossRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g", r.step, r.identity,
                r.perceptual, r.motion, r.reconstruction, r.adversarial, r.mask, r.total, r.discriminator, r.r1);
  return buf;
}

std::vector<double> moving_average(const std::vector<double>& v, int window) {
  if (window <= 0) throw std::invalid_argument("moving_average: window must be positive");
  std::vector<double> out(v.size());
  double acc = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (i >= static_cast<std::size_t>(window)) acc -= v[i - static_cast<std::size_t>(window)];
    out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
  }
  return out;
}

GeneratorObjective generator_objective(const Backbone& bb, const SwapModel& model, const PipelineConfig& cfg,
                                       const std::vector<Sample>& batch, const losses::Embedder& perceptual) {
  if (batch.empty()) throw std::invalid_argument("generator_objective: empty batch");
  const Ablation& ab = cfg.ablation;
  std::vector<Tensor> srcs, tgts;
  std::vector<const Tensor*> gt_masks;
  std::vector<bool> same;
  for (const auto& s : batch) {
    srcs.push_back(s.source);
    tgts.push_back(s.target);
    gt_masks.push_back(ab.no_warp ? &s.target_face_mask : &s.canonical_face_mask);
    same.push_back(s.same_identity);
  }
  const Tensor sources = stack_images(srcs), targets = stack_images(tgts);

  GeneratorObjective g;
  ForwardOptions fo;
  fo.ablation = ab;
  g.forward = swap_forward(bb, model, cfg, sources, targets, fo);
  const auto& o = g.forward.outputs;
  const Var target = ag::constant(targets);
  losses::LossTerms& terms = g.terms;
  terms.identity = losses::identity_loss(ag::constant(sources), o, bb.probe);
  terms.perceptual = losses::perceptual_loss(o, target, perceptual);
  terms.motion = losses::motion_loss(o.pose_canonical, o.expr_canonical, o.pose_original, o.expr_original,
                                     ag::constant(g.forward.target_pose), ag::constant(g.forward.target_expression));
  terms.reconstruction =
      losses::reconstruction_loss(o.swapped_canonical, o.target_canonical, o.swapped_original, target, same);
  terms.adversarial =
      losses::hinge_generator(model.discriminator(o.swapped_canonical), model.discriminator(o.swapped_original));
  if (ab.no_mask) {
    terms.mask = ag::constant(Tensor::scalar(0.0));
  } else {
    const int factor = cfg.image_size / cfg.volume().spatial();
    const Tensor gt = pooled_masks(gt_masks, factor);
    terms.mask = losses::mask_loss(o.masks, std::vector<Tensor>(o.masks.size(), gt));
  }
  g.total = losses::total_loss(terms, cfg.weights);
  return g;
}

TrainState train(const PipelineConfig& cfg, const Backbone& backbone, const TrainHooks& hooks,
                 const std::filesystem::path& snapshot_dir) {
  cfg.validate();
  Rng init(cfg.seed);
  TrainState st;
  st.model = SwapModel(cfg, init);
  const nn::NamedParams frozen = backbone.params();
  const nn::NamedParams gp = st.model.generator_params();
  const nn::NamedParams dp = st.model.discriminator_params();
  nn::set_trainable(frozen, false);
  nn::AdamW gopt(gp, cfg.optimizer), dopt(dp, cfg.optimizer);
  PairSampler sampler(cfg, cfg.seed ^ 0x5A3B1Eu, cfg.backbone_seed);
  const losses::EncoderPerceptual perceptual(&backbone.encoder);
  const losses::Critic critic = [&](const Var& x) { return st.model.discriminator.score(x); };

  for (int step = 1; step <= cfg.steps; ++step) {
    const std::vector<Sample> batch = sampler.batch(cfg.batch);

    // Generator update; the discriminator is held fixed.
    nn::set_trainable(dp, false);
    const GeneratorObjective g = generator_objective(backbone, st.model, cfg, batch, perceptual);
    const losses::LossTerms& terms = g.terms;
    const Var& total = g.total;
    const auto& o = g.forward.outputs;
    std::vector<Tensor> tgts;
    for (const auto& smp : batch) tgts.push_back(smp.target);
    const Tensor targets = stack_images(tgts);

    LossRecord rec;
    rec.step = step;
    rec.identity = terms.identity.item();
    rec.perceptual = terms.perceptual.item();
    rec.motion = terms.motion.item();
    rec.reconstruction = terms.reconstruction.item();
    rec.adversarial = terms.adversarial.item();
    rec.mask = terms.mask.item();
    rec.total = total.item();
    if (!std::isfinite(rec.total)) {
      if (!snapshot_dir.empty()) {
        std::filesystem::create_directories(snapshot_dir);
        std::ofstream f(snapshot_dir / "nonfinite.txt");
        f << loss_log_header() << "\n" << format_loss_record(rec) << "\n";
        Checkpoint ck{cfg, backbone, st};
        save_checkpoint(ck, snapshot_dir / "nonfinite.ckpt");
      }
      throw std::runtime_error("non-finite generator loss at step " + std::to_string(step) + ": " +
                               format_loss_record(rec));
    }
    gopt.zero_grad();
    ag::backward(total);
    gopt.step();
    nn::set_trainable(dp, true);

    // Discriminator update on detached fakes, with R1 on the reals.
    dopt.zero_grad();
    const Var fake_c = ag::constant(o.swapped_canonical.value());
    const Var fake_o = ag::constant(o.swapped_original.value());
    const Var d_loss = losses::hinge_discriminator(st.model.discriminator(ag::constant(targets)), st.model.discriminator(fake_c),
                                                   st.model.discriminator(fake_o));
    ag::backward(d_loss);
    const losses::R1Result r1 = losses::r1_penalty(critic, dp, targets, cfg.r1_gamma, cfg.r1_gamma > 0);
    rec.discriminator = d_loss.item();
    rec.r1 = r1.penalty;
    if (!std::isfinite(rec.discriminator) || !std::isfinite(rec.r1)) {
      throw std::runtime_error("non-finite discriminator loss at step " + std::to_string(step));
    }
    dopt.step();

    st.step = step;
    st.log.push_back(rec);
    if (hooks.on_step) hooks.on_step(rec);
  }
  nn::set_trainable(frozen, true);
  nn::zero_grad(gp);
  nn::zero_grad(dp);
  st.g_m = gopt.first_moments();
  st.g_v = gopt.second_moments();
  st.d_m = dopt.first_moments();
  st.d_v = dopt.second_moments();
  st.g_t = gopt.steps();
  st.d_t = dopt.steps();
  return st;
}

}  // namespace canonface::pipeline
