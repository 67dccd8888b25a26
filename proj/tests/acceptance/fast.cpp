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
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "acceptance/criteria.h"
#include "canonface/metrics.h"
#include "canonface/pim.h"
#include "canonface/pipeline.h"
#include "canonface/refine.h"
#include "support/gradcheck.h"

namespace canonface::acceptance {

namespace {

using ag::Var;
using testing::gradcheck;
using testing::gradcheck_param;
using clock_type = std::chrono::steady_clock;

constexpr int kSeeds = 20;
constexpr double kOpTol = 1e-4;
constexpr double kPipelineTol = 1e-3;

double psnr(const Tensor& a, const Tensor& b, double peak) {
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  return 10.0 * std::log10(peak * peak / std::max(se / a.size(), 1e-30));
}

double seconds_since(clock_type::time_point t) {
  return std::chrono::duration<double>(clock_type::now() - t).count();
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(3);
  o << v;
  return o.str();
}

Tensor images(Shape s, Rng& rng) { return randu(std::move(s), rng, 0.05, 0.95); }

Tensor rotations(int n, Rng& rng) {
  Tensor r(Shape{n, 3, 3});
  for (int i = 0; i < n; ++i) {
    const Mat3 m = rotation_from_euler(uniform(rng, -0.5, 0.5), uniform(rng, -0.4, 0.4), uniform(rng, -0.3, 0.3));
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) r.at({i, a, b}) = m(a, b);
  }
  return r;
}

// Worst error of each named operation over all seeds.
struct Tally {
  std::vector<std::pair<std::string, double>> worst;
  void add(const std::string& name, double err) {
    for (auto& [n, w] : worst)
      if (n == name) {
        w = std::max(w, err);
        return;
      }
    worst.emplace_back(name, err);
  }
  void add_all(const std::string& name, const std::function<testing::GradCheckResult(std::size_t)>& check,
               std::size_t inputs) {
    for (std::size_t i = 0; i < inputs; ++i) add(name, check(i).rel_error);
  }
};

void perturb(const nn::NamedParams& ps, Rng& rng, double scale) {
  for (const auto& [name, p] : ps) {
    Var v = p;
    for (double& x : v.mutable_value().values()) x += scale * normal(rng);
  }
}

// Renders have a 32 px floor; the 16 px configuration averages 2x2 blocks.
Tensor pool2(const Tensor& t) {
  const bool image = t.rank() == 3;
  const int c = image ? t.dim(0) : 1, s = t.dim(image ? 1 : 0) / 2;
  Tensor out(image ? Shape{c, s, s} : Shape{s, s});
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        double a = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) a += image ? t.at({k, 2 * y + dy, 2 * x + dx}) : t.at({2 * y + dy, 2 * x + dx});
        (image ? out.at({k, y, x}) : out.at({y, x})) = a / 4;
      }
  return out;
}

pipeline::PipelineConfig micro_config(int image_size) {
  pipeline::PipelineConfig c;
  c.image_size = image_size;
  c.channels = 4;
  c.depth = 2;
  c.keypoints = 4;
  c.pim_blocks = 2;
  c.batch = 2;
  c.train_identities = 8;
  return c;
}

double pipeline_gradient(std::uint64_t seed) {
  const pipeline::PipelineConfig data_cfg = micro_config(32);
  const pipeline::PipelineConfig cfg = micro_config(16);
  Rng rng(seed);
  const pipeline::Backbone bb(cfg, rng);
  pipeline::SwapModel model(cfg, rng);
  const nn::NamedParams gp = model.generator_params();
  perturb(gp, rng, 0.05);
  nn::set_trainable(bb.params(), false);
  nn::set_trainable(model.discriminator_params(), false);
  nn::set_trainable(gp, false);

  pipeline::PairSampler sampler(data_cfg, seed + 1, seed + 2);
  std::vector<pipeline::Sample> batch = sampler.batch(2);
  for (auto& s : batch) {
    s.source = pool2(s.source);
    s.target = pool2(s.target);
    s.target_face_mask = pool2(s.target_face_mask);
    s.canonical_face_mask = pool2(s.canonical_face_mask);
  }
  batch[0].same_identity = true;
  batch[0].source = batch[0].target;
  const losses::EncoderPerceptual perceptual(&bb.encoder);
  auto f = [&] { return pipeline::generator_objective(bb, model, cfg, batch, perceptual).total; };
  testing::GradCheckOptions opt;
  opt.max_coords = 2;
  opt.seed = seed;
  // Bias shifts move every voxel at once, so a 1e-5 stencil straddles
  // activation and L1 kinks somewhere in the volume.
  opt.step = 1e-6;
  double worst = 0;
  for (const auto& [name, p] : gp) worst = std::max(worst, gradcheck_param(f, p, opt).rel_error);
  return worst;
}

double r1_gradient(std::uint64_t seed) {
  Rng rng(seed);
  // Smooth critic: the penalty gradient uses a difference of gradients.
  nn::Conv2d c1(3, 4, 3, 2, rng), c2(4, 1, 3, 1, rng, true, 1.0);
  nn::NamedParams params;
  c1.collect("c1", params);
  c2.collect("c2", params);
  const losses::Critic critic = [&](const Var& x) { return ag::mean_per_sample(c2(ag::softplus(c1(x)))); };
  const Tensor real = images({2, 3, 8, 8}, rng);
  nn::zero_grad(params);
  losses::r1_penalty(critic, params, real, 10.0, true);
  double diff2 = 0, a2 = 0;
  for (const auto& [name, pv] : params) {
    Var p = pv;
    const Tensor analytic = p.grad();
    for (std::size_t i = 0; i < std::min<std::size_t>(4, p.value().size()); ++i) {
      const double x0 = p.value()[i], h = 1e-5;
      p.mutable_value()[i] = x0 + h;
      const double fp = losses::r1_penalty(critic, params, real, 10.0).penalty;
      p.mutable_value()[i] = x0 - h;
      const double fm = losses::r1_penalty(critic, params, real, 10.0).penalty;
      p.mutable_value()[i] = x0;
      const double gn = (fp - fm) / (2 * h);
      diff2 += (gn - analytic[i]) * (gn - analytic[i]);
      a2 += gn * gn;
    }
  }
  nn::zero_grad(params);
  return std::sqrt(diff2 / std::max(a2, 1e-300));
}

}  // namespace

Outcome gradient_suite() {
  const auto t0 = clock_type::now();
  Tally ops, e2e;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    Rng rng(1000 + seed);
    testing::GradCheckOptions opt;
    opt.seed = seed + 1;
    opt.max_coords = 12;

    const int n = 5;
    const Tensor xc = randu({2, n, 3}, rng, -0.6, 0.6), rot = rotations(2, rng);
    const Tensor ex = randn({2, n, 3}, rng) * 0.05, tr = randu({2, 3}, rng, -0.1, 0.1);
    auto compose = [](const std::vector<Var>& v) { return motion::compose(v[0], v[1], v[2], v[3]); };
    ops.add_all("compose_keypoints", [&](std::size_t i) { return gradcheck(compose, {xc, rot, ex, tr}, i, opt); }, 4);

    const Tensor dst = xc + randn({2, n, 3}, rng) * 0.1;
    auto deform = [](const std::vector<Var>& v) { return motion::deformation(v[0], v[1], {2, 4, 4}); };
    ops.add_all("estimate_deformation", [&](std::size_t i) { return gradcheck(deform, {xc, dst}, i, opt); }, 2);

    const Tensor vol = randn({1, 2, 3, 4, 4}, rng), grid = randu({1, 3, 4, 4, 3}, rng, -0.9, 0.9);
    auto warp = [](const std::vector<Var>& v) { return warp::grid_sample3d(v[0], v[1]); };
    ops.add_all("warp_volume", [&](std::size_t i) { return gradcheck(warp, {vol, grid}, i, opt); }, 2);

    const Tensor f = randn({2, 4, 5, 5}, rng), w = randn({3, 4, 3, 3}, rng), s = randu({2, 4}, rng, 0.3, 2.0);
    auto mc = [](const std::vector<Var>& v) { return pim::modulated_conv(v[0], v[1], v[2]); };
    ops.add_all("modulated_conv", [&](std::size_t i) { return gradcheck(mc, {f, w, s}, i, opt); }, 3);

    pim::PimBlock block(4, 3, rng, 0.3);
    nn::NamedParams bp;
    block.collect("b", bp);
    const Tensor sb = randu({2, 4}, rng, 0.3, 2.0);
    auto blk = [&](const std::vector<Var>& v) { return block(v[0], v[1]).features; };
    ops.add_all("pim_block", [&](std::size_t i) { return gradcheck(blk, {f, sb}, i, opt); }, 2);
    for (const auto& [name, p] : bp) {
      ops.add("pim_block", gradcheck_param([&] { return block(ag::constant(f), ag::constant(sb)).features; }, p, opt).rel_error);
    }

    refine::Refiner refiner(2, rng);
    nn::NamedParams rp;
    refiner.collect("r", rp);
    perturb(rp, rng, 0.1);
    const Tensor rv = randn({1, 2, 2, 4, 4}, rng);
    ops.add("refine_volume", gradcheck([&](const std::vector<Var>& v) { return refiner(v[0]); }, {rv}, 0, opt).rel_error);
    for (const auto& [name, p] : rp) {
      ops.add("refine_volume", gradcheck_param([&] { return refiner(ag::constant(rv)); }, p, opt).rel_error);
    }

    const Tensor es = randn({2, 16}, rng), ec = randn({2, 16}, rng), eo = randn({2, 16}, rng);
    auto id = [](const std::vector<Var>& v) { return losses::identity_loss(v[0], v[1], v[2]); };
    ops.add_all("identity_loss", [&](std::size_t i) { return gradcheck(id, {es, ec, eo}, i, opt); }, 3);

    const std::vector<Tensor> mv{randn({2, 3}, rng), randn({2, 4, 3}, rng), randn({2, 3}, rng),
                                 randn({2, 4, 3}, rng), randn({2, 3}, rng), randn({2, 4, 3}, rng)};
    auto mo = [](const std::vector<Var>& v) { return losses::motion_loss(v[0], v[1], v[2], v[3], v[4], v[5]); };
    ops.add_all("motion_loss", [&](std::size_t i) { return gradcheck(mo, mv, i, opt); }, 4);

    const Tensor a = images({2, 3, 8, 8}, rng), b = images({2, 3, 8, 8}, rng);
    const Tensor c = images({2, 3, 8, 8}, rng), d = images({2, 3, 8, 8}, rng);
    auto rec = [](const std::vector<Var>& v) {
      return losses::reconstruction_loss(v[0], v[1], v[2], v[3], {true, false});
    };
    ops.add_all("reconstruction_loss", [&](std::size_t i) { return gradcheck(rec, {a, b, c, d}, i, opt); }, 4);

    const Tensor d1 = randn({2, 1, 3, 3}, rng), d2 = randn({2, 1, 3, 3}, rng), d3 = randn({2, 1, 3, 3}, rng);
    auto hd = [](const std::vector<Var>& v) { return losses::hinge_discriminator(v[0], v[1], v[2]); };
    ops.add_all("adversarial_loss", [&](std::size_t i) { return gradcheck(hd, {d1, d2, d3}, i, opt); }, 3);
    auto hg = [](const std::vector<Var>& v) { return losses::hinge_generator(v[0], v[1]); };
    ops.add_all("adversarial_loss", [&](std::size_t i) { return gradcheck(hg, {d2, d3}, i, opt); }, 2);
    ops.add("r1_penalty", r1_gradient(2000 + seed));

    const Tensor m = images({2, 1, 4, 4}, rng), g = images({2, 1, 4, 4}, rng);
    auto ml = [&](const std::vector<Var>& v) { return losses::mask_loss({v[0]}, {g}); };
    ops.add("mask_loss", gradcheck(ml, {m}, 0, opt).rel_error);
    auto tv = [](const std::vector<Var>& v) { return losses::total_variation(v[0]); };
    ops.add("mask_loss", gradcheck(tv, {m}, 0, opt).rel_error);

    warp::AppearanceEncoder enc(warp::VolumeConfig{}, rng);
    const losses::EncoderPerceptual emb(&enc);
    const Tensor x = images({1, 3, 32, 32}, rng), y = images({1, 3, 32, 32}, rng);
    auto pd = [&](const std::vector<Var>& v) {
      return losses::perceptual_distance(emb.layer_features(v[0]), emb.layer_features(v[1]));
    };
    ops.add("perceptual_loss", gradcheck(pd, {x, y}, 0, opt).rel_error);
    losses::AttributeProbe probe(32, rng);
    ops.add("identity_embedder", gradcheck([&](const std::vector<Var>& v) { return probe.embed(v[0]); }, {x}, 0, opt).rel_error);

    std::vector<Tensor> terms;
    for (int k = 0; k < 6; ++k) terms.push_back(Tensor::scalar(normal(rng)));
    auto total = [](const std::vector<Var>& v) {
      return losses::total_loss({v[0], v[1], v[2], v[3], v[4], v[5]}, losses::LossWeights{});
    };
    ops.add_all("total_loss", [&](std::size_t i) { return gradcheck(total, terms, i, opt); }, 6);

    e2e.add("micro_pipeline", pipeline_gradient(3000 + seed));
  }
  const double elapsed = seconds_since(t0);
  bool pass = elapsed < 300.0;
  std::string detail;
  for (const auto& [name, w] : ops.worst) {
    pass = pass && w <= kOpTol;
    detail += name + " " + fmt(w) + ", ";
  }
  const double we = e2e.worst[0].second;
  pass = pass && we <= kPipelineTol;
  detail += "micro_pipeline " + fmt(we) + "; " + std::to_string(kSeeds) + " seeds, " + fmt(elapsed) + " s";
  return {1, "gradient suite", pass, detail};
}

Outcome exactness_suite() {
  const auto t0 = clock_type::now();
  bool warp_ok = true, fusion_ok = true, refine_ok = true, rec_ok = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(4000 + seed);
    const motion::VolumeShape vs{2 + static_cast<int>(seed % 3), 4 + static_cast<int>(seed % 5), 5};
    const Tensor v = randn({3, vs.depth, vs.height, vs.width}, rng);
    warp_ok = warp_ok && warp::warp_volume(v, warp::identity_field(vs)).storage() == v.storage();

    pim::PimBlock block(6, 3, rng, 0.3);
    const Var f = ag::constant(randn({2, 6, 5, 5}, rng));
    const Var s = ag::constant(randu({2, 6}, rng, 0.3, 2.0));
    const Tensor plain = ag::leaky_relu(pim::standard_conv(f, block.weight()), 0.2).value();
    const Tensor modded = ag::leaky_relu(pim::modulated_conv(f, block.weight(), s), 0.2).value();
    pim::BlockOptions opt;
    opt.mask = pim::MaskMode::kZero;
    fusion_ok = fusion_ok && block(f, s, opt).features.value().storage() == plain.storage();
    opt.mask = pim::MaskMode::kOne;
    fusion_ok = fusion_ok && block(f, s, opt).features.value().storage() == modded.storage();
    opt.mask = pim::MaskMode::kConstant;
    opt.constant_mask = 0.0;
    fusion_ok = fusion_ok && block(f, s, opt).features.value().storage() == plain.storage();
    opt.constant_mask = 1.0;
    fusion_ok = fusion_ok && block(f, s, opt).features.value().storage() == modded.storage();

    refine::Refiner r(3, rng);
    const Tensor rv = randn({2, 3, 4, 6, 6}, rng);
    refine_ok = refine_ok && r(ag::constant(rv)).value().storage() == rv.storage();

    const Var a = ag::constant(images({3, 3, 8, 8}, rng)), b = ag::constant(images({3, 3, 8, 8}, rng));
    rec_ok = rec_ok && losses::reconstruction_loss(a, b, b, a, {false, false, false}).item() == 0.0;
  }
  const double elapsed = seconds_since(t0);
  const bool pass = warp_ok && fusion_ok && refine_ok && rec_ok && elapsed < 60.0;
  std::string d = std::string("identity warp ") + (warp_ok ? "exact" : "NOT exact") + ", fusion limits " +
                  (fusion_ok ? "exact" : "NOT exact") + ", zero-init refiner " + (refine_ok ? "exact" : "NOT exact") +
                  ", cross-identity reconstruction " + (rec_ok ? "0" : "nonzero") + "; " + fmt(elapsed) + " s";
  return {2, "exactness suite", pass, d};
}

Outcome modulation_properties() {
  double scale_dev = 0, norm_dev = 0, var_dev = 0;
  int samples = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(5000 + seed);
    const Var w = ag::constant(randn({4, 5, 3, 3}, rng));
    const Tensor s = randu({2, 5}, rng, 0.2, 2.0);
    const Tensor base = pim::modulate_weights(w, ag::constant(s), 0.0).value();
    for (double c : {1e-3, 0.5, 7.0, 1e3}) {
      scale_dev = std::max(scale_dev, max_abs_diff(base, pim::modulate_weights(w, ag::constant(s * c), 0.0).value()));
    }
    const Tensor m = pim::modulate_weights(w, ag::constant(s), pim::kDefaultEpsilon).value();
    const std::size_t per = 5 * 9;
    for (int n = 0; n < 2; ++n)
      for (int o = 0; o < 4; ++o) {
        double ss = 0;
        for (std::size_t j = 0; j < per; ++j) {
          const double v = m[(static_cast<std::size_t>(n) * 4 + o) * per + j];
          ss += v * v;
        }
        norm_dev = std::max(norm_dev, std::abs(std::sqrt(ss) - 1.0));
      }
  }
  {
    Rng rng(5100);
    const int ci = 8, co = 4, side = 104;
    const Tensor f = randn({1, ci, side, side}, rng);
    const Tensor out = pim::modulated_conv(ag::constant(f), ag::constant(randn({co, ci, 3, 3}, rng)),
                                           ag::constant(randu({1, ci}, rng, 0.2, 2.0)))
                           .value();
    for (int o = 0; o < co; ++o) {
      double sum = 0, sum2 = 0;
      int count = 0;
      for (int i = 1; i < side - 1; ++i)
        for (int j = 1; j < side - 1; ++j) {
          const double v = out.at({0, o, i, j});
          sum += v;
          sum2 += v * v;
          ++count;
        }
      const double mean = sum / count;
      var_dev = std::max(var_dev, std::abs(sum2 / count - mean * mean - 1.0));
      samples = count;
    }
  }
  const bool pass = scale_dev <= 1e-10 && norm_dev <= 1e-6 && var_dev <= 0.1 && samples >= 10000;
  return {3, "modulation properties", pass,
          "scale invariance " + fmt(scale_dev) + ", effective-weight norm deviation " + fmt(norm_dev) +
              ", output variance deviation " + fmt(var_dev) + " over " + std::to_string(samples) + " samples"};
}

Outcome metric_oracles() {
  const auto t0 = clock_type::now();
  synth::EyeLandmarks eye;
  eye.points[0] = {0, 0};
  eye.points[1] = {1, 1};
  eye.points[2] = {3, 1};
  eye.points[3] = {4, 0};
  eye.points[4] = {3, -1};
  eye.points[5] = {1, -1};
  const double ear = metrics::ear(eye);

  const Eigen::VectorXd z = Eigen::VectorXd::Zero(1), one = Eigen::VectorXd::Ones(1);
  const Eigen::MatrixXd i1 = Eigen::MatrixXd::Identity(1, 1);
  const double fd1 = metrics::frechet_distance(z, i1, one, i1);
  Rng rng(6000);
  double fd_dev = 0;
  for (int t = 0; t < 100; ++t) {
    const int d = 1 + t % 4;
    Eigen::VectorXd m1(d), m2(d), v1(d), v2(d);
    double expect = 0;
    for (int k = 0; k < d; ++k) {
      m1(k) = normal(rng);
      m2(k) = normal(rng);
      v1(k) = uniform(rng, 0.01, 5.0);
      v2(k) = uniform(rng, 0.01, 5.0);
      expect += (m1(k) - m2(k)) * (m1(k) - m2(k)) + v1(k) + v2(k) - 2 * std::sqrt(v1(k) * v2(k));
    }
    const Eigen::MatrixXd c1 = v1.asDiagonal(), c2 = v2.asDiagonal();
    fd_dev = std::max(fd_dev, std::abs(metrics::frechet_distance(m1, c1, m2, c2) - expect));
  }

  const int tc = 60, dim = 8, planted = 3;
  Eigen::MatrixXd video(tc, dim), audio(tc, dim);
  for (int i = 0; i < tc; ++i)
    for (int j = 0; j < dim; ++j) video(i, j) = normal(rng);
  for (int i = 0; i < tc; ++i)
    for (int j = 0; j < dim; ++j) audio(i, j) = i >= planted ? video(i - planted, j) : normal(rng);
  const metrics::SyncScores sync = metrics::sync_metrics(video, audio);

  const synth::IdentityPool pool(77, 1);
  const synth::Clip clip = synth::make_clip(pool[0], synth::random_trajectory(rng, 8), true, 32, 5);
  const double tc_same = metrics::temporal_consistency(clip.frames, clip.frames);
  const double elapsed = seconds_since(t0);

  const bool pass = ear == 0.5 && fd1 == 1.0 && fd_dev <= 1e-8 && sync.best_offset == planted && sync.lse_d == 0.0 &&
                    tc_same == 0.0 && elapsed < 120.0;
  return {4, "metric oracle suite", pass,
          "EAR " + fmt(ear) + ", Frechet 1-D " + fmt(fd1) + ", diagonal max deviation " + fmt(fd_dev) +
              ", sync offset " + std::to_string(sync.best_offset) + " (planted " + std::to_string(planted) +
              ") LSE-D " + fmt(sync.lse_d) + ", identical-video TC " + fmt(tc_same) + "; " + fmt(elapsed) + " s"};
}

Outcome round_trip_warping() {
  const motion::VolumeShape s{8, 16, 16};
  Tensor v(Shape{2, s.depth, s.height, s.width});
  for (int c = 0; c < 2; ++c)
    for (int z = 0; z < s.depth; ++z)
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
          const double px = motion::voxel_center(x, s.width), py = motion::voxel_center(y, s.height),
                       pz = motion::voxel_center(z, s.depth);
          v.at({c, z, y, x}) = 0.5 + 0.3 * std::sin(2.0 * px + c) * std::cos(1.5 * py) + 0.2 * std::cos(pz + py);
        }
  auto crop = [&](const Tensor& t) {
    std::vector<double> out;
    for (int c = 0; c < 2; ++c)
      for (int z = 1; z < s.depth - 1; ++z)
        for (int y = 2; y < s.height - 2; ++y)
          for (int x = 2; x < s.width - 2; ++x) out.push_back(t.at({c, z, y, x}));
    return Tensor(Shape{static_cast<int>(out.size())}, out);
  };
  const auto id = warp::identity_field(s);
  Rng rng(7000);
  double worst = 1e9, largest_disp = 0;
  int cases = 0;
  while (cases < 100) {
    KeypointMatrix xc(10, 3);
    for (int i = 0; i < 10; ++i)
      for (int c = 0; c < 3; ++c) xc(i, c) = uniform(rng, -0.6, 0.6);
    MotionParams m = MotionParams::identity(10);
    m.rotation = rotation_from_euler(uniform(rng, -0.2, 0.2), uniform(rng, -0.15, 0.15), uniform(rng, -0.12, 0.12));
    m.translation = Vec3(uniform(rng, -0.06, 0.06), uniform(rng, -0.06, 0.06), uniform(rng, -0.03, 0.03));
    for (int i = 0; i < 10; ++i)
      for (int c = 0; c < 3; ++c) m.expression(i, c) = uniform(rng, -0.03, 0.03);
    const KeypointSet posed = motion::compose_keypoints(KeypointSet(xc), m);
    const auto pair = motion::canonical_pair(posed, KeypointSet(xc), s);
    double disp = 0;
    for (std::size_t i = 0; i < id.grid.size(); ++i) disp = std::max(disp, std::abs(pair.o_to_c.grid[i] - id.grid[i]));
    if (disp > 0.2) continue;  // outside the criterion's motion range
    largest_disp = std::max(largest_disp, disp);
    const Tensor back = warp::warp_volume(warp::warp_volume(v, pair.o_to_c), pair.c_to_o);
    worst = std::min(worst, psnr(crop(back), crop(v), 1.0));
    ++cases;
  }
  return {5, "round-trip warping", worst >= 30.0,
          "minimum interior PSNR " + fmt(worst) + " dB over 100 motions, largest displacement " + fmt(largest_disp)};
}

Outcome sampling_protocol() {
  const pipeline::PipelineConfig cfg;
  pipeline::PairSampler sampler(cfg, 8080, cfg.backbone_seed);
  const int draws = 100000;
  int same = 0;
  bool consistent = true;
  for (int i = 0; i < draws; ++i) {
    const auto d = sampler.draw();
    same += d.same_identity ? 1 : 0;
    consistent = consistent && (!d.same_identity || d.source == d.target);
  }
  const double rate = static_cast<double>(same) / draws;
  return {9, "sampling protocol", rate >= 0.29 && rate <= 0.31 && consistent,
          "same-identity rate " + fmt(rate) + " over " + std::to_string(draws) + " draws"};
}

void reproducibility_run(const std::filesystem::path& out_dir) {
  pipeline::PipelineConfig cfg;
  cfg.steps = 30;
  cfg.backbone.motion_steps = 20;
  cfg.backbone.probe_steps = 20;
  cfg.backbone.autoencoder_steps = 20;
  std::filesystem::create_directories(out_dir);
  const pipeline::Backbone bb = pipeline::pretrain_backbone(cfg);
  std::ofstream log(out_dir / "loss.log");
  log << pipeline::loss_log_header() << "\n";
  pipeline::TrainHooks hooks;
  hooks.on_step = [&](const pipeline::LossRecord& r) { log << pipeline::format_loss_record(r) << "\n"; };
  const pipeline::TrainState st = pipeline::train(cfg, bb, hooks);
  pipeline::save_checkpoint({cfg, bb, st}, out_dir / "model.ckpt");
}

Outcome reproducibility(const std::string& self_exe, const std::filesystem::path& work_dir) {
  std::filesystem::remove_all(work_dir);
  const auto a = work_dir / "run_a", b = work_dir / "run_b";
  for (const auto& dir : {a, b}) {
    const std::string cmd = "\"" + self_exe + "\" --repro-run \"" + dir.string() + "\"";
    if (std::system(cmd.c_str()) != 0) return {10, "reproducibility", false, "training process failed: " + cmd};
  }
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };
  const std::string la = slurp(a / "loss.log"), lb = slurp(b / "loss.log");
  const std::string ca = slurp(a / "model.ckpt"), cb = slurp(b / "model.ckpt");
  const bool logs = !la.empty() && la == lb, ckpts = !ca.empty() && ca == cb;
  const auto lines = std::count(la.begin(), la.end(), '\n');
  return {10, "reproducibility", logs && ckpts,
          std::string("loss logs ") + (logs ? "identical" : "differ") + " (" + std::to_string(lines - 1) +
              " steps), checkpoints " + (ckpts ? "identical" : "differ") + " (" + std::to_string(ca.size()) + " bytes)"};
}

}  // namespace canonface::acceptance
