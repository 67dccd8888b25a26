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

#include <Eigen/Geometry>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "canonface/pipeline.h"

namespace canonface::pipeline {

namespace {

using json = nlohmann::json;

// Held-out pools; training pools use seeds 2k+1 and 2k+2 for small k.
constexpr std::uint64_t kBenchPoolBase = 0x0E7A1B00u;

std::string pair_dir_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%03zu", i);
  return buf;
}

Eigen::MatrixXd rows_of(const Tensor& t) {
  const int n = t.dim(0);
  const int d = static_cast<int>(t.size() / static_cast<std::size_t>(n));
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = t[static_cast<std::size_t>(i) * d + j];
  return m;
}

std::array<synth::EyeLandmarks, 2> eyes_from_probe(const Tensor& eyes, int row) {
  std::array<synth::EyeLandmarks, 2> out;
  for (int e = 0; e < 2; ++e)
    for (int k = 0; k < 6; ++k)
      for (int c = 0; c < 2; ++c) {
        out[static_cast<std::size_t>(e)].points[static_cast<std::size_t>(k)](c) = eyes.at({row, e * 12 + k * 2 + c});
      }
  return out;
}

// EAR of probe landmarks; degenerate predictions count as a closed eye.
double probe_ear(const Tensor& eyes, int row) {
  try {
    return metrics::frame_ear(eyes_from_probe(eyes, row));
  } catch (const std::domain_error&) {
    return 0.0;
  }
}

struct PairScores {
  std::vector<double> pose_err, expr_err, outside_l1, perceptual;
  std::vector<double> ear_swapped, ear_truth;
  std::vector<Eigen::Vector3d> gaze_swapped, gaze_truth;
  Eigen::MatrixXd id_frames, feat_swapped, feat_target;
  Eigen::VectorXd id_source;
  double tc = 0;
  metrics::SyncScores sync;
};

PairScores score_pair(const Backbone& bb, const PipelineConfig& cfg, const BenchmarkPair& pair,
                      const synth::Clip& swapped, const losses::EncoderPerceptual& perceptual) {
  PairScores s;
  const int t = static_cast<int>(swapped.size());
  const Tensor out = stack_images(swapped.frames);
  const Tensor tgt = stack_images(pair.target.frames);

  const losses::ProbeOutput po = bb.probe(ag::constant(out));
  const losses::ProbeOutput pt = bb.probe(ag::constant(tgt));
  s.id_frames = rows_of(po.identity.value());
  s.id_source = rows_of(bb.probe.embed(ag::constant(stack_images({pair.source}))).value()).row(0).transpose();
  s.feat_swapped = rows_of(po.features.value());
  s.feat_target = rows_of(pt.features.value());

  const motion::MotionEstimate mo = bb.extractor(ag::constant(out));
  const motion::MotionEstimate mt = bb.extractor(ag::constant(tgt));
  const Tensor pose = motion::axis_angle(mo.rotation).value();
  const Tensor eo = mo.expression.value(), et = mt.expression.value();
  const int n = cfg.keypoints;

  const Tensor eyes = po.eye_landmarks.value();
  const Tensor gaze = po.gaze.value();
  Eigen::MatrixXd mouth(t, 1), audio(t, 1);
  for (int f = 0; f < t; ++f) {
    const auto& lat = pair.target.latents_per_frame[static_cast<std::size_t>(f)];
    const Vec3 w = axis_angle_from_rotation(lat.pose.rotation);
    double pe = 0;
    for (int c = 0; c < 3; ++c) pe += std::abs(pose.at({f, c}) - w(c));
    s.pose_err.push_back(pe);
    double ee = 0;
    for (int k = 0; k < n; ++k)
      for (int c = 0; c < 3; ++c) ee += std::abs(eo.at({f, k, c}) - et.at({f, k, c}));
    s.expr_err.push_back(ee / n);

    const synth::Render truth = synth::render_face(lat, cfg.image_size, n);
    double acc = 0;
    int count = 0;
    for (int y = 0; y < cfg.image_size; ++y)
      for (int x = 0; x < cfg.image_size; ++x) {
        if (truth.truth.face_mask.at({y, x}) > 0.5) continue;
        for (int c = 0; c < 3; ++c) acc += std::abs(out.at({f, c, y, x}) - tgt.at({f, c, y, x}));
        ++count;
      }
    s.outside_l1.push_back(count > 0 ? acc / (3.0 * count) : 0.0);

    s.ear_swapped.push_back(probe_ear(eyes, f));
    s.ear_truth.push_back(truth.truth.ear_value);
    s.gaze_swapped.emplace_back(gaze.at({f, 0}), gaze.at({f, 1}), gaze.at({f, 2}));
    s.gaze_truth.push_back(truth.truth.gaze);
    mouth(f, 0) = po.mouth_open.value()[static_cast<std::size_t>(f)];
    audio(f, 0) = synth::mouth_readout(pair.target.audio_latents[static_cast<std::size_t>(f)]);

    const Var a = ag::constant(image_at(out, f).reshaped(Shape{1, 3, cfg.image_size, cfg.image_size}));
    const Var b = ag::constant(image_at(tgt, f).reshaped(Shape{1, 3, cfg.image_size, cfg.image_size}));
    s.perceptual.push_back(
        losses::perceptual_distance(perceptual.layer_features(a), perceptual.layer_features(b)).item());
  }
  s.tc = metrics::temporal_consistency(pair.target.frames, swapped.frames);
  s.sync = metrics::sync_metrics(mouth, audio, std::min(15, std::max(0, t / 2 - 1)));
  return s;
}

double mean(const std::vector<double>& v) {
  double a = 0;
  for (double x : v) a += x;
  return v.empty() ? 0.0 : a / static_cast<double>(v.size());
}

}  // namespace

std::vector<BenchmarkPair> make_benchmark(const PipelineConfig& cfg, int pairs, int frames, std::uint64_t seed,
                                          bool same_identity) {
  if (pairs <= 0 || frames <= 0) throw std::invalid_argument("make_benchmark: pairs and frames must be positive");
  const synth::IdentityPool sources(kBenchPoolBase + 2 * seed, pairs);
  const synth::IdentityPool targets(kBenchPoolBase + 2 * seed + 1, pairs);
  Rng rng(seed ^ 0xBE4C4u);
  std::vector<BenchmarkPair> out;
  for (int i = 0; i < pairs; ++i) {
    BenchmarkPair p;
    const auto& tid = targets[static_cast<std::size_t>(i)];
    const auto& sid = same_identity ? tid : sources[static_cast<std::size_t>(i)];
    p.source_identity = sid;
    p.source = synth::render_face(synth::random_latents(rng, sid), cfg.image_size, cfg.keypoints).image;
    const auto traj = synth::random_trajectory(rng, frames);
    p.target = synth::make_clip(tid, traj, true, cfg.image_size, rng());
    out.push_back(std::move(p));
  }
  return out;
}

void save_benchmark(const std::vector<BenchmarkPair>& bench, const std::filesystem::path& dir) {
  if (bench.empty()) throw std::invalid_argument("save_benchmark: empty benchmark");
  std::filesystem::create_directories(dir);
  json index = json::array();
  for (std::size_t i = 0; i < bench.size(); ++i) {
    const std::string name = pair_dir_name(i);
    const auto pd = dir / name;
    std::filesystem::create_directories(pd);
    synth::save_png(bench[i].source, pd / "source.png");
    synth::save_clip(bench[i].target, pd / "target");
    index.push_back({{"dir", name}, {"source_identity", bench[i].source_identity}});
  }
  std::ofstream f(dir / "benchmark.json");
  f << json{{"pairs", index}}.dump(1) << "\n";
  if (!f) throw std::runtime_error("cannot write " + (dir / "benchmark.json").string());
}

std::vector<BenchmarkPair> load_benchmark(const std::filesystem::path& dir) {
  std::ifstream f(dir / "benchmark.json");
  if (!f) throw std::runtime_error("cannot read " + (dir / "benchmark.json").string());
  const json j = json::parse(f);
  std::vector<BenchmarkPair> out;
  for (const auto& e : j.at("pairs")) {
    BenchmarkPair p;
    const auto pd = dir / e.at("dir").get<std::string>();
    p.source = synth::load_png(pd / "source.png");
    p.source_identity = e.at("source_identity").get<std::vector<double>>();
    p.target = synth::load_clip(pd / "target");
    out.push_back(std::move(p));
  }
  if (out.empty()) throw std::invalid_argument("load_benchmark: no pairs in " + dir.string());
  return out;
}

double EvalReport::value(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return r.value;
  throw std::out_of_range("report has no metric " + name);
}

std::string EvalReport::to_json() const {
  json recs = json::array();
  for (const auto& r : records) {
    recs.push_back({{"name", r.name}, {"value", r.value}, {"implementation", r.implementation}, {"frames", r.frames}});
  }
  const json conventions = {
      {"ear", "100 * mean |EAR_swapped - EAR_target| per frame"},
      {"gaze", "mean L2 distance between unit gaze vectors"},
      {"pose_error", "mean L1 distance of axis-angle (radians) to the target's ground-truth pose"},
      {"expression_error", "mean per-keypoint L1 between swapped and target expression readbacks"},
      {"tc", "mean endpoint error (pixels) between consecutive-frame flows"},
      {"outside_mask_l1", "mean absolute pixel error outside the target's ground-truth face mask"},
      {"lse_d", "mean distance at the best audio offset; lse_c is median minus minimum over offsets"},
  };
  return json{{"ablation", ablation}, {"records", recs}, {"conventions", conventions}}.dump(2);
}

EvalReport evaluate(const Backbone& bb, const SwapModel& model, const PipelineConfig& cfg,
                    const std::vector<BenchmarkPair>& bench, const Ablation& ablation) {
  if (bench.empty()) throw std::invalid_argument("evaluate: empty benchmark");
  const nn::NamedParams all = [&] {
    nn::NamedParams p = bb.params();
    for (auto& e : model.generator_params()) p.push_back(e);
    return p;
  }();
  nn::set_trainable(all, false);
  const losses::EncoderPerceptual perceptual(&bb.encoder);

  std::vector<PairScores> scores;
  for (const auto& pair : bench) {
    const synth::Clip swapped = swap_clip(bb, model, cfg, pair.source, pair.target, ablation);
    scores.push_back(score_pair(bb, cfg, pair, swapped, perceptual));
  }
  nn::set_trainable(all, true);

  int frames = 0;
  std::vector<double> pose, expr, outside, perc, tc, ear_s, ear_t, lse_d, lse_c, sim;
  std::vector<Eigen::Vector3d> gaze_s, gaze_t;
  std::vector<int> src_index;
  Eigen::MatrixXd gallery(static_cast<Eigen::Index>(bench.size()), losses::AttributeProbe::kIdentityDim);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    frames += static_cast<int>(s.pose_err.size());
    auto app = [](std::vector<double>& dst, const std::vector<double>& src) { dst.insert(dst.end(), src.begin(), src.end()); };
    app(pose, s.pose_err);
    app(expr, s.expr_err);
    app(outside, s.outside_l1);
    app(perc, s.perceptual);
    app(ear_s, s.ear_swapped);
    app(ear_t, s.ear_truth);
    gaze_s.insert(gaze_s.end(), s.gaze_swapped.begin(), s.gaze_swapped.end());
    gaze_t.insert(gaze_t.end(), s.gaze_truth.begin(), s.gaze_truth.end());
    tc.push_back(s.tc);
    lse_d.push_back(s.sync.lse_d);
    lse_c.push_back(s.sync.lse_c);
    sim.push_back(metrics::id_similarity(s.id_source, s.id_frames));
    gallery.row(static_cast<Eigen::Index>(i)) = s.id_source.transpose();
    src_index.insert(src_index.end(), s.pose_err.size(), static_cast<int>(i));
  }

  auto stack = [&](auto member) {
    Eigen::MatrixXd m(frames, (scores[0].*member).cols());
    int r = 0;
    for (const auto& s : scores) {
      m.middleRows(r, (s.*member).rows()) = s.*member;
      r += static_cast<int>((s.*member).rows());
    }
    return m;
  };
  const Eigen::MatrixXd id_frames = stack(&PairScores::id_frames);
  const Eigen::MatrixXd fs = stack(&PairScores::feat_swapped), ft = stack(&PairScores::feat_target);
  const metrics::Retrieval ret = metrics::id_retrieval(id_frames, src_index, gallery);
  const metrics::GazeError ge = metrics::gaze_error(gaze_s, gaze_t);

  EvalReport rep;
  rep.ablation = ablation.name();
  const int clips = static_cast<int>(bench.size());
  auto add = [&](const std::string& name, double v, const std::string& impl) {
    rep.records.push_back({name, v, impl, frames});
  };
  add("id_similarity", mean(sim), bb.probe.name());
  add("id_retrieval", ret.percent,
      bb.probe.name() + " gallery of benchmark sources" + (ret.degenerate_ties ? " (degenerate ties)" : ""));
  add("pose_error", mean(pose), "motion-extractor readback vs synthworld ground truth");
  add("expression_error", mean(expr), "motion-extractor readback");
  add("tc", mean(tc), "block-matching optical flow");
  add("ear", metrics::ear_metric(ear_s, ear_t), bb.probe.name() + " eye landmarks vs synthworld ground truth");
  add("gaze", ge.value,
      bb.probe.name() + " gaze vs synthworld ground truth" + (ge.renormalized ? " (renormalized)" : ""));
  add("lse_d", mean(lse_d), bb.probe.name() + " mouth opening vs synthworld audio readout");
  add("lse_c", mean(lse_c), bb.probe.name() + " mouth opening vs synthworld audio readout");
  add("outside_mask_l1", mean(outside), "synthworld face mask");
  add("perceptual", mean(perc), "appearance-encoder features");
  add("fid", metrics::frechet_distance(metrics::fit_gaussian(ft), metrics::fit_gaussian(fs)),
      bb.probe.name() + " penultimate features per frame");
  if (clips >= 2) {
    Eigen::MatrixXd ct(clips, fs.cols()), cs(clips, fs.cols());
    int r = 0;
    for (int i = 0; i < clips; ++i) {
      const int len = static_cast<int>(scores[static_cast<std::size_t>(i)].pose_err.size());
      ct.row(i) = ft.middleRows(r, len).colwise().mean();
      cs.row(i) = fs.middleRows(r, len).colwise().mean();
      r += len;
    }
    add("fvd", metrics::frechet_distance(metrics::fit_gaussian(ct), metrics::fit_gaussian(cs)),
        bb.probe.name() + " penultimate features averaged per clip");
  }
  return rep;
}

double mask_sharpness(const std::vector<Tensor>& masks) {
  if (masks.empty()) throw std::invalid_argument("mask_sharpness: no masks");
  Tensor m = masks[0];
  for (std::size_t i = 1; i < masks.size(); ++i) {
    if (!masks[i].same_shape(m)) throw std::invalid_argument("mask_sharpness: shapes differ");
    m += masks[i];
  }
  m *= 1.0 / static_cast<double>(masks.size());
  double acc = 0;
  for (double p : m.values()) acc += p * (1.0 - p);
  return acc / static_cast<double>(m.size());
}

namespace {

// Bilinear sample of an [S, S] map at normalized (u, v); zero outside.
double sample_bilinear(const Tensor& m, double u, double v) {
  const int s = m.dim(0);
  const double fx = (u + 1.0) * s / 2.0 - 0.5, fy = (v + 1.0) * s / 2.0 - 0.5;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0, ay = fy - y0;
  auto px = [&](int y, int x) { return (x < 0 || y < 0 || x >= s || y >= s) ? 0.0 : m.at({y, x}); };
  return (1 - ay) * ((1 - ax) * px(y0, x0) + ax * px(y0, x0 + 1)) + ay * ((1 - ax) * px(y0 + 1, x0) + ax * px(y0 + 1, x0 + 1));
}

}  // namespace

const MaskAverage& CanonicalViz::part(const std::string& name) const {
  for (const auto& p : parts)
    if (p.name == name) return p;
  throw std::out_of_range("no mask part named " + name);
}

CanonicalViz visualize_canonical(const Backbone& bb, const PipelineConfig& cfg, const std::vector<synth::Clip>& clips) {
  const int r = kVizScale * cfg.image_size, n = cfg.keypoints;
  std::vector<Tensor> frames;
  std::array<std::vector<Tensor>, 3> masks;
  for (const auto& c : clips) {
    c.validate();
    for (std::size_t f = 0; f < c.size(); ++f) {
      frames.push_back(c.frames[f]);
      synth::GroundTruth gt = synth::render_face(c.latents_per_frame[f], r, n).truth;
      masks[0].push_back(std::move(gt.face_mask));
      masks[1].push_back(std::move(gt.eye_mask));
      masks[2].push_back(std::move(gt.mouth_mask));
    }
  }
  if (frames.empty()) throw std::invalid_argument("visualize_canonical: no frames");
  const int nf = static_cast<int>(frames.size());

  const nn::NamedParams p = bb.params();
  nn::set_trainable(p, false);
  const motion::MotionEstimate est = bb.extractor(ag::constant(stack_images(frames)));
  nn::set_trainable(p, true);
  const Tensor x = est.keypoints().value(), xc = est.canonical.value();

  // A 2-D mask has no depth, so the field uses keypoint distances in the
  // image plane only.
  std::vector<Tensor> fields;
  for (int i = 0; i < nf; ++i) {
    Tensor xi(Shape{1, n, 3}), xci(Shape{1, n, 3});
    for (int k = 0; k < n; ++k)
      for (int c = 0; c < 2; ++c) {
        xi.at({0, k, c}) = x.at({i, k, c});
        xci.at({0, k, c}) = xc.at({i, k, c});
      }
    fields.push_back(motion::deformation(ag::constant(xi), ag::constant(xci), {1, r, r}, cfg.sigma).value());
  }

  std::vector<Eigen::Matrix2Xd> pts;
  Eigen::Matrix2Xd mean_pts = Eigen::Matrix2Xd::Zero(2, n);
  for (int i = 0; i < nf; ++i) {
    Eigen::Matrix2Xd q(2, n);
    for (int k = 0; k < n; ++k) q.col(k) << x.at({i, k, 0}), x.at({i, k, 1});
    mean_pts += q / nf;
    pts.push_back(std::move(q));
  }
  std::vector<Eigen::Matrix3d> sims;
  // Maps mean-space points to frame points, so each output pixel pulls from the frame.
  for (int i = 0; i < nf; ++i) sims.push_back(Eigen::umeyama(mean_pts, pts[static_cast<std::size_t>(i)], true));

  auto avg = [&](const std::vector<Tensor>& ms) {
    Tensor a(Shape{r, r});
    for (const auto& m : ms) a += m;
    a *= 1.0 / nf;
    return a;
  };
  CanonicalViz v;
  const std::array<const char*, 3> names = {"face", "eye", "mouth"};
  for (std::size_t t = 0; t < names.size(); ++t) {
    std::vector<Tensor> canon, aligned;
    for (int i = 0; i < nf; ++i) {
      const Tensor& m = masks[t][static_cast<std::size_t>(i)];
      canon.push_back(warp::grid_sample3d(ag::constant(m.reshaped({1, 1, 1, r, r})),
                                          ag::constant(fields[static_cast<std::size_t>(i)]))
                          .value()
                          .reshaped({r, r}));
      Tensor a(Shape{r, r});
      for (int y = 0; y < r; ++y)
        for (int xx = 0; xx < r; ++xx) {
          const Eigen::Vector3d q =
              sims[static_cast<std::size_t>(i)] * Eigen::Vector3d(motion::voxel_center(xx, r), motion::voxel_center(y, r), 1.0);
          a.at({y, xx}) = sample_bilinear(m, q(0), q(1));
        }
      aligned.push_back(std::move(a));
    }
    MaskAverage part;
    part.name = names[t];
    part.canonical_mean = avg(canon);
    part.aligned_mean = avg(aligned);
    part.canonical_score = mask_sharpness(canon);
    part.aligned_score = mask_sharpness(aligned);
    v.canonical_score += part.canonical_score;
    v.aligned_score += part.aligned_score;
    v.parts.push_back(std::move(part));
  }
  return v;
}

}  // namespace canonface::pipeline
