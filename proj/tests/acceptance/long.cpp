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
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "acceptance/criteria.h"
#include "canonface/pipeline.h"

namespace canonface::acceptance {

namespace {

namespace fs = std::filesystem;
using pipeline::Ablation;
using pipeline::PipelineConfig;

constexpr int kFullSeeds = 5;
constexpr int kAblationSeeds = 3;
constexpr int kWindow = 100;
constexpr int kConvergenceBudget = 5000;
constexpr int kBenchPairs = 8;
constexpr int kBenchFrames = 32;
constexpr std::uint64_t kBenchSeed = 2026;
constexpr int kVizClips = 50;
constexpr int kVizFrames = 8;
constexpr double kVizRatio = 0.5;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

void write_text(const fs::path& p, const std::string& text) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    f << text;
  }
  fs::rename(tmp, p);
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

PipelineConfig run_config(const std::string& ablation, std::uint64_t seed) {
  PipelineConfig cfg;
  cfg.ablation = Ablation::parse(ablation);
  cfg.seed = seed;
  return cfg;
}

const pipeline::Backbone& cached_backbone(const fs::path& cache) {
  static std::optional<pipeline::Backbone> bb;
  if (bb) return *bb;
  const PipelineConfig cfg;
  const fs::path bin = cache / "backbone.bin", key = cache / "backbone.cfg";
  fs::create_directories(cache);
  if (fs::exists(bin) && slurp(key) == cfg.to_text()) {
    bb = pipeline::load_backbone(cfg, bin);
    return *bb;
  }
  std::cerr << "pretraining backbone into " << bin << "\n";
  bb = pipeline::pretrain_backbone(cfg);
  pipeline::save_backbone(*bb, cfg, bin);
  write_text(key, cfg.to_text());
  return *bb;
}

struct Run {
  PipelineConfig config;
  pipeline::SwapModel model;
  std::vector<pipeline::LossRecord> log;
};

std::vector<pipeline::LossRecord> parse_log(const std::string& text) {
  std::vector<pipeline::LossRecord> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream row(line);
    pipeline::LossRecord r;
    row >> r.step >> r.identity >> r.perceptual >> r.motion >> r.reconstruction >> r.adversarial >> r.mask >>
        r.total >> r.discriminator >> r.r1;
    if (!row) throw std::runtime_error("malformed loss log line: " + line);
    out.push_back(r);
  }
  return out;
}

fs::path run_dir(const fs::path& cache, const PipelineConfig& cfg) {
  return cache / ("run_" + cfg.ablation.name() + "_seed" + std::to_string(cfg.seed));
}

/// Trains or loads one run. Stale or partial entries are retrained.
Run ensure_run(const fs::path& cache, const std::string& ablation, std::uint64_t seed) {
  const PipelineConfig cfg = run_config(ablation, seed);
  const fs::path dir = run_dir(cache, cfg);
  const pipeline::Backbone& bb = cached_backbone(cache);
  if (slurp(dir / "config.toml") == cfg.to_text() && fs::exists(dir / "model.ckpt")) {
    auto log = parse_log(slurp(dir / "loss.log"));
    if (static_cast<int>(log.size()) == cfg.steps) {
      pipeline::Checkpoint ck = pipeline::load_checkpoint(dir / "model.ckpt");
      return {cfg, std::move(ck.state.model), std::move(log)};
    }
  }
  std::cerr << "training " << dir.filename().string() << "\n";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const pipeline::TrainState st = pipeline::train(cfg, bb);
  std::string log_text = pipeline::loss_log_header() + "\n";
  for (const auto& r : st.log) log_text += pipeline::format_loss_record(r) + "\n";
  write_text(dir / "loss.log", log_text);
  pipeline::save_checkpoint({cfg, bb, st}, dir / "model.ckpt");
  // Written last: marks the entry complete.
  write_text(dir / "config.toml", cfg.to_text());
  return {cfg, st.model, st.log};
}

std::vector<double> series(const std::vector<pipeline::LossRecord>& log, double pipeline::LossRecord::*field) {
  std::vector<double> v;
  v.reserve(log.size());
  for (const auto& r : log) v.push_back(r.*field);
  return v;
}

double final_ma(const std::vector<pipeline::LossRecord>& log, double pipeline::LossRecord::*field) {
  return pipeline::moving_average(series(log, field), kWindow).back();
}

const std::vector<pipeline::BenchmarkPair>& benchmark() {
  static const auto bench = pipeline::make_benchmark(PipelineConfig{}, kBenchPairs, kBenchFrames, kBenchSeed);
  return bench;
}

}  // namespace

void prepare_long(const fs::path& cache) {
  cached_backbone(cache);
  for (int seed = 1; seed <= kFullSeeds; ++seed) {
    ensure_run(cache, "full", seed);
    ensure_run(cache, "no_mask", seed);
    if (seed <= kAblationSeeds) {
      ensure_run(cache, "no_warp", seed);
      ensure_run(cache, "no_refine", seed);
    }
  }
}

Outcome canonical_decoupling(const fs::path& cache) {
  const pipeline::Backbone& bb = cached_backbone(cache);
  const PipelineConfig cfg;
  Rng rng(0xC1A5);
  std::vector<synth::Clip> clips;
  for (int i = 0; i < kVizClips; ++i) {
    const auto id = synth::random_identity(rng);
    clips.push_back(synth::make_clip(id, synth::random_trajectory(rng, kVizFrames), false, cfg.image_size, rng()));
  }
  const pipeline::CanonicalViz viz = pipeline::visualize_canonical(bb, cfg, clips);
  const bool pass = viz.canonical_score <= kVizRatio * viz.aligned_score;
  std::string parts;
  for (const auto& p : viz.parts) parts += ", " + p.name + " " + fmt(p.canonical_score) + "/" + fmt(p.aligned_score);
  return {6, "canonical-space decoupling", pass,
          "mask variance canonical " + fmt(viz.canonical_score) + " vs aligned " + fmt(viz.aligned_score) + " (ratio " +
              fmt(viz.canonical_score / viz.aligned_score) + ", bound " + fmt(kVizRatio) + ")" + parts + "; " +
              std::to_string(kVizClips) + " clips"};
}

Outcome training_directionality(const fs::path& cache) {
  const pipeline::Backbone& bb = cached_backbone(cache);
  const auto& bench = benchmark();
  std::vector<double> full_pose, full_tc, full_outside, full_perc;
  std::vector<double> warp_pose, warp_tc, mask_outside, refine_perc;
  for (int seed = 1; seed <= kAblationSeeds; ++seed) {
    const Run full = ensure_run(cache, "full", seed);
    const auto rf = pipeline::evaluate(bb, full.model, full.config, bench, full.config.ablation);
    full_pose.push_back(rf.value("pose_error"));
    full_tc.push_back(rf.value("tc"));
    full_outside.push_back(rf.value("outside_mask_l1"));
    full_perc.push_back(final_ma(full.log, &pipeline::LossRecord::perceptual));

    const Run nw = ensure_run(cache, "no_warp", seed);
    const auto rw = pipeline::evaluate(bb, nw.model, nw.config, bench, nw.config.ablation);
    warp_pose.push_back(rw.value("pose_error"));
    warp_tc.push_back(rw.value("tc"));

    const Run nm = ensure_run(cache, "no_mask", seed);
    mask_outside.push_back(pipeline::evaluate(bb, nm.model, nm.config, bench, nm.config.ablation).value("outside_mask_l1"));

    const Run nr = ensure_run(cache, "no_refine", seed);
    refine_perc.push_back(final_ma(nr.log, &pipeline::LossRecord::perceptual));
  }
  const double fp = median(full_pose), wp = median(warp_pose), ft = median(full_tc), wt = median(warp_tc);
  const double fo = median(full_outside), mo = median(mask_outside);
  const double fpe = median(full_perc), rpe = median(refine_perc);
  const bool pose = fp < wp, tc = ft < wt, outside = fo < mo, perc = fpe < rpe;
  auto mark = [](bool ok) { return ok ? "ok" : "FAIL"; };
  return {7, "training directionality", pose && tc && outside && perc,
          "pose error full " + fmt(fp) + " vs no_warp " + fmt(wp) + " [" + mark(pose) + "], TC full " + fmt(ft) +
              " vs no_warp " + fmt(wt) + " [" + mark(tc) + "], outside-mask L1 full " + fmt(fo) + " vs no_mask " +
              fmt(mo) + " [" + mark(outside) + "], final perceptual full " + fmt(fpe) + " vs no_refine " + fmt(rpe) +
              " [" + mark(perc) + "]; medians over " + std::to_string(kAblationSeeds) + " seeds"};
}

Outcome pim_convergence(const fs::path& cache) {
  std::vector<double> steps;
  std::string per_seed;
  for (int seed = 1; seed <= kFullSeeds; ++seed) {
    const Run nm = ensure_run(cache, "no_mask", seed);
    const Run full = ensure_run(cache, "full", seed);
    const double threshold = final_ma(nm.log, &pipeline::LossRecord::identity);
    const auto ma = pipeline::moving_average(series(full.log, &pipeline::LossRecord::identity), kWindow);
    double reached = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ma.size(); ++i)
      if (ma[i] <= threshold) {
        reached = full.log[i].step;
        break;
      }
    steps.push_back(reached);
    per_seed += (per_seed.empty() ? "" : ", ") + (std::isinf(reached) ? std::string("never") : fmt(reached)) +
                " (threshold " + fmt(threshold) + ")";
  }
  const double m = median(steps);
  return {8, "PIM convergence", m <= kConvergenceBudget,
          "median step to reach global-modulation identity loss " +
              (std::isinf(m) ? std::string("never") : fmt(m)) + " (budget " + std::to_string(kConvergenceBudget) +
              "); per seed: " + per_seed};
}

}  // namespace canonface::acceptance
