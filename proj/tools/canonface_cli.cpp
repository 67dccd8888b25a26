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

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "canonface/pipeline.h"

namespace fs = std::filesystem;
using namespace canonface;
using namespace canonface::pipeline;

namespace {

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

int cmd_train(const std::string& config_path, const std::string& out, const std::string& backbone_path) {
  const PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
  fs::create_directories(out);
  Backbone bb;
  if (!backbone_path.empty() && fs::exists(backbone_path)) {
    bb = load_backbone(cfg, backbone_path);
  } else {
    std::cerr << "pretraining backbone\n";
    bb = pretrain_backbone(cfg);
    if (!backbone_path.empty()) save_backbone(bb, cfg, backbone_path);
  }
  std::ofstream log(fs::path(out) / "loss.log");
  log << loss_log_header() << "\n";
  TrainHooks hooks;
  hooks.on_step = [&](const LossRecord& r) {
    log << format_loss_record(r) << "\n";
    if (r.step % 100 == 0) std::cerr << "step " << r.step << " total " << r.total << "\n";
  };
  const TrainState st = train(cfg, bb, hooks, fs::path(out) / "snapshot");
  write_file(fs::path(out) / "config.toml", cfg.to_text());
  save_checkpoint({cfg, bb, st}, fs::path(out) / "model.ckpt");
  return 0;
}

int cmd_swap(const std::string& ckpt, const std::string& source, const std::string& target, const std::string& out,
             const std::string& ablation) {
  const Checkpoint ck = load_checkpoint(ckpt);
  const Ablation ab = ablation.empty() ? ck.config.ablation : Ablation::parse(ablation);
  const synth::Clip clip = synth::load_clip(target);
  const Tensor src = synth::load_png(source);
  synth::save_clip(swap_clip(ck.backbone, ck.state.model, ck.config, src, clip, ab), out);
  return 0;
}

int cmd_animate(const std::string& ckpt, const std::string& source, const std::string& target, const std::string& out,
                bool shape_transfer) {
  const Checkpoint ck = load_checkpoint(ckpt);
  const synth::Clip clip = synth::load_clip(source);
  const Tensor tgt = synth::load_png(target);
  synth::save_clip(animate_clip(ck.backbone, ck.state.model, ck.config, clip, tgt, shape_transfer), out);
  return 0;
}

int cmd_eval(const std::vector<std::string>& ckpts, const std::string& bench_dir, const std::string& out) {
  const auto bench = load_benchmark(bench_dir);
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& path : ckpts) {
    const Checkpoint ck = load_checkpoint(path);
    const EvalReport r = evaluate(ck.backbone, ck.state.model, ck.config, bench, ck.config.ablation);
    nlohmann::json j = nlohmann::json::parse(r.to_json());
    j["checkpoint"] = path;
    reports.push_back(j);
    std::cout << r.ablation << " (" << path << ")\n";
    for (const auto& rec : r.records) std::cout << "  " << rec.name << " = " << rec.value << "\n";
  }
  if (!out.empty()) write_file(out, (reports.size() == 1 ? reports[0] : reports).dump(2) + "\n");
  return 0;
}

int cmd_viz(const std::string& ckpt, const std::vector<std::string>& clip_dirs, const std::string& out) {
  const Checkpoint ck = load_checkpoint(ckpt);
  std::vector<synth::Clip> clips;
  for (const auto& d : clip_dirs) clips.push_back(synth::load_clip(d));
  const CanonicalViz viz = visualize_canonical(ck.backbone, ck.config, clips);
  fs::create_directories(out);
  auto gray = [](const Tensor& m) {
    const int h = m.dim(0), w = m.dim(1);
    Tensor img(Shape{3, h, w});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.at({c, y, x}) = m.at({y, x});
    return img;
  };
  nlohmann::json j{{"canonical_score", viz.canonical_score},
                   {"aligned_score", viz.aligned_score},
                   {"clips", clips.size()}};
  for (const auto& part : viz.parts) {
    // Side by side: aligned original space on the left, canonical on the right.
    const int s = part.canonical_mean.dim(0);
    Tensor pair(Shape{s, 2 * s});
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        pair.at({y, x}) = part.aligned_mean.at({y, x});
        pair.at({y, s + x}) = part.canonical_mean.at({y, x});
      }
    synth::save_png(gray(pair), fs::path(out) / (part.name + ".png"));
    j["parts"][part.name] = {{"canonical_score", part.canonical_score}, {"aligned_score", part.aligned_score}};
  }
  write_file(fs::path(out) / "scores.json", j.dump(2) + "\n");
  std::cout << "canonical " << viz.canonical_score << " aligned " << viz.aligned_score << "\n";
  return 0;
}

int cmd_make_bench(const std::string& config_path, int pairs, int frames, std::uint64_t seed, bool same,
                   const std::string& out) {
  const PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
  save_benchmark(make_benchmark(cfg, pairs, frames, seed, same), out);
  return 0;
}

int cmd_make_clip(int frames, int size, std::uint64_t seed, const std::string& out, const std::string& still) {
  Rng rng(seed);
  const auto id = synth::random_identity(rng);
  const synth::Clip clip = synth::make_clip(id, synth::random_trajectory(rng, frames), true, size, rng());
  synth::save_clip(clip, out);
  if (!still.empty()) synth::save_png(clip.frames.front(), still);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"canonface: canonical-space video face swapping"};
  app.require_subcommand(1);

  std::string config, out, backbone, ckpt, source, target, bench, ablation, still;
  std::vector<std::string> ckpts, clip_dirs;
  bool shape_transfer = false, same = false;
  int pairs = 8, frames = 32, size = 32;
  std::uint64_t seed = 1;

  auto* train_cmd = app.add_subcommand("train", "Train a swap model");
  train_cmd->add_option("--config", config, "Config file (key = value lines)");
  train_cmd->add_option("--out", out, "Output directory")->required();
  train_cmd->add_option("--backbone", backbone, "Pretrained backbone file, created if missing");

  auto* swap_cmd = app.add_subcommand("swap", "Swap a source face into a target clip");
  swap_cmd->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  swap_cmd->add_option("--source", source, "Source image (PNG)")->required()->check(CLI::ExistingFile);
  swap_cmd->add_option("--target", target, "Target clip directory")->required()->check(CLI::ExistingDirectory);
  swap_cmd->add_option("--out", out, "Output clip directory")->required();
  swap_cmd->add_option("--ablation", ablation, "Override the checkpoint's ablation");

  auto* anim_cmd = app.add_subcommand("animate", "Drive a still face with a source clip");
  anim_cmd->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  anim_cmd->add_option("--source", source, "Driving clip directory")->required()->check(CLI::ExistingDirectory);
  anim_cmd->add_option("--target", target, "Still image (PNG)")->required()->check(CLI::ExistingFile);
  anim_cmd->add_option("--out", out, "Output clip directory")->required();
  anim_cmd->add_flag("--shape-transfer", shape_transfer, "Also transfer the source face shape");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints on a benchmark");
  eval_cmd->add_option("--checkpoint", ckpts, "Checkpoint; repeat for an ablation grid")->required();
  eval_cmd->add_option("--bench", bench, "Benchmark directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--out", out, "JSON report");

  auto* viz_cmd = app.add_subcommand("viz-canonical", "Average face masks in canonical and aligned space");
  viz_cmd->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  viz_cmd->add_option("--clips", clip_dirs, "Clip directories")->required();
  viz_cmd->add_option("--out", out, "Output directory")->required();

  auto* bench_cmd = app.add_subcommand("make-bench", "Render a held-out benchmark");
  bench_cmd->add_option("--config", config);
  bench_cmd->add_option("--pairs", pairs)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--frames", frames)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", seed);
  bench_cmd->add_flag("--same-identity", same, "Source and target share the identity");
  bench_cmd->add_option("--out", out)->required();

  auto* clip_cmd = app.add_subcommand("make-clip", "Render a random synthetic clip");
  clip_cmd->add_option("--frames", frames)->check(CLI::PositiveNumber);
  clip_cmd->add_option("--size", size)->check(CLI::Range(32, 1024));
  clip_cmd->add_option("--seed", seed);
  clip_cmd->add_option("--out", out)->required();
  clip_cmd->add_option("--still", still, "Also write the first frame to this PNG");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return cmd_train(config, out, backbone);
    if (*swap_cmd) return cmd_swap(ckpt, source, target, out, ablation);
    if (*anim_cmd) return cmd_animate(ckpt, source, target, out, shape_transfer);
    if (*eval_cmd) return cmd_eval(ckpts, bench, out);
    if (*viz_cmd) return cmd_viz(ckpt, clip_dirs, out);
    if (*bench_cmd) return cmd_make_bench(config, pairs, frames, seed, same, out);
    if (*clip_cmd) return cmd_make_clip(frames, size, seed, out, still);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
