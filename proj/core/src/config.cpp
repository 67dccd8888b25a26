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

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "canonface/pipeline.h"

namespace canonface::pipeline {

std::string Ablation::name() const {
  if (!no_warp && !no_mask && !no_refine) return "full";
  std::string s;
  auto add = [&](const char* n) { s += (s.empty() ? "" : "+") + std::string(n); };
  if (no_warp) add("no_warp");
  if (no_mask) add("no_mask");
  if (no_refine) add("no_refine");
  return s;
}

Ablation Ablation::parse(const std::string& name) {
  Ablation a;
  if (name == "full" || name.empty()) return a;
  std::stringstream ss(name);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "no_warp") a.no_warp = true;
    else if (part == "no_mask") a.no_mask = true;
    else if (part == "no_refine") a.no_refine = true;
    else throw std::invalid_argument("unknown ablation '" + part + "'");
  }
  return a;
}

void PipelineConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw std::invalid_argument(std::string("config: ") + what + " must be positive");
  };
  positive(image_size, "image_size");
  positive(channels, "channels");
  positive(depth, "depth");
  positive(pim_blocks, "pim_blocks");
  positive(batch, "batch");
  positive(train_identities, "train_identities");
  positive(backbone.batch, "backbone.batch");
  if (steps < 0) throw std::invalid_argument("config: steps must be non-negative");
  if (image_size % 8 != 0) throw std::invalid_argument("config: image_size must be a multiple of 8");
  if (depth % 2 != 0) throw std::invalid_argument("config: depth must be even for the refiner");
  if (keypoints < 3 || keypoints > synth::kMaxKeypoints) throw std::invalid_argument("config: keypoints out of range");
  if (pim_kernel % 2 == 0 || pim_kernel <= 0) throw std::invalid_argument("config: pim_kernel must be odd");
  if (!(sigma > 0)) throw std::invalid_argument("config: sigma must be positive");
  if (!(same_identity_probability >= 0 && same_identity_probability <= 1)) {
    throw std::invalid_argument("config: same_identity_probability must lie in [0, 1]");
  }
  if (!(r1_gamma >= 0)) throw std::invalid_argument("config: r1_gamma must be non-negative");
  if (!(optimizer.lr > 0) || !(backbone.lr > 0)) throw std::invalid_argument("config: learning rates must be positive");
  weights.validate();
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw std::invalid_argument("config: bad value for " + key + ": '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("config: " + key + " must be true or false");
}

// Binds each key to a field of the config.
std::map<std::string, std::function<void(const std::string&)>> setters(PipelineConfig& c) {
  std::map<std::string, std::function<void(const std::string&)>> m;
  auto i = [&m](const std::string& k, int& f) { m[k] = [&f, k](const std::string& v) { f = parse_number<int>(k, v); }; };
  auto d = [&m](const std::string& k, double& f) {
    m[k] = [&f, k](const std::string& v) { f = parse_number<double>(k, v); };
  };
  auto b = [&m](const std::string& k, bool& f) { m[k] = [&f, k](const std::string& v) { f = parse_bool(k, v); }; };
  auto u = [&m](const std::string& k, std::uint64_t& f) {
    m[k] = [&f, k](const std::string& v) { f = parse_number<std::uint64_t>(k, v); };
  };
  i("image_size", c.image_size);
  i("channels", c.channels);
  i("depth", c.depth);
  i("keypoints", c.keypoints);
  i("pim_blocks", c.pim_blocks);
  i("pim_kernel", c.pim_kernel);
  d("sigma", c.sigma);
  i("batch", c.batch);
  i("steps", c.steps);
  d("same_identity_probability", c.same_identity_probability);
  d("r1_gamma", c.r1_gamma);
  u("seed", c.seed);
  u("backbone_seed", c.backbone_seed);
  i("train_identities", c.train_identities);
  d("weights.identity", c.weights.identity);
  d("weights.perceptual", c.weights.perceptual);
  d("weights.motion", c.weights.motion);
  d("weights.reconstruction", c.weights.reconstruction);
  d("weights.adversarial", c.weights.adversarial);
  d("weights.mask", c.weights.mask);
  d("optimizer.lr", c.optimizer.lr);
  d("optimizer.beta1", c.optimizer.beta1);
  d("optimizer.beta2", c.optimizer.beta2);
  d("optimizer.eps", c.optimizer.eps);
  d("optimizer.weight_decay", c.optimizer.weight_decay);
  b("ablation.no_warp", c.ablation.no_warp);
  b("ablation.no_mask", c.ablation.no_mask);
  b("ablation.no_refine", c.ablation.no_refine);
  i("backbone.motion_steps", c.backbone.motion_steps);
  i("backbone.probe_steps", c.backbone.probe_steps);
  i("backbone.autoencoder_steps", c.backbone.autoencoder_steps);
  i("backbone.batch", c.backbone.batch);
  d("backbone.lr", c.backbone.lr);
  return m;
}

}  // namespace

std::string PipelineConfig::to_text() const {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "image_size = " << image_size << "\n"
    << "channels = " << channels << "\n"
    << "depth = " << depth << "\n"
    << "keypoints = " << keypoints << "\n"
    << "pim_blocks = " << pim_blocks << "\n"
    << "pim_kernel = " << pim_kernel << "\n"
    << "sigma = " << fmt(sigma) << "\n"
    << "batch = " << batch << "\n"
    << "steps = " << steps << "\n"
    << "same_identity_probability = " << fmt(same_identity_probability) << "\n"
    << "r1_gamma = " << fmt(r1_gamma) << "\n"
    << "seed = " << seed << "\n"
    << "backbone_seed = " << backbone_seed << "\n"
    << "train_identities = " << train_identities << "\n\n"
    << "[weights]\n"
    << "identity = " << fmt(weights.identity) << "\n"
    << "perceptual = " << fmt(weights.perceptual) << "\n"
    << "motion = " << fmt(weights.motion) << "\n"
    << "reconstruction = " << fmt(weights.reconstruction) << "\n"
    << "adversarial = " << fmt(weights.adversarial) << "\n"
    << "mask = " << fmt(weights.mask) << "\n\n"
    << "[optimizer]\n"
    << "lr = " << fmt(optimizer.lr) << "\n"
    << "beta1 = " << fmt(optimizer.beta1) << "\n"
    << "beta2 = " << fmt(optimizer.beta2) << "\n"
    << "eps = " << fmt(optimizer.eps) << "\n"
    << "weight_decay = " << fmt(optimizer.weight_decay) << "\n\n"
    << "[ablation]\n"
    << "no_warp = " << b(ablation.no_warp) << "\n"
    << "no_mask = " << b(ablation.no_mask) << "\n"
    << "no_refine = " << b(ablation.no_refine) << "\n\n"
    << "[backbone]\n"
    << "motion_steps = " << backbone.motion_steps << "\n"
    << "probe_steps = " << backbone.probe_steps << "\n"
    << "autoencoder_steps = " << backbone.autoencoder_steps << "\n"
    << "batch = " << backbone.batch << "\n"
    << "lr = " << fmt(backbone.lr) << "\n";
  return o.str();
}

PipelineConfig PipelineConfig::parse(const std::string& text) {
  PipelineConfig c;
  auto set = setters(c);
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw std::invalid_argument("config line " + std::to_string(lineno) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!section.empty()) key = section + "." + key;
    const auto it = set.find(key);
    if (it == set.end()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key " + key);
    it->second(value);
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

}  // namespace canonface::pipeline
