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

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "canonface/synthworld.h"

namespace canonface::synth {

namespace {

using nlohmann::json;

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu.png", i);
  return buf;
}

json latents_to_json(const SceneLatents& l) {
  json j;
  j["identity"] = l.identity_code;
  j["rotation"] = std::vector<double>(l.pose.rotation.data(), l.pose.rotation.data() + 9);
  j["translation"] = {l.pose.translation(0), l.pose.translation(1), l.pose.translation(2)};
  j["eye_aperture"] = l.expression.eye_aperture;
  j["mouth_open"] = l.expression.mouth_open;
  j["gaze_yaw"] = l.expression.gaze_yaw;
  j["gaze_pitch"] = l.expression.gaze_pitch;
  j["seed"] = l.seed;
  return j;
}

SceneLatents latents_from_json(const json& j) {
  SceneLatents l;
  l.identity_code = j.at("identity").get<std::vector<double>>();
  const auto r = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) throw std::runtime_error("clip metadata: malformed pose");
  l.pose.rotation = Eigen::Map<const Mat3>(r.data());
  l.pose.translation = Vec3(t[0], t[1], t[2]);
  l.expression.eye_aperture = j.at("eye_aperture").get<double>();
  l.expression.mouth_open = j.at("mouth_open").get<double>();
  l.expression.gaze_yaw = j.at("gaze_yaw").get<double>();
  l.expression.gaze_pitch = j.at("gaze_pitch").get<double>();
  l.seed = j.at("seed").get<std::uint64_t>();
  return l;
}

}  // namespace

void save_png(const Tensor& image, const std::filesystem::path& path) {
  if (image.rank() != 3 || image.dim(0) != 3) throw std::invalid_argument("save_png expects a [3, H, W] tensor");
  const int h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> rgb(static_cast<std::size_t>(3 * h * w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at({c, y, x}), 0.0, 1.0);
        rgb[static_cast<std::size_t>((y * w + x) * 3 + c)] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, rgb.data(), 0, nullptr)) {
    throw std::runtime_error("failed to write " + path.string() + ": " + img.message);
  }
}

Tensor load_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw std::runtime_error("failed to read " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgb.data(), 0, nullptr)) {
    throw std::runtime_error("failed to decode " + path.string() + ": " + img.message);
  }
  const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
  Tensor t(Shape{3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) t.at({c, y, x}) = rgb[static_cast<std::size_t>((y * w + x) * 3 + c)] / 255.0;
  return t;
}

void save_clip(const Clip& clip, const std::filesystem::path& dir) {
  clip.validate();
  std::filesystem::create_directories(dir);
  json meta;
  meta["frames"] = clip.size();
  meta["height"] = clip.frames.front().dim(1);
  meta["width"] = clip.frames.front().dim(2);
  meta["latents"] = json::array();
  for (std::size_t i = 0; i < clip.size(); ++i) {
    save_png(clip.frames[i], dir / frame_name(i));
    meta["latents"].push_back(latents_to_json(clip.latents_per_frame[i]));
  }
  meta["audio"] = clip.audio_latents;
  std::ofstream os(dir / "meta.json");
  if (!os) throw std::runtime_error("cannot write " + (dir / "meta.json").string());
  os << meta.dump(1) << '\n';
}

Clip load_clip(const std::filesystem::path& dir) {
  std::ifstream is(dir / "meta.json");
  if (!is) throw std::runtime_error("missing clip metadata in " + dir.string());
  const json meta = json::parse(is);
  const auto n = meta.at("frames").get<std::size_t>();
  Clip clip;
  for (std::size_t i = 0; i < n; ++i) {
    clip.frames.push_back(load_png(dir / frame_name(i)));
    clip.latents_per_frame.push_back(latents_from_json(meta.at("latents").at(i)));
  }
  clip.audio_latents = meta.at("audio").get<std::vector<std::vector<double>>>();
  clip.validate();
  return clip;
}

}  // namespace canonface::synth
