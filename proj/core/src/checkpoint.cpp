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

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "canonface/pipeline.h"

namespace canonface::pipeline {

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'F', 'C', 'K', 'P', 'T', '0', '1'};
constexpr char kBackboneMagic[8] = {'C', 'F', 'B', 'O', 'N', 'E', '0', '1'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : f_(path, std::ios::binary) {
    if (!f_) throw std::runtime_error("cannot write " + path.string());
  }
  template <class T>
  void pod(const T& v) {
    f_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const char* p, std::size_t n) { f_.write(p, static_cast<std::streamsize>(n)); }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) pod<std::int32_t>(d);
    bytes(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  }
  void params(const nn::NamedParams& p) {
    pod<std::uint64_t>(p.size());
    for (const auto& [name, v] : p) {
      str(name);
      tensor(v.value());
    }
  }
  void tensors(const std::vector<Tensor>& ts) {
    pod<std::uint64_t>(ts.size());
    for (const auto& t : ts) tensor(t);
  }
  void finish() {
    f_.flush();
    if (!f_) throw std::runtime_error("checkpoint write failed");
  }

 private:
  std::ofstream f_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : f_(path, std::ios::binary), path_(path.string()) {
    if (!f_) throw std::runtime_error("cannot read " + path.string());
  }
  template <class T>
  T pod() {
    T v{};
    f_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 26)) throw std::runtime_error(path_ + ": corrupt string length");
    std::string s(n, '\0');
    f_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  Tensor tensor() {
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) throw std::runtime_error(path_ + ": corrupt tensor rank");
    Shape s(rank);
    for (auto& d : s) {
      d = pod<std::int32_t>();
      if (d < 0) throw std::runtime_error(path_ + ": corrupt tensor shape");
    }
    Tensor t(s);
    f_.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    check();
    return t;
  }
  std::map<std::string, Tensor> params() {
    std::map<std::string, Tensor> m;
    const auto n = pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string name = str();
      m.emplace(std::move(name), tensor());
    }
    return m;
  }
  std::vector<Tensor> tensors() {
    const auto n = pod<std::uint64_t>();
    std::vector<Tensor> out;
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(tensor());
    return out;
  }
  void magic(const char (&want)[8]) {
    char m[8];
    f_.read(m, 8);
    check();
    if (std::memcmp(m, want, 8) != 0) throw std::runtime_error(path_ + ": not a canonface file of the expected kind");
    const auto v = pod<std::uint32_t>();
    if (v != kFormatVersion) throw std::runtime_error(path_ + ": unsupported format version " + std::to_string(v));
  }

 private:
  void check() {
    if (!f_) throw std::runtime_error(path_ + ": truncated file");
  }
  std::ifstream f_;
  std::string path_;
};

void assign(const nn::NamedParams& dst, const std::map<std::string, Tensor>& src, const std::string& what) {
  if (dst.size() != src.size()) throw std::runtime_error(what + ": parameter count mismatch");
  for (const auto& [name, v] : dst) {
    const auto it = src.find(name);
    if (it == src.end()) throw std::runtime_error(what + ": missing parameter " + name);
    if (it->second.shape() != v.value().shape()) {
      throw std::runtime_error(what + ": shape mismatch for " + name + ": " + shape_str(it->second.shape()) + " vs " +
                               shape_str(v.value().shape()));
    }
    Var p = v;
    p.mutable_value() = it->second;
  }
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> snapshot(const nn::NamedParams& params) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, v] : params) out.emplace_back(name, v.value());
  return out;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kCheckpointMagic, 8);
  w.pod(kFormatVersion);
  w.str(ck.config.to_text());
  w.pod<std::int64_t>(ck.state.step);
  w.params(ck.backbone.params());
  w.params(ck.state.model.generator_params());
  w.params(ck.state.model.discriminator_params());
  w.pod<std::int64_t>(ck.state.g_t);
  w.tensors(ck.state.g_m);
  w.tensors(ck.state.g_v);
  w.pod<std::int64_t>(ck.state.d_t);
  w.tensors(ck.state.d_m);
  w.tensors(ck.state.d_v);
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  r.magic(kCheckpointMagic);
  Checkpoint ck;
  ck.config = PipelineConfig::parse(r.str());
  ck.state.step = static_cast<int>(r.pod<std::int64_t>());
  Rng rng(0);
  ck.backbone = Backbone(ck.config, rng);
  ck.state.model = SwapModel(ck.config, rng);
  assign(ck.backbone.params(), r.params(), "backbone");
  assign(ck.state.model.generator_params(), r.params(), "generator");
  assign(ck.state.model.discriminator_params(), r.params(), "discriminator");
  ck.state.g_t = r.pod<std::int64_t>();
  ck.state.g_m = r.tensors();
  ck.state.g_v = r.tensors();
  ck.state.d_t = r.pod<std::int64_t>();
  ck.state.d_m = r.tensors();
  ck.state.d_v = r.tensors();
  return ck;
}

void save_backbone(const Backbone& bb, const PipelineConfig& cfg, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kBackboneMagic, 8);
  w.pod(kFormatVersion);
  w.str(cfg.to_text());
  w.params(bb.params());
  w.finish();
}

Backbone load_backbone(const PipelineConfig& cfg, const std::filesystem::path& path) {
  Reader r(path);
  r.magic(kBackboneMagic);
  const PipelineConfig stored = PipelineConfig::parse(r.str());
  if (stored.image_size != cfg.image_size || stored.channels != cfg.channels || stored.depth != cfg.depth ||
      stored.keypoints != cfg.keypoints) {
    throw std::runtime_error(path.string() + ": backbone was trained for a different configuration");
  }
  Rng rng(0);
  Backbone bb(cfg, rng);
  assign(bb.params(), r.params(), "backbone");
  return bb;
}

}  // namespace canonface::pipeline
