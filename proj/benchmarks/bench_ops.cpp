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

#include <benchmark/benchmark.h>

#include "canonface/pipeline.h"

using namespace canonface;

namespace {

void BM_Conv2dForwardBackward(benchmark::State& state) {
  Rng rng(1);
  const int c = static_cast<int>(state.range(0));
  const ag::Var w = ag::parameter(randn({c, c, 3, 3}, rng, 0.1));
  const Tensor x = randn({6, c, 16, 16}, rng);
  for (auto _ : state) {
    const ag::Var xi(x, true);
    ag::backward(ag::sum(ag::conv2d(xi, w, ag::Var(), 1, 1)));
    benchmark::DoNotOptimize(xi.grad().data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8)->Arg(32);

void BM_GridSample3d(benchmark::State& state) {
  Rng rng(2);
  const motion::VolumeShape s{4, 8, 8};
  const Tensor vol = randn({6, 8, s.depth, s.height, s.width}, rng);
  const Tensor xs = randu({6, 10, 3}, rng, -0.6, 0.6);
  const Tensor xd = xs + randn({6, 10, 3}, rng, 0.05);
  const Tensor grid = motion::deformation(ag::constant(xs), ag::constant(xd), s).value();
  for (auto _ : state) {
    benchmark::DoNotOptimize(warp::grid_sample3d(ag::constant(vol), ag::constant(grid)).value().data());
  }
}
BENCHMARK(BM_GridSample3d);

void BM_PimStack(benchmark::State& state) {
  Rng rng(3);
  const pim::PimStack stack(8, 4, 4, 3, losses::AttributeProbe::kIdentityDim, rng);
  const Tensor vol = randn({6, 8, 4, 8, 8}, rng);
  const Tensor e = randn({6, losses::AttributeProbe::kIdentityDim}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(stack(ag::constant(vol), ag::constant(e)).volume.value().data());
  }
}
BENCHMARK(BM_PimStack);

void BM_TrainStep(benchmark::State& state) {
  pipeline::PipelineConfig cfg;
  Rng rng(cfg.backbone_seed);
  const pipeline::Backbone bb(cfg, rng);
  cfg.steps = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(pipeline::train(cfg, bb).log.back().total);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
