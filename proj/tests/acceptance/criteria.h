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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace canonface::acceptance {

struct Outcome {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string detail;
};

// Fast criteria run from scratch in a few minutes.
Outcome gradient_suite();
Outcome exactness_suite();
Outcome modulation_properties();
Outcome metric_oracles();
Outcome round_trip_warping();
Outcome sampling_protocol();
/// Runs the training command twice as separate processes.
Outcome reproducibility(const std::string& self_exe, const std::filesystem::path& work_dir);
/// Body of one reproducibility process.
void reproducibility_run(const std::filesystem::path& out_dir);

// Long criteria share pretrained backbones and training runs cached under
// `cache_dir`; a cached entry is reused only when its stored config matches.
Outcome canonical_decoupling(const std::filesystem::path& cache_dir);
Outcome training_directionality(const std::filesystem::path& cache_dir);
Outcome pim_convergence(const std::filesystem::path& cache_dir);
/// Trains every cached run the long criteria need.
void prepare_long(const std::filesystem::path& cache_dir);

}  // namespace canonface::acceptance
