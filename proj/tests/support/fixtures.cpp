// Copyright 2026 The morphfit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fixtures.hpp"

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>

#include "morphfit/scene.hpp"

namespace morphfit::testing {

const MorphableModel& synthetic_model(int n_grid) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<MorphableModel>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n_grid];
  if (!slot) slot = std::make_unique<MorphableModel>(gen_synthetic_model(0, n_grid));
  return *slot;
}

FaceParams random_params(const ParamLayout& layout, std::uint64_t seed, double spread) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  auto p = FaceParams::zeros(layout);
  for (auto* b : {&p.alpha, &p.delta, &p.gamma})
    for (auto& v : *b) v = spread * n(rng);
  p.phi = default_illumination();
  for (auto& v : p.phi) v += 0.1 * n(rng);
  for (int i = 0; i < 3; ++i) p.cam[i] = 0.15 * n(rng);
  for (int i = 3; i < 6; ++i) p.cam[i] = 0.05 * n(rng);
  return p;
}

FaceParams gaussian_noise(const ParamLayout& layout, std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  Eigen::VectorXd flat(layout.total());
  for (auto& v : flat) v = n(rng);
  return FaceParams::unflatten(layout, flat);
}

TempDir::TempDir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  for (;;) {
    path_ = std::filesystem::temp_directory_path() /
            ("morphfit-" + tag + "-" + std::to_string(rng() % 1000000000ULL));
    if (std::filesystem::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace morphfit::testing
