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

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "morphfit/face_params.hpp"
#include "morphfit/model.hpp"

namespace morphfit::testing {

// Shared synthetic model (seed 0) at the given grid size, built once.
const MorphableModel& synthetic_model(int n_grid = 16);

// Face code drawn around the default light with the given spread for the
// statistical blocks and small camera motion.
// Statistical blocks ~ N(0, spread^2), default light with small jitter, small pose.
FaceParams random_params(const ParamLayout& layout, std::uint64_t seed, double spread = 0.5);

// Every coordinate ~ N(0, sigma^2).
FaceParams gaussian_noise(const ParamLayout& layout, std::uint64_t seed, double sigma);

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace morphfit::testing
