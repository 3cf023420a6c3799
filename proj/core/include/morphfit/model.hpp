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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace morphfit {

using Triangle = std::array<std::uint32_t, 3>;

// Linear morphable face model. Per-vertex arrays are flattened vertex-major
// (x0 y0 z0 x1 y1 z1 ...), so every basis has 3 * n_vertices rows.
//
// Synthesis multiplies each basis column by its scale before applying the
// coefficient (see decoder.hpp). A model whose bases are already scaled by
// their standard deviations stores scales of 1.
struct MorphableModel {
  Eigen::VectorXd mean_shape;
  Eigen::MatrixXd shape_basis;
  Eigen::MatrixXd expr_basis;
  Eigen::VectorXd mean_albedo;
  Eigen::MatrixXd albedo_basis;
  Eigen::VectorXd shape_scales;
  Eigen::VectorXd expr_scales;
  Eigen::VectorXd albedo_scales;
  std::vector<Triangle> triangles;
  std::vector<std::uint32_t> landmark_indices;

  int n_vertices() const { return static_cast<int>(mean_shape.size() / 3); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }
  int k_shape() const { return static_cast<int>(shape_basis.cols()); }
  int k_expr() const { return static_cast<int>(expr_basis.cols()); }
  int k_albedo() const { return static_cast<int>(albedo_basis.cols()); }
  int n_landmarks() const { return static_cast<int>(landmark_indices.size()); }

  friend bool operator==(const MorphableModel& a, const MorphableModel& b);
};

enum class Severity { kError, kWarning };

struct Diagnostic {
  Severity severity;
  std::string code;
  std::string message;
};

struct SyntheticModelOptions {
  int k_shape = 80;
  int k_expr = 64;
  int k_albedo = 80;
  int n_landmarks = 68;
};

// Returns every violated invariant (errors) plus allowed-but-suspicious
// conditions such as duplicate landmarks (warnings).
std::vector<Diagnostic> validate_model(const MorphableModel& model);
bool has_errors(const std::vector<Diagnostic>& report);

// Throws ValidationError listing the errors if the model is invalid.
void require_valid(const MorphableModel& model);

MorphableModel load_model(const std::filesystem::path& path);
void save_model(const MorphableModel& model, const std::filesystem::path& path);

// Procedural stand-in for a scanned face model: a face-like ellipsoid patch
// on an n_grid x n_grid vertex grid inside the unit sphere, random orthonormal
// bases whose columns are scaled by 0.05 / (1 + k), and landmarks chosen by
// farthest-point sampling. A pure function of (seed, n_grid, options).
MorphableModel gen_synthetic_model(std::uint64_t seed, int n_grid,
                                   const SyntheticModelOptions& options = {});

// Default scale sequence used by the generator.
Eigen::VectorXd decaying_scales(int count);

}  // namespace morphfit
