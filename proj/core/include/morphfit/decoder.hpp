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
#include <span>

#include <Eigen/Core>

#include "morphfit/model.hpp"

namespace morphfit {

// Linear synthesis of geometry and albedo, per-vertex normals and landmark
// selection. Positions, albedo and normals are 3 x n_vertices matrices whose
// column-major storage matches the flattened model layout.

// mean_shape + shape_basis (shape_scales .* alpha) + expr_basis (expr_scales .* delta)
Eigen::Matrix3Xd decode_geometry(const MorphableModel& model,
                                 const Eigen::VectorXd& alpha,
                                 const Eigen::VectorXd& delta);

// mean_albedo + albedo_basis (albedo_scales .* gamma). Not clamped.
Eigen::Matrix3Xd decode_albedo(const MorphableModel& model, const Eigen::VectorXd& gamma);

struct GeometryGradient {
  Eigen::VectorXd alpha;
  Eigen::VectorXd delta;
};

// Pulls a position adjoint back onto (alpha, delta).
GeometryGradient decode_geometry_backward(const MorphableModel& model,
                                          const Eigen::Matrix3Xd& d_positions);
Eigen::VectorXd decode_albedo_backward(const MorphableModel& model,
                                       const Eigen::Matrix3Xd& d_albedo);

// Area-weighted average of incident face normals, normalized. Each triangle
// contributes the unnormalized cross product (v1 - v0) x (v2 - v0), so
// degenerate triangles add nothing. Vertices with a zero sum get (0, 0, 1).
Eigen::Matrix3Xd vertex_normals(const Eigen::Matrix3Xd& positions,
                                std::span<const Triangle> triangles);

// Adjoint of vertex_normals: maps d(loss)/d(normals) to d(loss)/d(positions).
// Vertices that received the (0, 0, 1) fallback pass no gradient.
Eigen::Matrix3Xd vertex_normals_backward(const Eigen::Matrix3Xd& positions,
                                         std::span<const Triangle> triangles,
                                         const Eigen::Matrix3Xd& d_normals);

// Gathers the columns at the given vertex indices, preserving order.
Eigen::Matrix3Xd select_landmarks_3d(const Eigen::Matrix3Xd& positions,
                                     std::span<const std::uint32_t> indices);

}  // namespace morphfit
