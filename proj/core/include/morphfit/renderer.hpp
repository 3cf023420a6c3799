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
#include <span>
#include <vector>

#include <Eigen/Core>

#include "morphfit/face_params.hpp"
#include "morphfit/image.hpp"
#include "morphfit/model.hpp"
#include "morphfit/scene.hpp"

namespace morphfit {

// Differentiable software renderer.
//
// Forward: decode geometry and albedo, compute vertex normals, rotate them
// into camera space, project orthographically, rasterize with a hard
// z-buffer, interpolate albedo and normal with the pixel's barycentric
// weights (renormalizing the normal), shade with SH lighting and clamp to
// [0, 1]. Uncovered pixels are black.
//
// Rasterization samples pixel centers (i + 0.5, j + 0.5). A pixel belongs to
// a triangle when it is strictly inside, or on an edge that is a top or left
// edge under the top-left rule. Among covering triangles the one with the
// greatest interpolated depth wins; equal depths go to the lower triangle
// index. Triangles are double sided and zero-area triangles are skipped.
//
// Backward ("frozen visibility"): the per-pixel triangle id and barycentric
// weights are constants of the forward pass. Gradients reach the parameters
// only through the interpolated vertex attributes: albedo (gamma), camera
// space normals (alpha, delta and the rotation angles) and the SH
// coefficients (phi). The derivative of the barycentric weights with respect
// to screen positions is not propagated, so tx, ty and log_scale receive no
// gradient from image-space losses and coverage changes are invisible.
// Pixels whose unclamped color lies outside [0, 1] pass no gradient.

inline constexpr std::int32_t kNoTriangle = -1;

struct Rasterization {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> coverage;
  std::vector<double> depth;
  std::vector<std::int32_t> tri_id;
  std::vector<std::array<double, 3>> bary;  // in the triangle's vertex order
};

struct RenderOutput {
  Image color;
  std::vector<std::uint8_t> coverage;
  std::vector<double> depth;
  std::vector<std::int32_t> tri_id;
  std::vector<std::array<double, 3>> bary;
};

struct RenderOptions {
  int threads = 1;
};

Rasterization rasterize(std::span<const ScreenVertex> screen,
                        std::span<const Triangle> triangles, int width, int height,
                        const RenderOptions& options = {});

// Intermediate quantities of one forward pass, reused by the backward pass.
struct RenderState {
  int width = 0;
  int height = 0;
  Eigen::Matrix3Xd positions;
  Eigen::Matrix3Xd albedo;
  Eigen::Matrix3Xd normals;      // model space
  Eigen::Matrix3Xd normals_cam;  // rotated into camera space
  std::vector<ScreenVertex> screen;
  std::vector<double> unclamped;  // H x W x 3 pre-clamp color
  RenderOutput output;
};

RenderState render_state(const MorphableModel& model, const FaceParams& params, int width,
                         int height, const RenderOptions& options = {});

RenderOutput render(const MorphableModel& model, const FaceParams& params, int width,
                    int height, const RenderOptions& options = {});

// Shades the given visibility (tri_id + barycentrics) with the attributes
// decoded from params, without rasterizing again. Returns the unclamped
// H x W x 3 color; uncovered pixels are zero.
Image shade_visibility(const MorphableModel& model, const FaceParams& params,
                       const RenderOutput& visibility, const RenderOptions& options = {});

// Gradient of L = sum(adjoint .* color) with respect to params.
FaceParams render_backward(const MorphableModel& model, const FaceParams& params,
                           const RenderState& state, const Image& adjoint,
                           const RenderOptions& options = {});
FaceParams render_backward(const MorphableModel& model, const FaceParams& params,
                           int width, int height, const Image& adjoint,
                           const RenderOptions& options = {});

// Finite-difference check of render_backward.
//
// For every coordinate of the requested blocks the parameters are perturbed
// by +-h, with h = epsilon for phi and cam and epsilon / s_k^2 for the
// statistical coefficients (so the decoded mesh or albedo moves by about
// epsilon; a plain epsilon step there is swamped by round-off). Pixels whose triangle id changes under either perturbation
// (occlusion and silhouette boundaries) or whose color crosses a clamp limit
// are masked out for the whole block. The numeric derivative shades the
// unperturbed visibility with the perturbed parameters, which is the function
// render_backward differentiates. The scalar is sum(adjoint .* color) with a
// seeded uniform(-1, 1) adjoint.
struct GradcheckOptions {
  std::vector<ParamBlock> blocks;
  double tolerance = 1e-4;
  double epsilon = 1e-4;
  // Coordinates whose analytic and numeric values are both below this
  // magnitude are reported with zero relative error.
  double absolute_floor = 1e-9;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct CoordinateCheck {
  ParamBlock block;
  int index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool pass = false;
};

struct BlockCheck {
  ParamBlock block;
  double max_rel_error = 0.0;
  int masked_pixels = 0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<CoordinateCheck> coordinates;
  std::vector<BlockCheck> blocks;
  bool pass = false;
};

GradcheckReport gradcheck(const MorphableModel& model, const FaceParams& params, int width,
                          int height, const GradcheckOptions& options);

}  // namespace morphfit
