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

#include "morphfit/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "morphfit/decoder.hpp"
#include "morphfit/error.hpp"
#include "morphfit/parallel.hpp"

namespace morphfit {

namespace {

struct TriangleSetup {
  // Screen positions in a positively oriented order; perm maps the oriented
  // slot back to the triangle's own vertex slot.
  std::array<double, 3> x, y, z;
  std::array<int, 3> perm;
  std::array<bool, 3> top_left;  // edge opposite oriented vertex i
  double area2 = 0.0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds
};

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// With positive orientation in the y-down frame, an edge a->b is a top edge
// when horizontal and running in +x, and a left edge when running upward.
bool is_top_left(double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

bool setup_triangle(std::span<const ScreenVertex> screen, const Triangle& tri, int width,
                    int height, TriangleSetup& s) {
  s.perm = {0, 1, 2};
  for (int k = 0; k < 3; ++k) {
    const auto& v = screen[tri[static_cast<std::size_t>(k)]];
    s.x[k] = v.x_pix;
    s.y[k] = v.y_pix;
    s.z[k] = v.depth;
  }
  s.area2 = edge(s.x[0], s.y[0], s.x[1], s.y[1], s.x[2], s.y[2]);
  if (!(s.area2 != 0.0) || !std::isfinite(s.area2)) return false;
  if (s.area2 < 0.0) {
    std::swap(s.x[1], s.x[2]);
    std::swap(s.y[1], s.y[2]);
    std::swap(s.z[1], s.z[2]);
    std::swap(s.perm[1], s.perm[2]);
    s.area2 = -s.area2;
  }
  s.top_left[0] = is_top_left(s.x[1], s.y[1], s.x[2], s.y[2]);
  s.top_left[1] = is_top_left(s.x[2], s.y[2], s.x[0], s.y[0]);
  s.top_left[2] = is_top_left(s.x[0], s.y[0], s.x[1], s.y[1]);

  const double min_x = std::min({s.x[0], s.x[1], s.x[2]});
  const double max_x = std::max({s.x[0], s.x[1], s.x[2]});
  const double min_y = std::min({s.y[0], s.y[1], s.y[2]});
  const double max_y = std::max({s.y[0], s.y[1], s.y[2]});
  // Pixel centers i + 0.5 inside [min, max].
  s.x0 = static_cast<int>(std::max(0.0, std::ceil(min_x - 0.5)));
  s.x1 = static_cast<int>(std::min<double>(width - 1, std::floor(max_x - 0.5)));
  s.y0 = static_cast<int>(std::max(0.0, std::ceil(min_y - 0.5)));
  s.y1 = static_cast<int>(std::min<double>(height - 1, std::floor(max_y - 0.5)));
  return s.x0 <= s.x1 && s.y0 <= s.y1;
}

void rasterize_rows(std::span<const Triangle> triangles, const std::vector<TriangleSetup>& setups,
                    const std::vector<std::uint8_t>& valid, int row_begin, int row_end,
                    Rasterization& r) {
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    if (!valid[t]) continue;
    const auto& s = setups[t];
    const int y_lo = std::max(s.y0, row_begin);
    const int y_hi = std::min(s.y1, row_end - 1);
    for (int py = y_lo; py <= y_hi; ++py) {
      const double cy = py + 0.5;
      for (int px = s.x0; px <= s.x1; ++px) {
        const double cx = px + 0.5;
        const std::array<double, 3> w = {
            edge(s.x[1], s.y[1], s.x[2], s.y[2], cx, cy),
            edge(s.x[2], s.y[2], s.x[0], s.y[0], cx, cy),
            edge(s.x[0], s.y[0], s.x[1], s.y[1], cx, cy)};
        bool inside = true;
        for (int k = 0; k < 3 && inside; ++k) {
          inside = w[k] > 0.0 || (w[k] == 0.0 && s.top_left[k]);
        }
        if (!inside) continue;
        const std::array<double, 3> l = {w[0] / s.area2, w[1] / s.area2, w[2] / s.area2};
        const double depth = l[0] * s.z[0] + l[1] * s.z[1] + l[2] * s.z[2];
        const std::size_t p = static_cast<std::size_t>(py) * r.width + px;
        const auto id = static_cast<std::int32_t>(t);
        const bool wins = !r.coverage[p] || depth > r.depth[p] ||
                          (depth == r.depth[p] && id < r.tri_id[p]);
        if (!wins) continue;
        r.coverage[p] = 1;
        r.depth[p] = depth;
        r.tri_id[p] = id;
        auto& b = r.bary[p];
        for (int k = 0; k < 3; ++k) b[static_cast<std::size_t>(s.perm[k])] = l[k];
      }
    }
  }
}

// Interpolated albedo and camera-space normal at a covered pixel.
struct PixelAttributes {
  Eigen::Vector3d albedo;
  Eigen::Vector3d m;  // interpolated, unnormalized normal
  Eigen::Vector3d normal;
  double m_norm = 0.0;
};

PixelAttributes interpolate(const Triangle& tri, const std::array<double, 3>& l,
                            const Eigen::Matrix3Xd& albedo, const Eigen::Matrix3Xd& normals) {
  PixelAttributes a;
  a.albedo = l[0] * albedo.col(tri[0]) + l[1] * albedo.col(tri[1]) + l[2] * albedo.col(tri[2]);
  a.m = l[0] * normals.col(tri[0]) + l[1] * normals.col(tri[1]) + l[2] * normals.col(tri[2]);
  a.m_norm = a.m.norm();
  a.normal = a.m_norm > 0.0 ? Eigen::Vector3d(a.m / a.m_norm) : Eigen::Vector3d::UnitZ();
  return a;
}

void shade_rows(const MorphableModel& model, const std::vector<std::int32_t>& tri_id,
                const std::vector<std::array<double, 3>>& bary, const Eigen::Matrix3Xd& albedo,
                const Eigen::Matrix3Xd& normals_cam, const Eigen::VectorXd& phi,
                std::size_t begin, std::size_t end, std::vector<double>& out) {
  for (std::size_t p = begin; p < end; ++p) {
    if (tri_id[p] == kNoTriangle) continue;
    const auto& tri = model.triangles[static_cast<std::size_t>(tri_id[p])];
    const auto a = interpolate(tri, bary[p], albedo, normals_cam);
    const Eigen::Vector3d c = shade(a.albedo, a.normal, phi);
    out[3 * p] = c[0];
    out[3 * p + 1] = c[1];
    out[3 * p + 2] = c[2];
  }
}

}  // namespace

Rasterization rasterize(std::span<const ScreenVertex> screen,
                        std::span<const Triangle> triangles, int width, int height,
                        const RenderOptions& options) {
  if (width < 1 || height < 1) {
    throw ValidationError("rasterize: image size must be at least 1x1");
  }
  Rasterization r;
  r.width = width;
  r.height = height;
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  r.coverage.assign(n, 0);
  r.depth.assign(n, 0.0);
  r.tri_id.assign(n, kNoTriangle);
  r.bary.assign(n, {0.0, 0.0, 0.0});

  std::vector<TriangleSetup> setups(triangles.size());
  std::vector<std::uint8_t> valid(triangles.size(), 0);
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (const auto idx : triangles[t]) {
      if (idx >= screen.size()) {
        throw ValidationError("triangle " + std::to_string(t) + " references vertex " +
                              std::to_string(idx) + " beyond the vertex list");
      }
    }
    valid[t] = setup_triangle(screen, triangles[t], width, height, setups[t]) ? 1 : 0;
  }
  // Each row band is owned by one worker; the winner per pixel is the maximum
  // under a total order, so traversal order never changes the result.
  parallel_for(static_cast<std::size_t>(height), options.threads,
               [&](std::size_t begin, std::size_t end) {
                 rasterize_rows(triangles, setups, valid, static_cast<int>(begin),
                                static_cast<int>(end), r);
               });
  return r;
}

RenderState render_state(const MorphableModel& model, const FaceParams& params, int width,
                         int height, const RenderOptions& options) {
  check_params(model, params);
  if (width < 1 || height < 1) throw ValidationError("image size must be at least 1x1");
  RenderState s;
  s.width = width;
  s.height = height;
  s.positions = decode_geometry(model, params.alpha, params.delta);
  s.albedo = decode_albedo(model, params.gamma);
  s.normals = vertex_normals(s.positions, model.triangles);
  s.normals_cam = camera_rotation(params.cam) * s.normals;
  s.screen = project(s.positions, params.cam, width, height);

  auto ras = rasterize(s.screen, model.triangles, width, height, options);
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  s.unclamped.assign(3 * n, 0.0);
  parallel_for(n, options.threads, [&](std::size_t begin, std::size_t end) {
    shade_rows(model, ras.tri_id, ras.bary, s.albedo, s.normals_cam, params.phi, begin, end,
               s.unclamped);
  });

  s.output.color = Image(width, height, 3);
  for (std::size_t i = 0; i < 3 * n; ++i) {
    s.output.color.data[i] = std::clamp(s.unclamped[i], 0.0, 1.0);
  }
  s.output.coverage = std::move(ras.coverage);
  s.output.depth = std::move(ras.depth);
  s.output.tri_id = std::move(ras.tri_id);
  s.output.bary = std::move(ras.bary);
  return s;
}

RenderOutput render(const MorphableModel& model, const FaceParams& params, int width,
                    int height, const RenderOptions& options) {
  return render_state(model, params, width, height, options).output;
}

Image shade_visibility(const MorphableModel& model, const FaceParams& params,
                       const RenderOutput& visibility, const RenderOptions& options) {
  check_params(model, params);
  const int width = visibility.color.width;
  const int height = visibility.color.height;
  const auto positions = decode_geometry(model, params.alpha, params.delta);
  const auto albedo = decode_albedo(model, params.gamma);
  const Eigen::Matrix3Xd normals_cam =
      camera_rotation(params.cam) * vertex_normals(positions, model.triangles);
  Image out(width, height, 3);
  parallel_for(out.pixel_count(), options.threads, [&](std::size_t begin, std::size_t end) {
    shade_rows(model, visibility.tri_id, visibility.bary, albedo, normals_cam, params.phi,
               begin, end, out.data);
  });
  return out;
}

FaceParams render_backward(const MorphableModel& model, const FaceParams& params,
                           const RenderState& state, const Image& adjoint,
                           const RenderOptions& options) {
  if (adjoint.width != state.width || adjoint.height != state.height || adjoint.channels != 3) {
    throw DimensionError("adjoint image must be " + std::to_string(state.width) + "x" +
                         std::to_string(state.height) + "x3");
  }
  const std::size_t n = adjoint.pixel_count();
  const auto& tri_id = state.output.tri_id;
  const auto& bary = state.output.bary;

  // Per-pixel partials, computed in parallel and reduced serially in pixel
  // order so the result does not depend on the thread count.
  std::vector<double> d_albedo_px(3 * n, 0.0), d_m_px(3 * n, 0.0), d_phi_px(27 * n, 0.0);
  std::vector<std::uint8_t> active(n, 0);
  parallel_for(n, options.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      if (tri_id[p] == kNoTriangle) continue;
      Eigen::Vector3d dc;
      bool any = false;
      for (int ch = 0; ch < 3; ++ch) {
        const double raw = state.unclamped[3 * p + ch];
        const bool passes = raw >= 0.0 && raw <= 1.0;
        dc[ch] = passes ? adjoint.data[3 * p + ch] : 0.0;
        any = any || dc[ch] != 0.0;
      }
      if (!any) continue;
      const auto& tri = model.triangles[static_cast<std::size_t>(tri_id[p])];
      const auto a = interpolate(tri, bary[p], state.albedo, state.normals_cam);
      const auto g = shade_backward(a.albedo, a.normal, params.phi, dc);
      Eigen::Vector3d dm = Eigen::Vector3d::Zero();
      if (a.m_norm > 0.0) dm = (g.normal - a.normal * a.normal.dot(g.normal)) / a.m_norm;
      for (int k = 0; k < 3; ++k) {
        d_albedo_px[3 * p + k] = g.albedo[k];
        d_m_px[3 * p + k] = dm[k];
      }
      for (int k = 0; k < 27; ++k) d_phi_px[27 * p + k] = g.phi[k];
      active[p] = 1;
    }
  });

  const Eigen::Index nv = state.positions.cols();
  Eigen::Matrix3Xd d_albedo = Eigen::Matrix3Xd::Zero(3, nv);
  Eigen::Matrix3Xd d_normals_cam = Eigen::Matrix3Xd::Zero(3, nv);
  FaceParams grad = FaceParams::zeros(params.layout());
  for (std::size_t p = 0; p < n; ++p) {
    if (!active[p]) continue;
    const auto& tri = model.triangles[static_cast<std::size_t>(tri_id[p])];
    const Eigen::Map<const Eigen::Vector3d> da(&d_albedo_px[3 * p]);
    const Eigen::Map<const Eigen::Vector3d> dm(&d_m_px[3 * p]);
    for (int k = 0; k < 3; ++k) {
      d_albedo.col(tri[k]) += bary[p][k] * da;
      d_normals_cam.col(tri[k]) += bary[p][k] * dm;
    }
    for (int k = 0; k < 27; ++k) grad.phi[k] += d_phi_px[27 * p + k];
  }

  grad.gamma = decode_albedo_backward(model, d_albedo);

  // normals_cam = R * normals.
  const Eigen::Matrix3d r = camera_rotation(params.cam);
  const Eigen::Matrix3d d_r = d_normals_cam * state.normals.transpose();
  const auto dr = rotation_derivatives(params.cam[kPitch], params.cam[kYaw], params.cam[kRoll]);
  for (int k = 0; k < 3; ++k) grad.cam[k] = (d_r.array() * dr[k].array()).sum();

  const Eigen::Matrix3Xd d_normals = r.transpose() * d_normals_cam;
  const Eigen::Matrix3Xd d_positions =
      vertex_normals_backward(state.positions, model.triangles, d_normals);
  const auto geo = decode_geometry_backward(model, d_positions);
  grad.alpha = geo.alpha;
  grad.delta = geo.delta;
  return grad;
}

FaceParams render_backward(const MorphableModel& model, const FaceParams& params, int width,
                           int height, const Image& adjoint, const RenderOptions& options) {
  const auto state = render_state(model, params, width, height, options);
  return render_backward(model, params, state, adjoint, options);
}

}  // namespace morphfit
