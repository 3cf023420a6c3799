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

#include "morphfit/decoder.hpp"

#include <string>

#include <Eigen/Geometry>

#include "morphfit/error.hpp"

namespace morphfit {

namespace {

Eigen::Matrix3Xd as_positions(const Eigen::VectorXd& flat) {
  return Eigen::Map<const Eigen::Matrix3Xd>(flat.data(), 3, flat.size() / 3);
}

void check_coefficients(const Eigen::VectorXd& coeffs, Eigen::Index expected,
                        const char* name) {
  if (coeffs.size() != expected) {
    throw DimensionError(std::string(name) + " has length " + std::to_string(coeffs.size()) +
                         ", model expects " + std::to_string(expected));
  }
  if (!coeffs.allFinite()) {
    throw NumericError(std::string(name) + " contains non-finite values");
  }
}

}  // namespace

Eigen::Matrix3Xd decode_geometry(const MorphableModel& model, const Eigen::VectorXd& alpha,
                                 const Eigen::VectorXd& delta) {
  check_coefficients(alpha, model.k_shape(), "alpha");
  check_coefficients(delta, model.k_expr(), "delta");
  Eigen::VectorXd flat = model.mean_shape;
  if (alpha.size() > 0 && !alpha.isZero(0.0)) {
    flat.noalias() += model.shape_basis * model.shape_scales.cwiseProduct(alpha);
  }
  if (delta.size() > 0 && !delta.isZero(0.0)) {
    flat.noalias() += model.expr_basis * model.expr_scales.cwiseProduct(delta);
  }
  return as_positions(flat);
}

Eigen::Matrix3Xd decode_albedo(const MorphableModel& model, const Eigen::VectorXd& gamma) {
  check_coefficients(gamma, model.k_albedo(), "gamma");
  Eigen::VectorXd flat = model.mean_albedo;
  if (gamma.size() > 0 && !gamma.isZero(0.0)) {
    flat.noalias() += model.albedo_basis * model.albedo_scales.cwiseProduct(gamma);
  }
  return as_positions(flat);
}

GeometryGradient decode_geometry_backward(const MorphableModel& model,
                                          const Eigen::Matrix3Xd& d_positions) {
  if (d_positions.cols() != model.n_vertices()) {
    throw DimensionError("position adjoint does not match vertex count");
  }
  const Eigen::Map<const Eigen::VectorXd> flat(d_positions.data(), d_positions.size());
  GeometryGradient g;
  g.alpha = model.shape_scales.cwiseProduct(model.shape_basis.transpose() * flat);
  g.delta = model.expr_scales.cwiseProduct(model.expr_basis.transpose() * flat);
  return g;
}

Eigen::VectorXd decode_albedo_backward(const MorphableModel& model,
                                       const Eigen::Matrix3Xd& d_albedo) {
  if (d_albedo.cols() != model.n_vertices()) {
    throw DimensionError("albedo adjoint does not match vertex count");
  }
  const Eigen::Map<const Eigen::VectorXd> flat(d_albedo.data(), d_albedo.size());
  return model.albedo_scales.cwiseProduct(model.albedo_basis.transpose() * flat);
}

namespace {

Eigen::Matrix3Xd summed_face_normals(const Eigen::Matrix3Xd& positions,
                                     std::span<const Triangle> triangles) {
  Eigen::Matrix3Xd sum = Eigen::Matrix3Xd::Zero(3, positions.cols());
  for (const auto& t : triangles) {
    const Eigen::Vector3d p0 = positions.col(t[0]);
    const Eigen::Vector3d face = (positions.col(t[1]) - p0).cross(positions.col(t[2]) - p0);
    for (const auto v : t) sum.col(v) += face;
  }
  return sum;
}

}  // namespace

Eigen::Matrix3Xd vertex_normals(const Eigen::Matrix3Xd& positions,
                                std::span<const Triangle> triangles) {
  Eigen::Matrix3Xd n = summed_face_normals(positions, triangles);
  for (Eigen::Index v = 0; v < n.cols(); ++v) {
    const double len = n.col(v).norm();
    if (len > 0.0) {
      n.col(v) /= len;
    } else {
      n.col(v) = Eigen::Vector3d::UnitZ();
    }
  }
  return n;
}

Eigen::Matrix3Xd vertex_normals_backward(const Eigen::Matrix3Xd& positions,
                                         std::span<const Triangle> triangles,
                                         const Eigen::Matrix3Xd& d_normals) {
  const Eigen::Matrix3Xd sum = summed_face_normals(positions, triangles);
  // d/d(sum) of sum/|sum| is (I - n n^T) / |sum|.
  Eigen::Matrix3Xd d_sum = Eigen::Matrix3Xd::Zero(3, sum.cols());
  for (Eigen::Index v = 0; v < sum.cols(); ++v) {
    const double len = sum.col(v).norm();
    if (len <= 0.0) continue;
    const Eigen::Vector3d n = sum.col(v) / len;
    const Eigen::Vector3d g = d_normals.col(v);
    d_sum.col(v) = (g - n * n.dot(g)) / len;
  }
  Eigen::Matrix3Xd d_pos = Eigen::Matrix3Xd::Zero(3, positions.cols());
  for (const auto& t : triangles) {
    const Eigen::Vector3d p0 = positions.col(t[0]);
    const Eigen::Vector3d a = positions.col(t[1]) - p0;
    const Eigen::Vector3d b = positions.col(t[2]) - p0;
    const Eigen::Vector3d g = d_sum.col(t[0]) + d_sum.col(t[1]) + d_sum.col(t[2]);
    // face = a x b: d/da = b x g, d/db = g x a.
    const Eigen::Vector3d da = b.cross(g);
    const Eigen::Vector3d db = g.cross(a);
    d_pos.col(t[1]) += da;
    d_pos.col(t[2]) += db;
    d_pos.col(t[0]) -= da + db;
  }
  return d_pos;
}

Eigen::Matrix3Xd select_landmarks_3d(const Eigen::Matrix3Xd& positions,
                                     std::span<const std::uint32_t> indices) {
  Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= positions.cols()) {
      throw ValidationError("landmark index " + std::to_string(indices[i]) +
                            " out of range for " + std::to_string(positions.cols()) +
                            " vertices");
    }
    out.col(static_cast<Eigen::Index>(i)) = positions.col(indices[i]);
  }
  return out;
}

}  // namespace morphfit
