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

#include "morphfit/scene.hpp"

#include <cmath>

#include "morphfit/error.hpp"
#include "morphfit/face_params.hpp"

namespace morphfit {

namespace {

constexpr double kY00 = 0.28209479177387814;   // 1 / (2 sqrt(pi))
constexpr double kY1 = 0.48860251190291992;    // sqrt(3 / (4 pi))
constexpr double kY2 = 1.0925484305920792;     // sqrt(15 / (4 pi))
constexpr double kY20 = 0.31539156525252005;   // sqrt(5 / (16 pi))
constexpr double kY22 = 0.54627421529603959;   // sqrt(15 / (16 pi))

Eigen::Matrix3d rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}
Eigen::Matrix3d rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}
Eigen::Matrix3d rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}
Eigen::Matrix3d d_rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return r;
}
Eigen::Matrix3d d_rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return r;
}
Eigen::Matrix3d d_rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return r;
}

void check_cam(const Eigen::VectorXd& cam) {
  if (cam.size() != kCamSize) {
    throw DimensionError("camera block must have 6 entries, got " +
                         std::to_string(cam.size()));
  }
  if (!cam.allFinite()) throw NumericError("camera parameters are not finite");
}

}  // namespace

Eigen::Matrix3d rotation_from_euler(double pitch, double yaw, double roll) {
  return rot_z(roll) * rot_y(yaw) * rot_x(pitch);
}

std::array<Eigen::Matrix3d, 3> rotation_derivatives(double pitch, double yaw, double roll) {
  const Eigen::Matrix3d rx = rot_x(pitch), ry = rot_y(yaw), rz = rot_z(roll);
  return {rz * ry * d_rot_x(pitch), rz * d_rot_y(yaw) * rx, d_rot_z(roll) * ry * rx};
}

Eigen::Matrix3d camera_rotation(const Eigen::VectorXd& cam) {
  check_cam(cam);
  return rotation_from_euler(cam[kPitch], cam[kYaw], cam[kRoll]);
}

std::vector<ScreenVertex> project(const Eigen::Matrix3Xd& positions,
                                  const Eigen::VectorXd& cam, int width, int height) {
  check_cam(cam);
  if (width < 1 || height < 1) {
    throw ValidationError("image size must be at least 1x1");
  }
  const Eigen::Matrix3d sr = std::exp(cam[kLogScale]) * camera_rotation(cam);
  std::vector<ScreenVertex> out(static_cast<std::size_t>(positions.cols()));
  for (Eigen::Index v = 0; v < positions.cols(); ++v) {
    const Eigen::Vector3d p = sr * positions.col(v);
    const double nx = p.x() + cam[kTx];
    const double ny = p.y() + cam[kTy];
    out[static_cast<std::size_t>(v)] = {(nx + 1.0) * 0.5 * width,
                                        (1.0 - ny) * 0.5 * height, p.z()};
  }
  return out;
}

ProjectionGradient project_backward(const Eigen::Matrix3Xd& positions,
                                    const Eigen::VectorXd& cam, int width, int height,
                                    const Eigen::Matrix3Xd& d_screen) {
  check_cam(cam);
  if (d_screen.cols() != positions.cols()) {
    throw DimensionError("screen adjoint does not match vertex count");
  }
  const double s = std::exp(cam[kLogScale]);
  const Eigen::Matrix3d r = camera_rotation(cam);
  const auto dr = rotation_derivatives(cam[kPitch], cam[kYaw], cam[kRoll]);

  ProjectionGradient g;
  g.positions.resize(3, positions.cols());
  g.cam = Eigen::VectorXd::Zero(kCamSize);
  // Adjoint on p = s R X in camera space.
  Eigen::Matrix3d d_r = Eigen::Matrix3d::Zero();
  for (Eigen::Index v = 0; v < positions.cols(); ++v) {
    const Eigen::Vector3d dp(d_screen(0, v) * 0.5 * width, -d_screen(1, v) * 0.5 * height,
                             d_screen(2, v));
    g.cam[kTx] += dp.x();
    g.cam[kTy] += dp.y();
    const Eigen::Vector3d x = positions.col(v);
    const Eigen::Vector3d rx = r * x;
    g.cam[kLogScale] += s * dp.dot(rx);
    d_r.noalias() += s * dp * x.transpose();
    g.positions.col(v) = s * r.transpose() * dp;
  }
  for (int k = 0; k < 3; ++k) g.cam[k] = (d_r.array() * dr[k].array()).sum();
  return g;
}

ShCoefficients sh_basis(const Eigen::Vector3d& n) {
  const double x = n.x(), y = n.y(), z = n.z();
  ShCoefficients b;
  b << kY00, kY1 * y, kY1 * z, kY1 * x, kY2 * x * y, kY2 * y * z,
      kY20 * (3.0 * z * z - 1.0), kY2 * x * z, kY22 * (x * x - y * y);
  return b;
}

Eigen::Matrix<double, 9, 3> sh_basis_jacobian(const Eigen::Vector3d& n) {
  const double x = n.x(), y = n.y(), z = n.z();
  Eigen::Matrix<double, 9, 3> j;
  j << 0, 0, 0,
      0, kY1, 0,
      0, 0, kY1,
      kY1, 0, 0,
      kY2 * y, kY2 * x, 0,
      0, kY2 * z, kY2 * y,
      0, 0, 6.0 * kY20 * z,
      kY2 * z, 0, kY2 * x,
      2.0 * kY22 * x, -2.0 * kY22 * y, 0;
  return j;
}

Eigen::Vector3d shade(const Eigen::Vector3d& albedo, const Eigen::Vector3d& normal,
                      const Eigen::VectorXd& phi) {
  const ShCoefficients y = sh_basis(normal);
  Eigen::Vector3d c;
  for (int ch = 0; ch < 3; ++ch) c[ch] = albedo[ch] * phi.segment<9>(9 * ch).dot(y);
  return c;
}

ShadeGradient shade_backward(const Eigen::Vector3d& albedo, const Eigen::Vector3d& normal,
                             const Eigen::VectorXd& phi, const Eigen::Vector3d& d_color) {
  const ShCoefficients y = sh_basis(normal);
  ShadeGradient g;
  ShCoefficients d_y = ShCoefficients::Zero();
  for (int ch = 0; ch < 3; ++ch) {
    const auto coeffs = phi.segment<9>(9 * ch);
    g.albedo[ch] = d_color[ch] * coeffs.dot(y);
    g.phi.segment<9>(9 * ch) = (d_color[ch] * albedo[ch]) * y;
    d_y += (d_color[ch] * albedo[ch]) * coeffs;
  }
  g.normal = sh_basis_jacobian(normal).transpose() * d_y;
  return g;
}

Eigen::VectorXd default_illumination() {
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(kPhiSize);
  for (int ch = 0; ch < 3; ++ch) {
    phi[9 * ch + 0] = 0.8 / kY00;
    phi[9 * ch + 2] = 0.3 / kY1;
  }
  return phi;
}

}  // namespace morphfit
