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
#include <vector>

#include <Eigen/Core>

namespace morphfit {

// Orthographic camera and spherical-harmonics lighting.
//
// The camera block is (pitch, yaw, roll, tx, ty, log_scale). A model-space
// point X maps to p = exp(log_scale) * R * X with R = Rz(roll) Ry(yaw) Rx(pitch),
// then to NDC (p.x + tx, p.y + ty) and to pixels
//
//   x_pix = (nx + 1) / 2 * width,   y_pix = (1 - ny) / 2 * height,
//
// so y points down and pixel (i, j) has its center at (i + 0.5, j + 0.5).
// depth = p.z; larger values are nearer to the viewer.
//
// Illumination phi holds 9 real SH coefficients per color channel,
// channel-major: phi[9 * ch + k] multiplies basis function k for channel ch.
// Basis order is Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22.

struct ScreenVertex {
  double x_pix = 0.0;
  double y_pix = 0.0;
  double depth = 0.0;
};

Eigen::Matrix3d rotation_from_euler(double pitch, double yaw, double roll);

// dR/dpitch, dR/dyaw, dR/droll.
std::array<Eigen::Matrix3d, 3> rotation_derivatives(double pitch, double yaw, double roll);

Eigen::Matrix3d camera_rotation(const Eigen::VectorXd& cam);

std::vector<ScreenVertex> project(const Eigen::Matrix3Xd& positions,
                                  const Eigen::VectorXd& cam, int width, int height);

struct ProjectionGradient {
  Eigen::Matrix3Xd positions;  // d/d(model-space positions)
  Eigen::VectorXd cam;         // d/d(cam), length 6
};

// Pulls adjoints on (x_pix, y_pix, depth) back onto positions and camera.
// d_screen has one column per vertex, rows ordered (x_pix, y_pix, depth).
ProjectionGradient project_backward(const Eigen::Matrix3Xd& positions,
                                    const Eigen::VectorXd& cam, int width, int height,
                                    const Eigen::Matrix3Xd& d_screen);

using ShCoefficients = Eigen::Matrix<double, 9, 1>;

ShCoefficients sh_basis(const Eigen::Vector3d& normal);
// 9 x 3 Jacobian of sh_basis with respect to the (unnormalized) argument.
Eigen::Matrix<double, 9, 3> sh_basis_jacobian(const Eigen::Vector3d& normal);

// color[ch] = albedo[ch] * sum_k phi[9 ch + k] Y_k(normal). Not clamped.
Eigen::Vector3d shade(const Eigen::Vector3d& albedo, const Eigen::Vector3d& normal,
                      const Eigen::VectorXd& phi);

struct ShadeGradient {
  Eigen::Vector3d albedo;
  Eigen::Vector3d normal;
  Eigen::Matrix<double, 27, 1> phi;
};
ShadeGradient shade_backward(const Eigen::Vector3d& albedo, const Eigen::Vector3d& normal,
                             const Eigen::VectorXd& phi, const Eigen::Vector3d& d_color);

// White light: ambient 0.8 plus a frontal (+z) term of 0.3 in every channel.
Eigen::VectorXd default_illumination();

}  // namespace morphfit
