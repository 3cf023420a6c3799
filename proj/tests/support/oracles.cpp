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

#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace morphfit::testing {

namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Vec3 mat_vec(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

std::vector<Vec3> decode(const Eigen::VectorXd& mean,
                         const std::vector<std::pair<const Eigen::MatrixXd*, std::pair<const Eigen::VectorXd*, const Eigen::VectorXd*>>>& terms) {
  const std::size_t n = static_cast<std::size_t>(mean.size() / 3);
  std::vector<Vec3> out(n);
  for (std::size_t v = 0; v < n; ++v) {
    for (int c = 0; c < 3; ++c) {
      const Eigen::Index row = static_cast<Eigen::Index>(3 * v + c);
      double x = mean[row];
      for (const auto& [basis, sc] : terms) {
        const auto& scales = *sc.first;
        const auto& coeff = *sc.second;
        for (Eigen::Index k = 0; k < coeff.size(); ++k) x += (*basis)(row, k) * scales[k] * coeff[k];
      }
      out[v][c] = x;
    }
  }
  return out;
}

std::vector<Vec3> positions_of(const MorphableModel& m, const FaceParams& p) {
  return decode(m.mean_shape, {{&m.shape_basis, {&m.shape_scales, &p.alpha}},
                               {&m.expr_basis, {&m.expr_scales, &p.delta}}});
}

struct Screen {
  double x, y, z;
};

std::vector<Screen> to_screen(const std::vector<Vec3>& pos, const FaceParams& p, int w, int h) {
  const Mat3 r = reference_rotation(p.cam[0], p.cam[1], p.cam[2]);
  const double s = std::exp(p.cam[5]);
  std::vector<Screen> out;
  for (const auto& x : pos) {
    const Vec3 q = mat_vec(r, x);
    const double nx = s * q[0] + p.cam[3];
    const double ny = s * q[1] + p.cam[4];
    out.push_back({(nx + 1.0) * 0.5 * w, (1.0 - ny) * 0.5 * h, s * q[2]});
  }
  return out;
}

double orient(const Screen& a, const Screen& b, double px, double py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

}  // namespace

std::array<std::array<double, 3>, 3> reference_rotation(double pitch, double yaw, double roll) {
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cr = std::cos(roll), sr = std::sin(roll);
  const Mat3 rx = {{{1, 0, 0}, {0, cp, -sp}, {0, sp, cp}}};
  const Mat3 ry = {{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
  const Mat3 rz = {{{cr, -sr, 0}, {sr, cr, 0}, {0, 0, 1}}};
  return mul(rz, mul(ry, rx));
}

std::array<double, 9> reference_sh(double x, double y, double z) {
  const double pi = std::numbers::pi;
  const double c0 = 1.0 / (2.0 * std::sqrt(pi));
  const double c1 = std::sqrt(3.0 / (4.0 * pi));
  const double c2 = 0.5 * std::sqrt(15.0 / pi);
  const double c20 = 0.25 * std::sqrt(5.0 / pi);
  const double c22 = 0.25 * std::sqrt(15.0 / pi);
  return {c0,         c1 * y,     c1 * z, c1 * x, c2 * x * y, c2 * y * z, c20 * (3 * z * z - 1),
          c2 * x * z, c22 * (x * x - y * y)};
}

Eigen::Matrix3Xd reference_geometry(const MorphableModel& model, const FaceParams& params) {
  const auto pos = positions_of(model, params);
  Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(pos.size()));
  for (std::size_t v = 0; v < pos.size(); ++v)
    for (int c = 0; c < 3; ++c) out(c, static_cast<Eigen::Index>(v)) = pos[v][c];
  return out;
}

ReferenceImage reference_render(const MorphableModel& model, const FaceParams& params, int width,
                                int height) {
  const auto pos = positions_of(model, params);
  const auto alb = decode(model.mean_albedo, {{&model.albedo_basis, {&model.albedo_scales, &params.gamma}}});
  const std::size_t nv = pos.size();

  std::vector<Vec3> normals(nv, Vec3{0, 0, 0});
  for (const auto& t : model.triangles) {
    const Vec3& a = pos[t[0]];
    const Vec3& b = pos[t[1]];
    const Vec3& c = pos[t[2]];
    const Vec3 e1 = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    const Vec3 e2 = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
    const Vec3 n = {e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2],
                    e1[0] * e2[1] - e1[1] * e2[0]};
    for (const auto idx : t)
      for (int k = 0; k < 3; ++k) normals[idx][k] += n[k];
  }
  const Mat3 r = reference_rotation(params.cam[0], params.cam[1], params.cam[2]);
  for (auto& n : normals) {
    const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    n = len > 0 ? Vec3{n[0] / len, n[1] / len, n[2] / len} : Vec3{0, 0, 1};
    n = mat_vec(r, n);
  }
  const auto scr = to_screen(pos, params, width, height);

  ReferenceImage img;
  img.width = width;
  img.height = height;
  img.rgb.assign(static_cast<std::size_t>(width) * height * 3, 0.0);
  img.tri_id.assign(static_cast<std::size_t>(width) * height, -1);

  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      const double cx = px + 0.5, cy = py + 0.5;
      int best = -1;
      double best_depth = -std::numeric_limits<double>::infinity();
      std::array<double, 3> best_l{};
      for (std::size_t t = 0; t < model.triangles.size(); ++t) {
        const auto& tri = model.triangles[t];
        std::array<Screen, 3> v = {scr[tri[0]], scr[tri[1]], scr[tri[2]]};
        std::array<int, 3> slot = {0, 1, 2};
        const double area = orient(v[0], v[1], v[2].x, v[2].y);
        if (area == 0.0) continue;
        if (area < 0.0) {
          std::swap(v[1], v[2]);
          std::swap(slot[1], slot[2]);
        }
        bool inside = true;
        for (int e = 0; e < 3 && inside; ++e) {
          const Screen& a = v[(e + 1) % 3];
          const Screen& b = v[(e + 2) % 3];
          const double f = orient(a, b, cx, cy);
          const double dx = b.x - a.x, dy = b.y - a.y;
          const bool owned = dy < 0.0 || (dy == 0.0 && dx > 0.0);
          inside = f > 0.0 || (f == 0.0 && owned);
        }
        if (!inside) continue;
        // Barycentrics from the 2x2 system [b-a, c-a] (l1, l2) = p - a.
        const double ux = v[1].x - v[0].x, uy = v[1].y - v[0].y;
        const double wx = v[2].x - v[0].x, wy = v[2].y - v[0].y;
        const double det = ux * wy - uy * wx;
        const double qx = cx - v[0].x, qy = cy - v[0].y;
        const double l1 = (qx * wy - qy * wx) / det;
        const double l2 = (ux * qy - uy * qx) / det;
        const std::array<double, 3> lo = {1.0 - l1 - l2, l1, l2};
        const double depth = lo[0] * v[0].z + lo[1] * v[1].z + lo[2] * v[2].z;
        if (best < 0 || depth > best_depth) {
          best = static_cast<int>(t);
          best_depth = depth;
          for (int k = 0; k < 3; ++k) best_l[static_cast<std::size_t>(slot[k])] = lo[k];
        }
      }
      if (best < 0) continue;
      const std::size_t p = static_cast<std::size_t>(py) * width + px;
      img.tri_id[p] = best;
      const auto& tri = model.triangles[static_cast<std::size_t>(best)];
      Vec3 a{0, 0, 0}, n{0, 0, 0};
      for (int k = 0; k < 3; ++k)
        for (int c = 0; c < 3; ++c) {
          a[c] += best_l[k] * alb[tri[k]][c];
          n[c] += best_l[k] * normals[tri[k]][c];
        }
      const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
      n = len > 0 ? Vec3{n[0] / len, n[1] / len, n[2] / len} : Vec3{0, 0, 1};
      const auto y = reference_sh(n[0], n[1], n[2]);
      for (int c = 0; c < 3; ++c) {
        double irr = 0.0;
        for (int k = 0; k < 9; ++k) irr += params.phi[9 * c + k] * y[static_cast<std::size_t>(k)];
        img.rgb[3 * p + c] = std::min(1.0, std::max(0.0, a[c] * irr));
      }
    }
  }
  return img;
}

Eigen::Matrix2Xd reference_landmarks(const MorphableModel& model, const FaceParams& params,
                                     int width, int height) {
  const auto scr = to_screen(positions_of(model, params), params, width, height);
  Eigen::Matrix2Xd out(2, static_cast<Eigen::Index>(model.landmark_indices.size()));
  for (std::size_t i = 0; i < model.landmark_indices.size(); ++i) {
    const auto& s = scr[model.landmark_indices[i]];
    out(0, static_cast<Eigen::Index>(i)) = s.x;
    out(1, static_cast<Eigen::Index>(i)) = s.y;
  }
  return out;
}

Similarity2d umeyama(const Eigen::Matrix2Xd& src, const Eigen::Matrix2Xd& dst) {
  const Eigen::Vector2d ms = src.rowwise().mean(), md = dst.rowwise().mean();
  const Eigen::Matrix2Xd a = src.colwise() - ms, b = dst.colwise() - md;
  const double n = static_cast<double>(src.cols());
  const Eigen::Matrix2d cov = b * a.transpose() / n;
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix2d d = Eigen::Matrix2d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(1, 1) = -1;
  Similarity2d s;
  s.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  const double var = a.squaredNorm() / n;
  s.scale = (svd.singularValues().asDiagonal() * d).trace() / var;
  s.translation = md - s.scale * s.rotation * ms;
  return s;
}

LandmarkFitResult gauss_newton_landmark_fit(const MorphableModel& model,
                                            const Eigen::Matrix2Xd& detected, FaceParams start,
                                            int width, int height, double w_landmark,
                                            double w_reg, int iterations) {
  const Eigen::Index ka = start.alpha.size(), kd = start.delta.size();
  const Eigen::Index nvar = ka + kd + 6;
  const double n_lm = static_cast<double>(detected.cols());
  auto unpack = [&](const FaceParams& base, const Eigen::VectorXd& x) {
    FaceParams p = base;
    p.alpha = x.head(ka);
    p.delta = x.segment(ka, kd);
    p.cam = x.tail(6);
    return p;
  };
  auto residual = [&](const FaceParams& p) {
    const Eigen::Matrix2Xd d = reference_landmarks(model, p, width, height) - detected;
    Eigen::VectorXd r(d.size() + ka + kd);
    r.head(d.size()) = std::sqrt(w_landmark / n_lm) * Eigen::Map<const Eigen::VectorXd>(d.data(), d.size());
    r.segment(d.size(), ka) = std::sqrt(w_reg) * p.alpha;
    r.tail(kd) = std::sqrt(w_reg) * p.delta;
    return r;
  };
  Eigen::VectorXd x(nvar);
  x << start.alpha, start.delta, start.cam;
  FaceParams p = unpack(start, x);
  Eigen::VectorXd r = residual(p);
  double lambda = 1e-3;
  for (int it = 0; it < iterations; ++it) {
    Eigen::MatrixXd j(r.size(), nvar);
    for (Eigen::Index k = 0; k < nvar; ++k) {
      const double h = 1e-6;
      Eigen::VectorXd xa = x, xb = x;
      xa[k] += h;
      xb[k] -= h;
      j.col(k) = (residual(unpack(start, xa)) - residual(unpack(start, xb))) / (2 * h);
    }
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 30 && !improved; ++tries) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal().array() += lambda * (jtj.diagonal().array().max(1e-12));
      const Eigen::VectorXd xq = x + damped.ldlt().solve(-g);
      const Eigen::VectorXd rq = residual(unpack(start, xq));
      if (rq.squaredNorm() < r.squaredNorm()) {
        x = xq;
        r = rq;
        lambda = std::max(lambda * 0.3, 1e-12);
        improved = true;
      } else {
        lambda *= 10;
      }
    }
    if (!improved) break;
  }
  p = unpack(start, x);
  const Eigen::Matrix2Xd d = reference_landmarks(model, p, width, height) - detected;
  return {d.colwise().squaredNorm().mean(), r.squaredNorm(), p};
}

}  // namespace morphfit::testing
