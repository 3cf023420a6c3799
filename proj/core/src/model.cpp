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

#include "morphfit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Geometry>
#include <Eigen/QR>

#include "container.hpp"
#include "morphfit/error.hpp"

namespace morphfit {

namespace {

constexpr char kModelMagic[] = "FIGM";
constexpr std::uint32_t kModelVersion = 1;

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// Eigen stores column-major; the container is row-major.
std::vector<double> row_major(const Eigen::MatrixXd& m) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[k++] = m(r, c);
  }
  return out;
}

Eigen::MatrixXd from_row_major(const std::vector<double>& v, Eigen::Index rows,
                               Eigen::Index cols, const char* name) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
    throw DimensionError(std::string(name) + " has " + std::to_string(v.size()) +
                         " elements, expected " + std::to_string(rows * cols));
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[k++];
  }
  return m;
}

Eigen::VectorXd to_vector(const std::vector<double>& v, Eigen::Index n,
                          const char* name) {
  if (static_cast<Eigen::Index>(v.size()) != n) {
    throw DimensionError(std::string(name) + " has " + std::to_string(v.size()) +
                         " elements, expected " + std::to_string(n));
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

void round_to_f32(Eigen::MatrixXd& m) {
  m = m.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}
void round_to_f32(Eigen::VectorXd& v) {
  v = v.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

}  // namespace

bool operator==(const MorphableModel& a, const MorphableModel& b) {
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return same(a.mean_shape, b.mean_shape) && same(a.shape_basis, b.shape_basis) &&
         same(a.expr_basis, b.expr_basis) && same(a.mean_albedo, b.mean_albedo) &&
         same(a.albedo_basis, b.albedo_basis) &&
         same(a.shape_scales, b.shape_scales) &&
         same(a.expr_scales, b.expr_scales) &&
         same(a.albedo_scales, b.albedo_scales) && a.triangles == b.triangles &&
         a.landmark_indices == b.landmark_indices;
}

std::vector<Diagnostic> validate_model(const MorphableModel& m) {
  std::vector<Diagnostic> out;
  auto error = [&](std::string code, std::string msg) {
    out.push_back({Severity::kError, std::move(code), std::move(msg)});
  };
  auto warn = [&](std::string code, std::string msg) {
    out.push_back({Severity::kWarning, std::move(code), std::move(msg)});
  };

  const Eigen::Index rows = m.mean_shape.size();
  const auto n = static_cast<std::uint64_t>(m.n_vertices());
  if (rows % 3 != 0 || rows == 0) {
    error("mean_shape_size", "mean_shape length must be a positive multiple of 3");
  }
  auto check_basis = [&](const Eigen::MatrixXd& basis, const Eigen::VectorXd& scales,
                         const char* name) {
    if (basis.rows() != rows) {
      error("basis_rows", std::string(name) + " has " + std::to_string(basis.rows()) +
                              " rows, expected " + std::to_string(rows));
    }
    if (scales.size() != basis.cols()) {
      error("basis_scales", std::string(name) + " has " +
                                std::to_string(basis.cols()) + " columns but " +
                                std::to_string(scales.size()) + " scales");
    }
    if (!all_finite(basis) || !scales.allFinite()) {
      error("non_finite", std::string(name) + " contains non-finite values");
    }
  };
  check_basis(m.shape_basis, m.shape_scales, "shape_basis");
  check_basis(m.expr_basis, m.expr_scales, "expr_basis");
  check_basis(m.albedo_basis, m.albedo_scales, "albedo_basis");

  if (!m.mean_shape.allFinite()) error("non_finite", "mean_shape contains non-finite values");
  if (m.mean_albedo.size() != rows) {
    error("albedo_size", "mean_albedo length " + std::to_string(m.mean_albedo.size()) +
                             " does not match 3 * n_vertices");
  } else {
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double a = m.mean_albedo[i];
      if (!(a >= 0.0 && a <= 1.0)) {
        error("albedo_range", "albedo out of range at vertex " + std::to_string(i / 3) +
                                  ": " + std::to_string(a));
        break;
      }
    }
  }

  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    for (const auto idx : m.triangles[t]) {
      if (idx >= n) {
        error("triangle_index", "triangle " + std::to_string(t) + " references vertex " +
                                    std::to_string(idx) + " >= n_vertices " +
                                    std::to_string(n));
      }
    }
  }
  std::set<std::uint32_t> seen;
  for (std::size_t i = 0; i < m.landmark_indices.size(); ++i) {
    const auto idx = m.landmark_indices[i];
    if (idx >= n) {
      error("landmark_index", "landmark " + std::to_string(i) + " references vertex " +
                                  std::to_string(idx) + " >= n_vertices " +
                                  std::to_string(n));
    }
    if (!seen.insert(idx).second) {
      warn("landmark_duplicate", "landmark vertex " + std::to_string(idx) +
                                     " appears more than once");
    }
  }
  return out;
}

bool has_errors(const std::vector<Diagnostic>& report) {
  return std::any_of(report.begin(), report.end(), [](const Diagnostic& d) {
    return d.severity == Severity::kError;
  });
}

void require_valid(const MorphableModel& model) {
  const auto report = validate_model(model);
  if (!has_errors(report)) return;
  std::ostringstream msg;
  msg << "invalid model:";
  for (const auto& d : report) {
    if (d.severity == Severity::kError) msg << "\n  " << d.code << ": " << d.message;
  }
  throw ValidationError(msg.str());
}

void save_model(const MorphableModel& model, const std::filesystem::path& path) {
  require_valid(model);
  detail::ContainerWriter w(std::string_view(kModelMagic, 4), kModelVersion);
  w.header(static_cast<std::uint32_t>(model.n_vertices()));
  w.header(static_cast<std::uint32_t>(model.n_triangles()));
  w.header(static_cast<std::uint32_t>(model.k_shape()));
  w.header(static_cast<std::uint32_t>(model.k_expr()));
  w.header(static_cast<std::uint32_t>(model.k_albedo()));
  w.header(static_cast<std::uint32_t>(model.n_landmarks()));

  w.f32_array("mean_shape", as_span(model.mean_shape));
  w.f32_array("shape_basis", row_major(model.shape_basis));
  w.f32_array("expr_basis", row_major(model.expr_basis));
  w.f32_array("mean_albedo", as_span(model.mean_albedo));
  w.f32_array("albedo_basis", row_major(model.albedo_basis));
  Eigen::VectorXd scales(model.shape_scales.size() + model.expr_scales.size() +
                         model.albedo_scales.size());
  scales << model.shape_scales, model.expr_scales, model.albedo_scales;
  w.f32_array("basis_scales", as_span(scales));

  std::vector<std::uint32_t> tris;
  tris.reserve(model.triangles.size() * 3);
  for (const auto& t : model.triangles) tris.insert(tris.end(), t.begin(), t.end());
  w.u32_array("triangles", tris);
  w.u32_array("landmark_indices", model.landmark_indices);
  w.write(path);
}

MorphableModel load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("model file not found: " + path.string());
  }
  detail::ContainerReader r(path, std::string_view(kModelMagic, 4), kModelVersion);
  const Eigen::Index n = r.header();
  const std::size_t n_tri = r.header();
  const Eigen::Index ks = r.header();
  const Eigen::Index ke = r.header();
  const Eigen::Index ka = r.header();
  const std::size_t n_lm = r.header();

  MorphableModel m;
  m.mean_shape = to_vector(r.f32_array("mean_shape"), 3 * n, "mean_shape");
  m.shape_basis = from_row_major(r.f32_array("shape_basis"), 3 * n, ks, "shape_basis");
  m.expr_basis = from_row_major(r.f32_array("expr_basis"), 3 * n, ke, "expr_basis");
  m.mean_albedo = to_vector(r.f32_array("mean_albedo"), 3 * n, "mean_albedo");
  m.albedo_basis = from_row_major(r.f32_array("albedo_basis"), 3 * n, ka, "albedo_basis");
  const auto scales = to_vector(r.f32_array("basis_scales"), ks + ke + ka, "basis_scales");
  m.shape_scales = scales.segment(0, ks);
  m.expr_scales = scales.segment(ks, ke);
  m.albedo_scales = scales.segment(ks + ke, ka);

  const auto tris = r.u32_array("triangles");
  if (tris.size() != 3 * n_tri) {
    throw DimensionError("triangles has " + std::to_string(tris.size()) +
                         " indices, expected " + std::to_string(3 * n_tri));
  }
  m.triangles.resize(n_tri);
  for (std::size_t t = 0; t < n_tri; ++t) {
    m.triangles[t] = {tris[3 * t], tris[3 * t + 1], tris[3 * t + 2]};
  }
  m.landmark_indices = r.u32_array("landmark_indices");
  if (m.landmark_indices.size() != n_lm) {
    throw DimensionError("landmark_indices has " +
                         std::to_string(m.landmark_indices.size()) +
                         " entries, expected " + std::to_string(n_lm));
  }
  r.expect_end();
  require_valid(m);
  return m;
}

Eigen::VectorXd decaying_scales(int count) {
  Eigen::VectorXd s(count);
  for (int k = 0; k < count; ++k) s[k] = 0.05 / (1.0 + k);
  return s;
}

namespace {

// Orthonormal columns from the QR factorization of a Gaussian matrix. When the
// basis has more columns than rows, full orthonormality is impossible and the
// columns are unit-norm Gaussian directions instead.
Eigen::MatrixXd random_basis(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) g(r, c) = normal(rng);
  }
  if (cols == 0) return g;
  if (rows >= cols) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  }
  for (Eigen::Index c = 0; c < cols; ++c) g.col(c).normalize();
  return g;
}

// Smooth per-vertex skin albedo with darker eye/brow regions and a redder
// mouth, in normalized face coordinates u, v in [-1, 1].
Eigen::Vector3d face_albedo(double u, double v) {
  const Eigen::Vector3d skin(0.78, 0.58, 0.47);
  auto blob = [](double du, double dv, double su, double sv) {
    return std::exp(-(du * du) / (2 * su * su) - (dv * dv) / (2 * sv * sv));
  };
  const double eyes = blob(u - 0.38, v - 0.22, 0.12, 0.07) + blob(u + 0.38, v - 0.22, 0.12, 0.07);
  const double brows = blob(u - 0.38, v - 0.40, 0.16, 0.04) + blob(u + 0.38, v - 0.40, 0.16, 0.04);
  const double mouth = blob(u, v + 0.48, 0.22, 0.06);
  const double cheeks = blob(u - 0.45, v + 0.05, 0.15, 0.15) + blob(u + 0.45, v + 0.05, 0.15, 0.15);
  Eigen::Vector3d c = skin * (1.0 - 0.55 * eyes - 0.45 * brows);
  c += mouth * Eigen::Vector3d(0.05, -0.25, -0.18);
  c += cheeks * Eigen::Vector3d(0.06, -0.03, -0.02);
  return c.cwiseMax(0.02).cwiseMin(0.98);
}

std::vector<std::uint32_t> farthest_point_sampling(const Eigen::Matrix3Xd& pts,
                                                   int count) {
  const Eigen::Index n = pts.cols();
  const auto k = static_cast<Eigen::Index>(std::min<Eigen::Index>(count, n));
  std::vector<std::uint32_t> picked;
  if (k == 0) return picked;
  const Eigen::Vector3d centroid = pts.rowwise().mean();
  Eigen::Index first = 0;
  (pts.colwise() - centroid).colwise().squaredNorm().minCoeff(&first);
  picked.push_back(static_cast<std::uint32_t>(first));
  Eigen::VectorXd dist = (pts.colwise() - pts.col(first)).colwise().squaredNorm().transpose();
  while (static_cast<Eigen::Index>(picked.size()) < k) {
    Eigen::Index next = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (dist[i] > best) {
        best = dist[i];
        next = i;
      }
    }
    picked.push_back(static_cast<std::uint32_t>(next));
    dist = dist.cwiseMin(
        (pts.colwise() - pts.col(next)).colwise().squaredNorm().transpose());
  }
  return picked;
}

}  // namespace

MorphableModel gen_synthetic_model(std::uint64_t seed, int n_grid,
                                   const SyntheticModelOptions& options) {
  if (n_grid < 4) {
    throw ValidationError("n_grid must be >= 4, got " + std::to_string(n_grid));
  }
  if (options.k_shape < 0 || options.k_expr < 0 || options.k_albedo < 0 ||
      options.n_landmarks < 0) {
    throw ValidationError("basis sizes and landmark count must be non-negative");
  }
  const int n = n_grid * n_grid;
  Eigen::Matrix3Xd pts(3, n);
  Eigen::MatrixXd uv(2, n);
  for (int j = 0; j < n_grid; ++j) {
    for (int i = 0; i < n_grid; ++i) {
      const double u = -1.0 + 2.0 * i / (n_grid - 1);
      const double v = -1.0 + 2.0 * j / (n_grid - 1);
      const double x = 0.62 * u;
      const double y = 0.80 * v;
      const double r2 = (0.75 * u) * (0.75 * u) + (0.72 * v) * (0.72 * v);
      double z = 0.55 * std::sqrt(std::max(0.0, 1.0 - r2));
      z += 0.12 * std::exp(-(x * x) / 0.012 - ((y + 0.02) * (y + 0.02)) / 0.05);
      const int idx = j * n_grid + i;
      pts.col(idx) = Eigen::Vector3d(x, y, z);
      uv.col(idx) = Eigen::Vector2d(u, v);
    }
  }
  pts.row(2).array() -= pts.row(2).mean();
  pts *= 0.95 / pts.colwise().norm().maxCoeff();

  MorphableModel m;
  m.mean_shape = Eigen::Map<const Eigen::VectorXd>(pts.data(), 3 * n);
  m.mean_albedo.resize(3 * n);
  for (int v = 0; v < n; ++v) {
    m.mean_albedo.segment<3>(3 * v) = face_albedo(uv(0, v), uv(1, v));
  }

  // Counter-clockwise when viewed from +z (x right, y up).
  for (int j = 0; j + 1 < n_grid; ++j) {
    for (int i = 0; i + 1 < n_grid; ++i) {
      const auto a = static_cast<std::uint32_t>(j * n_grid + i);
      const auto b = a + 1;
      const auto c = a + static_cast<std::uint32_t>(n_grid);
      const auto d = c + 1;
      m.triangles.push_back({a, b, d});
      m.triangles.push_back({a, d, c});
    }
  }

  // Separate streams per basis so changing one size leaves the others intact.
  std::mt19937_64 shape_rng(seed * 3 + 0);
  std::mt19937_64 expr_rng(seed * 3 + 1);
  std::mt19937_64 albedo_rng(seed * 3 + 2);
  m.shape_scales = decaying_scales(options.k_shape);
  m.expr_scales = decaying_scales(options.k_expr);
  m.albedo_scales = decaying_scales(options.k_albedo);
  round_to_f32(m.shape_scales);
  round_to_f32(m.expr_scales);
  round_to_f32(m.albedo_scales);
  m.shape_basis = random_basis(shape_rng, 3 * n, options.k_shape) *
                  m.shape_scales.asDiagonal();
  m.expr_basis = random_basis(expr_rng, 3 * n, options.k_expr) *
                 m.expr_scales.asDiagonal();
  m.albedo_basis = random_basis(albedo_rng, 3 * n, options.k_albedo) *
                   m.albedo_scales.asDiagonal();

  round_to_f32(m.mean_shape);
  round_to_f32(m.mean_albedo);
  round_to_f32(m.shape_basis);
  round_to_f32(m.expr_basis);
  round_to_f32(m.albedo_basis);

  const Eigen::Matrix3Xd rounded =
      Eigen::Map<const Eigen::Matrix3Xd>(m.mean_shape.data(), 3, n);
  m.landmark_indices = farthest_point_sampling(rounded, options.n_landmarks);
  return m;
}

}  // namespace morphfit
