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

#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "morphfit/error.hpp"
#include "morphfit/renderer.hpp"
#include "oracles.hpp"

namespace morphfit {
namespace {

double edge_fn(const ScreenVertex& a, const ScreenVertex& b, double px, double py) {
  return (b.x_pix - a.x_pix) * (py - a.y_pix) - (b.y_pix - a.y_pix) * (px - a.x_pix);
}

// Strict inside test; ignores the tie rule, so callers keep centers off edges.
bool strictly_inside(const std::array<ScreenVertex, 3>& v, double px, double py) {
  const double e0 = edge_fn(v[1], v[2], px, py), e1 = edge_fn(v[2], v[0], px, py),
               e2 = edge_fn(v[0], v[1], px, py);
  return (e0 > 0 && e1 > 0 && e2 > 0) || (e0 < 0 && e1 < 0 && e2 < 0);
}

TEST(Rasterize, SingleTriangleMatchesPointInTriangle) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-4.0, 36.0);
  for (int t = 0; t < 40; ++t) {
    std::array<ScreenVertex, 3> v;
    for (auto& s : v) s = {u(rng) + 1e-7, u(rng) + 3e-7, 0.5};
    const std::vector<Triangle> tris = {{0, 1, 2}};
    const auto r = rasterize(v, tris, 32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const std::size_t p = static_cast<std::size_t>(y * 32 + x);
        EXPECT_EQ(r.coverage[p] != 0, strictly_inside(v, x + 0.5, y + 0.5)) << t << " " << x << "," << y;
      }
  }
}

TEST(Rasterize, SharedEdgeCoversEachPixelOnce) {
  // The diagonal runs through pixel centers; the tie rule must hand each one to exactly one side.
  const std::vector<ScreenVertex> v = {{0.5, 0.5, 0}, {16.5, 0.5, 0}, {16.5, 16.5, 0}, {0.5, 16.5, 0}};
  const std::vector<Triangle> a = {{0, 1, 2}};
  const std::vector<Triangle> b = {{0, 2, 3}};
  const std::vector<Triangle> both = {{0, 1, 2}, {0, 2, 3}};
  const auto ra = rasterize(v, a, 20, 20), rb = rasterize(v, b, 20, 20), rab = rasterize(v, both, 20, 20);
  for (std::size_t p = 0; p < ra.coverage.size(); ++p) {
    EXPECT_LE(ra.coverage[p] + rb.coverage[p], 1) << p;
    EXPECT_EQ(rab.coverage[p], ra.coverage[p] | rb.coverage[p]);
  }
  // Centers strictly inside the square (x, y in 1..15) are all covered.
  for (int y = 1; y < 16; ++y)
    for (int x = 1; x < 16; ++x) EXPECT_TRUE(rab.coverage[static_cast<std::size_t>(y * 20 + x)]);
}

TEST(Rasterize, OrientationDoesNotMatter) {
  const std::vector<ScreenVertex> v = {{2.3, 1.7, 0}, {27.1, 5.2, 0}, {9.4, 29.6, 0}};
  const std::vector<Triangle> cw = {{0, 1, 2}}, ccw = {{0, 2, 1}};
  EXPECT_EQ(rasterize(v, cw, 32, 32).coverage, rasterize(v, ccw, 32, 32).coverage);
}

TEST(Rasterize, NearerTriangleWinsAndTiesGoToLowerIndex) {
  const std::vector<ScreenVertex> v = {{1.1, 1.2, 0.2}, {30.3, 2.1, 0.2}, {3.7, 29.9, 0.2},
                                       {1.1, 1.2, 0.7}, {30.3, 2.1, 0.7}, {3.7, 29.9, 0.7}};
  const std::vector<Triangle> far_first = {{0, 1, 2}, {3, 4, 5}};
  const auto r = rasterize(v, far_first, 32, 32);
  const std::vector<Triangle> near_first = {{3, 4, 5}, {0, 1, 2}};
  const auto r2 = rasterize(v, near_first, 32, 32);
  const std::vector<Triangle> same = {{0, 1, 2}, {0, 1, 2}};
  const auto r3 = rasterize(v, same, 32, 32);
  int covered = 0;
  for (std::size_t p = 0; p < r.coverage.size(); ++p) {
    if (!r.coverage[p]) continue;
    ++covered;
    EXPECT_EQ(r.tri_id[p], 1);
    EXPECT_EQ(r2.tri_id[p], 0);
    EXPECT_EQ(r3.tri_id[p], 0);
    EXPECT_NEAR(r.depth[p], 0.7, 1e-12);
  }
  EXPECT_GT(covered, 100);
}

TEST(Rasterize, EmptyMeshCoversNothing) {
  const std::vector<ScreenVertex> v;
  const std::vector<Triangle> tris;
  const auto r = rasterize(v, tris, 8, 6);
  ASSERT_EQ(r.coverage.size(), 48u);
  for (std::size_t p = 0; p < 48; ++p) {
    EXPECT_EQ(r.coverage[p], 0);
    EXPECT_EQ(r.tri_id[p], kNoTriangle);
  }
}

TEST(Rasterize, BarycentricsInterpolateVertices) {
  const std::vector<ScreenVertex> v = {{2.3, 1.7, 0.1}, {27.1, 5.2, 0.4}, {9.4, 29.6, 0.9}};
  const std::vector<Triangle> tris = {{0, 1, 2}};
  const auto r = rasterize(v, tris, 32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const auto p = static_cast<std::size_t>(y * 32 + x);
      if (!r.coverage[p]) continue;
      const auto& b = r.bary[p];
      EXPECT_NEAR(b[0] + b[1] + b[2], 1.0, 1e-12);
      double px = 0, py = 0, pz = 0;
      for (int k = 0; k < 3; ++k) {
        EXPECT_GE(b[static_cast<std::size_t>(k)], -1e-12);
        px += b[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)].x_pix;
        py += b[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)].y_pix;
        pz += b[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)].depth;
      }
      EXPECT_NEAR(px, x + 0.5, 1e-9);
      EXPECT_NEAR(py, y + 0.5, 1e-9);
      EXPECT_NEAR(r.depth[p], pz, 1e-12);
    }
}

TEST(Render, ZeroCodeIsDeterministicAndBlackWithoutLight) {
  const auto& m = testing::synthetic_model(16);
  auto p = FaceParams::zeros(ParamLayout::of(m));
  const auto a = render(m, p, 32, 32), b = render(m, p, 32, 32);
  EXPECT_EQ(a.color.data, b.color.data);
  EXPECT_EQ(a.tri_id, b.tri_id);
  int covered = 0;
  for (std::size_t i = 0; i < a.coverage.size(); ++i) covered += a.coverage[i];
  EXPECT_GT(covered, 0);
  for (const double c : a.color.data) EXPECT_EQ(c, 0.0);  // phi = 0
}

TEST(Render, MatchesBruteForceReference) {
  const auto& m = testing::synthetic_model(16);
  const auto layout = ParamLayout::of(m);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto p = testing::random_params(layout, seed);
    p.cam *= 0.3;
    const auto out = render(m, p, 32, 32);
    const auto ref = testing::reference_render(m, p, 32, 32);
    double max_err = 0.0;
    int tri_mismatch = 0;
    for (std::size_t i = 0; i < out.tri_id.size(); ++i) tri_mismatch += out.tri_id[i] != ref.tri_id[i];
    for (std::size_t i = 0; i < ref.rgb.size(); ++i) max_err = std::max(max_err, std::abs(out.color.data[i] - ref.rgb[i]));
    EXPECT_EQ(tri_mismatch, 0) << seed;
    EXPECT_LE(max_err, 1e-6) << seed;
  }
}

TEST(Render, BufferInvariants) {
  const auto& m = testing::synthetic_model(16);
  auto p = testing::random_params(ParamLayout::of(m), 3);
  p.phi = default_illumination();
  const auto out = render(m, p, 40, 30);
  ASSERT_EQ(out.color.width, 40);
  ASSERT_EQ(out.color.height, 30);
  for (std::size_t i = 0; i < out.coverage.size(); ++i) {
    EXPECT_EQ(out.coverage[i] != 0, out.tri_id[i] != kNoTriangle);
    if (!out.coverage[i]) {
      for (int c = 0; c < 3; ++c) EXPECT_EQ(out.color.data[3 * i + static_cast<std::size_t>(c)], 0.0);
      continue;
    }
    EXPECT_LT(out.tri_id[i], m.n_triangles());
    const auto& b = out.bary[i];
    EXPECT_NEAR(b[0] + b[1] + b[2], 1.0, 1e-9);
  }
  for (const double c : out.color.data) {
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(Render, ThreadCountDoesNotChangeResults) {
  const auto& m = testing::synthetic_model(16);
  auto p = testing::random_params(ParamLayout::of(m), 4);
  p.phi = default_illumination();
  const auto a = render(m, p, 48, 48, {.threads = 1});
  const auto b = render(m, p, 48, 48, {.threads = 5});
  EXPECT_EQ(a.color.data, b.color.data);
  EXPECT_EQ(a.tri_id, b.tri_id);
  Image adj(48, 48);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  for (auto& v : adj.data) v = n(rng);
  const auto ga = render_backward(m, p, 48, 48, adj, {.threads = 1});
  const auto gb = render_backward(m, p, 48, 48, adj, {.threads = 5});
  EXPECT_TRUE(ga == gb);
}

TEST(Render, RejectsBadInputs) {
  const auto& m = testing::synthetic_model(8);
  auto p = FaceParams::zeros(ParamLayout::of(m));
  EXPECT_THROW(render(m, p, 0, 32), ValidationError);
  p.phi[0] = std::nan("");
  EXPECT_THROW(render(m, p, 32, 32), NumericError);
  p = FaceParams::zeros(ParamLayout::of(m));
  p.alpha.resize(3);
  EXPECT_THROW(render(m, p, 32, 32), DimensionError);
}

TEST(RenderBackward, ZeroAdjointGivesZeroGradient) {
  const auto& m = testing::synthetic_model(16);
  auto p = testing::random_params(ParamLayout::of(m), 6);
  p.phi = default_illumination();
  const auto g = render_backward(m, p, 32, 32, Image(32, 32));
  EXPECT_EQ(g.flatten().cwiseAbs().maxCoeff(), 0.0);
}

TEST(RenderBackward, FrozenVisibilityTranslationHasNoImageGradient) {
  const auto& m = testing::synthetic_model(16);
  auto p = testing::random_params(ParamLayout::of(m), 7);
  p.phi = default_illumination();
  Image adj(32, 32, 3, 1.0);
  const auto g = render_backward(m, p, 32, 32, adj);
  EXPECT_EQ(g.cam[kTx], 0.0);
  EXPECT_EQ(g.cam[kTy], 0.0);
  EXPECT_EQ(g.cam[kLogScale], 0.0);
}

GradcheckReport check(std::uint64_t seed, std::vector<ParamBlock> blocks, double tol) {
  const auto& m = testing::synthetic_model(16);
  auto p = testing::random_params(ParamLayout::of(m), seed);
  GradcheckOptions o;
  o.blocks = std::move(blocks);
  o.tolerance = tol;
  o.seed = seed;
  return gradcheck(m, p, 32, 32, o);
}

TEST(Gradcheck, IlluminationAndAlbedoWithin1e4) {
  for (std::uint64_t seed : {0u, 1u}) {
    const auto r = check(seed, {ParamBlock::kPhi, ParamBlock::kGamma}, 1e-4);
    for (const auto& b : r.blocks) EXPECT_TRUE(b.pass) << to_string(b.block) << " " << b.max_rel_error;
    EXPECT_TRUE(r.pass);
  }
}

TEST(Gradcheck, GeometryAndCameraWithin1e2) {
  for (std::uint64_t seed : {0u, 1u}) {
    const auto r = check(seed, {ParamBlock::kAlpha, ParamBlock::kDelta, ParamBlock::kCam}, 1e-2);
    for (const auto& b : r.blocks) EXPECT_TRUE(b.pass) << to_string(b.block) << " " << b.max_rel_error;
    EXPECT_TRUE(r.pass);
  }
}

TEST(RenderBackward, SmallStepAlongNegativeGradientDescends) {
  const auto& m = testing::synthetic_model(16);
  const auto layout = ParamLayout::of(m);
  int descended = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto truth = testing::random_params(layout, 100 + seed);
    truth.phi = default_illumination();
    const auto target = render(m, truth, 32, 32).color;
    auto p = truth;
    p.gamma += testing::gaussian_noise(layout, 200 + seed, 0.3).gamma;
    p.phi += testing::gaussian_noise(layout, 300 + seed, 0.1).phi;
    auto loss = [&](const FaceParams& q) {
      const auto img = render(m, q, 32, 32).color;
      double s = 0;
      for (std::size_t i = 0; i < img.data.size(); ++i) s += (img.data[i] - target.data[i]) * (img.data[i] - target.data[i]);
      return s;
    };
    const auto img = render(m, p, 32, 32).color;
    Image adj(32, 32);
    for (std::size_t i = 0; i < adj.data.size(); ++i) adj.data[i] = 2 * (img.data[i] - target.data[i]);
    auto g = render_backward(m, p, 32, 32, adj);
    // Shading blocks only: their effect is smooth apart from the clamp.
    g.alpha.setZero();
    g.delta.setZero();
    g.cam.setZero();
    const double gn = g.flatten().norm();
    ASSERT_GT(gn, 0.0);
    auto q = p;
    const double t = 1e-3 / gn;
    q.gamma -= t * g.gamma;
    q.phi -= t * g.phi;
    descended += loss(q) < loss(p);
  }
  EXPECT_EQ(descended, 20);
}

TEST(Ppm, RoundTripQuantizesToNearestByte) {
  Image img(3, 2);
  const std::vector<double> v = {0.0, 1.0, 0.5, 0.498, 0.502, -0.3, 1.7, 0.2, 0.8, 0.1, 0.9, 0.333,
                                 0.25, 0.75, 0.004, 0.996, 0.0019, 0.6};
  img.data = v;
  testing::TempDir dir("ppm");
  write_ppm(img, dir / "a.ppm");
  const auto back = read_ppm(dir / "a.ppm");
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double expected = std::round(std::clamp(v[i], 0.0, 1.0) * 255.0) / 255.0;
    EXPECT_NEAR(back.data[i], expected, 1e-12) << i;
  }
  const auto bytes = testing::read_file(dir / "a.ppm");
  EXPECT_EQ(bytes.substr(0, 11), "P6\n3 2\n255\n");
  EXPECT_EQ(bytes.size(), 11u + 18u);
}

TEST(Ppm, MalformedFilesFail) {
  testing::TempDir dir("ppm_bad");
  EXPECT_THROW(read_ppm(dir / "missing.ppm"), IoError);
  {
    std::ofstream(dir / "t.ppm", std::ios::binary) << "P6\n4 4\n255\nabc";
  }
  EXPECT_THROW(read_ppm(dir / "t.ppm"), FormatError);
  {
    std::ofstream(dir / "m.ppm", std::ios::binary) << "P3\n1 1\n255\n0 0 0";
  }
  EXPECT_THROW(read_ppm(dir / "m.ppm"), FormatError);
}

}  // namespace
}  // namespace morphfit
