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

#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "morphfit/error.hpp"
#include "morphfit/fitter.hpp"
#include "oracles.hpp"

namespace morphfit {
namespace {

constexpr int kSize = 32;

struct Scene {
  FaceParams truth;
  Image target;
  LandmarkSet landmarks;
};

Scene make_scene(std::uint64_t seed, int size = kSize) {
  const auto& m = testing::synthetic_model(16);
  Scene s;
  s.truth = testing::random_params(ParamLayout::of(m), seed);
  s.target = render(m, s.truth, size, size).color;
  s.landmarks = to_landmark_set(project_landmarks(m, s.truth, size, size));
  return s;
}

FaceParams perturb(const FaceParams& p, std::uint64_t seed, double sigma) {
  FaceParams q = p;
  const auto n = testing::gaussian_noise(p.layout(), seed, sigma);
  q += n;
  return q;
}

TEST(InitFromLandmarks, MeanFaceGivesZeroCamera) {
  const auto& m = testing::synthetic_model(16);
  const auto zero = FaceParams::zeros(ParamLayout::of(m));
  const auto lm = to_landmark_set(project_landmarks(m, zero, 64, 64));
  const auto p = init_from_landmarks(lm, m, 64, 64);
  EXPECT_LT(p.cam.cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_TRUE(p.alpha.isZero(0.0));
  EXPECT_TRUE(p.phi.isZero(0.0));
}

TEST(InitFromLandmarks, ShiftMovesTranslation) {
  const auto& m = testing::synthetic_model(16);
  const auto zero = FaceParams::zeros(ParamLayout::of(m));
  Eigen::Matrix2Xd pts = project_landmarks(m, zero, 64, 64);
  pts.row(0).array() += 16.0;
  const auto p = init_from_landmarks(to_landmark_set(pts), m, 64, 64);
  EXPECT_NEAR(p.cam[kTx], 0.5, 1e-9);
  EXPECT_NEAR(p.cam[kTy], 0.0, 1e-9);
  EXPECT_NEAR(p.cam[kLogScale], 0.0, 1e-9);
}

TEST(InitFromLandmarks, ScaleAgreesWithSimilarityFit) {
  const auto& m = testing::synthetic_model(16);
  const auto zero = FaceParams::zeros(ParamLayout::of(m));
  const Eigen::Matrix2Xd ref = project_landmarks(m, zero, 64, 64);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 20; ++t) {
    const double s = std::exp(0.3 * u(rng)), a = 0.05 * u(rng);
    Eigen::Matrix2d affine;
    affine << s * (1 + a), 0.03 * u(rng) * s, 0.03 * u(rng) * s, s * (1 - a);
    const Eigen::Vector2d shift(5 * u(rng), 5 * u(rng));
    Eigen::Matrix2Xd pts = (affine * (ref.colwise() - Eigen::Vector2d(32, 32))).colwise() + (Eigen::Vector2d(32, 32) + shift);
    const auto p = init_from_landmarks(to_landmark_set(pts), m, 64, 64);
    const double oracle = testing::umeyama(ref, pts).scale;
    EXPECT_NEAR(std::exp(p.cam[kLogScale]) / oracle, 1.0, 0.05) << t;
  }
}

TEST(InitFromLandmarks, RejectsTooFewLandmarks) {
  const auto& m = testing::synthetic_model(16);
  LandmarkSet lm(68);
  lm[3] = Eigen::Vector2d(1, 2);
  EXPECT_THROW(init_from_landmarks(lm, m, 64, 64), ValidationError);
  EXPECT_THROW(init_from_landmarks(LandmarkSet(5), m, 64, 64), DimensionError);
}

TEST(Fit, FixedPointWithoutRegularization) {
  const auto& m = testing::synthetic_model(16);
  const auto s = make_scene(2);
  FitConfig c;
  c.max_iters = 20;
  c.landmark_only_warmup_iters = 0;
  c.weights.regularization = 0.0;
  const auto r = fit(s.target, s.landmarks, m, c, s.truth);
  EXPECT_EQ(r.best_iter, 0);
  EXPECT_TRUE(r.params == s.truth);
  EXPECT_NEAR(r.best.total, 0.0, 1e-12);
}

TEST(Fit, DefaultRegDoesNotWorsenLossAtTruth) {
  const auto& m = testing::synthetic_model(16);
  const auto s = make_scene(3);
  FitConfig c;
  c.max_iters = 30;
  const auto r = fit(s.target, s.landmarks, m, c, s.truth);
  EXPECT_LE(r.best.total, r.trace.front().report.total);
}

TEST(Fit, BestSoFarIsNonincreasingAndDeterministic) {
  const auto& m = testing::synthetic_model(16);
  const auto s = make_scene(4);
  FitConfig c;
  c.max_iters = 60;
  const auto init = perturb(s.truth, 5, 0.05);
  const auto a = fit(s.target, s.landmarks, m, c, init);
  const auto b = fit(s.target, s.landmarks, m, c, init);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].report.total, b.trace[i].report.total);
    EXPECT_EQ(a.trace[i].iter, static_cast<int>(i));
    best = std::min(best, a.trace[i].report.total);
  }
  EXPECT_TRUE(a.params == b.params);
  EXPECT_EQ(a.best.total, best);
  EXPECT_EQ(a.trace[static_cast<std::size_t>(a.best_iter)].report.total, best);
  EXPECT_LT(a.best.total, a.trace.front().report.total);
}

TEST(Fit, RecoversPerturbedTruth) {
  const auto& m = testing::synthetic_model(24);
  const auto layout = ParamLayout::of(m);
  auto truth = testing::random_params(layout, 6);
  const auto target = render(m, truth, 64, 64).color;
  const auto lm = to_landmark_set(project_landmarks(m, truth, 64, 64));
  const Image ones(64, 64, 1, 1.0);
  const auto init = perturb(truth, 7, 0.05);
  const auto r = fit(target, lm, m, FitConfig{}, init);
  const auto before = evaluate(target, ones, lm, m, init);
  const auto after = evaluate(target, ones, lm, m, r.params);
  ASSERT_TRUE(after.photometric_l2 && after.landmark_px);
  EXPECT_LE(*after.photometric_l2, 0.02);
  EXPECT_LE(*after.landmark_px, 1.0);
  EXPECT_LT(*after.photometric_l2, *before.photometric_l2);
}

TEST(Fit, HeavyRegularizationShrinksStatisticalBlocks) {
  const auto& m = testing::synthetic_model(16);
  const auto s = make_scene(8);
  FitConfig c;
  // Adam moves each coordinate by about lr per step; give it room to reach the origin.
  c.max_iters = 600;
  c.weights.regularization = 1e6;
  const auto r = fit(s.target, s.landmarks, m, c, s.truth);
  EXPECT_LE(r.params.alpha.norm(), 1e-3);
  EXPECT_LE(r.params.delta.norm(), 1e-3);
  EXPECT_LE(r.params.gamma.norm(), 1e-3);
}

TEST(Fit, LandmarkOnlyMatchesGaussNewton) {
  const auto& m = testing::synthetic_model(16);
  const auto s = make_scene(9, 64);
  // Detector noise keeps the optimum away from zero.
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  LandmarkSet noisy = s.landmarks;
  Eigen::Matrix2Xd det(2, 68);
  for (int i = 0; i < 68; ++i) {
    *noisy[static_cast<std::size_t>(i)] += Eigen::Vector2d(n(rng), n(rng));
    det.col(i) = *noisy[static_cast<std::size_t>(i)];
  }
  FitConfig c;
  c.max_iters = 400;
  c.weights.pixel = 0.0;
  c.weights.perceptual = 0.0;
  const auto start = init_from_landmarks(noisy, m, 64, 64);
  const auto r = fit(s.target, noisy, m, c, start);
  const auto gn = testing::gauss_newton_landmark_fit(m, det, start, 64, 64, c.weights.landmark,
                                                     c.weights.regularization, 50);
  ASSERT_GT(gn.landmark_loss, 0.0);
  EXPECT_NEAR(r.best.landmark.raw / gn.landmark_loss, 1.0, 0.10)
      << "fit " << r.best.landmark.raw << " gauss-newton " << gn.landmark_loss;
}

TEST(Fit, RejectsBadConfig) {
  const auto& m = testing::synthetic_model(16);
  const auto s = make_scene(11);
  FitConfig c;
  c.max_iters = 0;
  EXPECT_THROW(fit(s.target, s.landmarks, m, c, s.truth), ValidationError);
}

TEST(Evaluate, ExactReconstructionIsZero) {
  const auto& m = testing::synthetic_model(16);
  const auto s = make_scene(12);
  const auto e = evaluate(s.target, Image(kSize, kSize, 1, 1.0), s.landmarks, m, s.truth);
  ASSERT_TRUE(e.photometric_l2 && e.landmark_px);
  EXPECT_EQ(*e.photometric_l2, 0.0);
  EXPECT_EQ(*e.landmark_px, 0.0);
  EXPECT_GT(e.pixels, 0);
}

TEST(Evaluate, OneLandmarkOffByThreeFour) {
  const auto& m = testing::synthetic_model(16);
  const auto s = make_scene(13);
  auto lm = s.landmarks;
  *lm[17] += Eigen::Vector2d(3, 4);
  const auto e = evaluate(s.target, Image(kSize, kSize, 1, 1.0), lm, m, s.truth);
  EXPECT_NEAR(*e.landmark_px, 5.0 / 68.0, 1e-12);
}

TEST(Evaluate, MatchesPerPixelSummation) {
  const auto& m = testing::synthetic_model(16);
  const auto s = make_scene(14);
  auto p = perturb(s.truth, 15, 0.3);
  Image mask(kSize, kSize, 1);
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : mask.data) v = u(rng);
  const auto e = evaluate(s.target, mask, s.landmarks, m, p);
  const auto ref = testing::reference_render(m, p, kSize, kSize);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (ref.tri_id[i] < 0) continue;
    double d2 = 0;
    for (int c = 0; c < 3; ++c) {
      const double d = ref.rgb[3 * i + static_cast<std::size_t>(c)] - s.target.data[3 * i + static_cast<std::size_t>(c)];
      d2 += d * d;
    }
    num += mask.data[i] * std::sqrt(d2);
    den += mask.data[i];
  }
  EXPECT_NEAR(*e.photometric_l2, num / den, 1e-9);
  const auto proj = testing::reference_landmarks(m, p, kSize, kSize);
  double lsum = 0;
  for (int i = 0; i < 68; ++i) lsum += (proj.col(i) - *s.landmarks[static_cast<std::size_t>(i)]).norm();
  EXPECT_NEAR(*e.landmark_px, lsum / 68, 1e-9);
}

TEST(Evaluate, EmptyMaskIsUndefined) {
  const auto& m = testing::synthetic_model(16);
  const auto s = make_scene(17);
  const auto e = evaluate(s.target, Image(kSize, kSize, 1, 0.0), LandmarkSet(68), m, s.truth);
  EXPECT_FALSE(e.photometric_l2.has_value());
  EXPECT_FALSE(e.landmark_px.has_value());
}

TEST(Trace, CsvHasHeaderAndOneRowPerIteration) {
  const auto& m = testing::synthetic_model(16);
  const auto s = make_scene(18);
  FitConfig c;
  c.max_iters = 5;
  const auto r = fit(s.target, s.landmarks, m, c, perturb(s.truth, 19, 0.05));
  testing::TempDir dir("trace");
  write_trace_csv(r.trace, dir / "t.csv");
  const auto text = testing::read_file(dir / "t.csv");
  EXPECT_EQ(text.rfind("iter,total,pixel,perc,lm,reg\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(r.trace.size()) + 1);
}

}  // namespace
}  // namespace morphfit
