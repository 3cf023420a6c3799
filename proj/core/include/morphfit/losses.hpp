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

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "morphfit/face_params.hpp"
#include "morphfit/image.hpp"
#include "morphfit/model.hpp"
#include "morphfit/renderer.hpp"

namespace morphfit {

// Balancing weights of the face loss
//   L_face = w_pixel L_pixel + w_perc L_perc + w_lm L_lm + w_reg L_reg.
struct LossWeights {
  double pixel = 0.5;
  double perceptual = 0.25;
  double landmark = 5e-4;
  double regularization = 0.1;
  // Per-block multipliers inside L_reg.
  double reg_alpha = 1.0;
  double reg_delta = 1.0;
  double reg_gamma = 1.0;
};

void to_json(nlohmann::json& j, const LossWeights& w);

struct LossTerm {
  double raw = 0.0;
  double weighted = 0.0;
};

struct LossReport {
  double total = 0.0;
  LossTerm pixel;
  LossTerm perceptual;
  LossTerm landmark;
  LossTerm regularization;
};

// Scalar image loss together with its adjoint on the rendered image.
struct ImageLoss {
  double value = 0.0;
  Image adjoint;
};

// sum_p mask_p |x_p - y_p|^2 / max(sum_p mask_p, 1). mask is single channel.
ImageLoss pixel_loss(const Image& target, const Image& rendered, const Image& mask);

// Diagonal-covariance Gaussian mixture over RGB in [0, 1].
struct SkinGmm {
  std::vector<double> weights;
  std::vector<Eigen::Vector3d> means;
  std::vector<Eigen::Vector3d> variances;
  std::vector<int> skin_components;
};

void from_json(const nlohmann::json& j, SkinGmm& gmm);
SkinGmm load_gmm(const std::filesystem::path& path);

// Posterior probability that each pixel was drawn from a skin component.
// Without a mixture every pixel gets weight 1. In hard mode the posterior is
// thresholded at 0.5.
Image skin_mask(const Image& image, const std::optional<SkinGmm>& gmm, bool hard = false);

// 2D detections in pixels; std::nullopt marks a missing landmark.
using LandmarkSet = std::vector<std::optional<Eigen::Vector2d>>;

LandmarkSet load_landmarks(const std::filesystem::path& path);
void save_landmarks(const LandmarkSet& landmarks, const std::filesystem::path& path);
LandmarkSet to_landmark_set(const Eigen::Matrix2Xd& points);

struct LandmarkLoss {
  double value = 0.0;
  Eigen::Matrix2Xd adjoint;  // on the projected points; zero for missing ones
  int valid = 0;
};

// Mean squared pixel distance over the landmarks present in `detected`.
LandmarkLoss landmark_loss(const LandmarkSet& detected, const Eigen::Matrix2Xd& projected);

// Maps an image to a unit-norm feature vector and back-propagates feature
// adjoints to the image.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual Eigen::VectorXd extract(const Image& image) const = 0;
  virtual Image backward(const Image& image, const Eigen::VectorXd& d_feature) const = 0;
};

// Parameter-free default: grayscale (RGB mean), box-downsampled to grid x grid
// cells, flattened row-major and normalized to unit length.
class DownsampleExtractor final : public FeatureExtractor {
 public:
  explicit DownsampleExtractor(int grid = 8) : grid_(grid) {}
  Eigen::VectorXd extract(const Image& image) const override;
  Image backward(const Image& image, const Eigen::VectorXd& d_feature) const override;
  int grid() const { return grid_; }

 private:
  Eigen::VectorXd pooled(const Image& image) const;
  int grid_;
};

// 1 - cos(f(target), f(rendered)), in [0, 2].
ImageLoss perceptual_loss(const Image& target, const Image& rendered,
                          const FeatureExtractor& extractor);

struct RegLoss {
  double value = 0.0;
  FaceParams gradient;
};

// Sum over alpha, delta and gamma of block_weight * |block|^2. Illumination
// and camera are not regularized.
RegLoss reg_loss(const FaceParams& params, const LossWeights& weights);

Eigen::Matrix2Xd project_landmarks(const MorphableModel& model, const FaceParams& params,
                                   int width, int height);

struct FaceLossOptions {
  bool compute_gradient = true;
  int threads = 1;
};

struct FaceLossResult {
  LossReport report;
  FaceParams gradient;  // zeros when compute_gradient is false
  RenderOutput render;
};

// Renders params at the target's size and evaluates all four terms. The
// gradient chains the pixel and perceptual adjoints through render_backward
// and the landmark adjoint through the projection. mask defaults to ones.
FaceLossResult face_loss(const Image& target, const LandmarkSet& landmarks,
                         const MorphableModel& model, const FaceParams& params,
                         const LossWeights& weights, const FeatureExtractor& extractor,
                         const Image* mask = nullptr, const FaceLossOptions& options = {});

}  // namespace morphfit
