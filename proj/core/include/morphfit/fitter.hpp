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
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "morphfit/face_params.hpp"
#include "morphfit/image.hpp"
#include "morphfit/losses.hpp"
#include "morphfit/model.hpp"
#include "morphfit/optim.hpp"

namespace morphfit {

// Analysis-by-synthesis fitting of face parameters to one image and its 2D
// landmarks by Adam descent on the face loss.
struct FitConfig {
  int max_iters = 200;
  AdamConfig adam{.learning_rate = 1e-2, .beta1 = 0.9, .beta2 = 0.999, .epsilon = 1e-8,
                  .weight_decay = 0.0};
  LossWeights weights;
  // Iterations at the start that descend on landmark + regularization only.
  int landmark_only_warmup_iters = 30;
  // Stop once the relative change of the total loss between consecutive
  // full-loss iterations falls below this.
  double convergence_tol = 1e-6;
  // Learning-rate multipliers for (alpha, delta, gamma, phi, cam).
  std::array<double, 5> block_lr = {1.0, 1.0, 1.0, 1.0, 1.0};
  // Recorded for reproducibility; the fitter itself draws no random numbers.
  std::uint64_t seed = 0;
  int threads = 1;
};

void to_json(nlohmann::json& j, const FitConfig& c);

struct FitTraceRow {
  int iter = 0;
  LossReport report;  // full face loss at the iterate before its update
};

struct FitResult {
  FaceParams params;  // best iterate by full face loss
  LossReport best;
  int best_iter = 0;
  bool converged = false;
  std::vector<FitTraceRow> trace;
};

// Zero shape, expression, albedo, illumination and rotation; translation
// centers the landmark centroid and log_scale matches the bounding-box
// diagonal of the detections to that of the mean face at the identity camera.
FaceParams init_from_landmarks(const LandmarkSet& landmarks, const MorphableModel& model,
                               int width, int height);

// Fits params to target (the render size is the target's size). mask is an
// optional single-channel pixel weight (ones when null). init defaults to
// init_from_landmarks.
FitResult fit(const Image& target, const LandmarkSet& landmarks, const MorphableModel& model,
              const FitConfig& config, const std::optional<FaceParams>& init = std::nullopt,
              const Image* mask = nullptr,
              const FeatureExtractor& extractor = DownsampleExtractor());

// Columns: iter,total,pixel,perc,lm,reg (weighted terms).
void write_trace_csv(const std::vector<FitTraceRow>& trace, const std::filesystem::path& path);

struct Metrics {
  // Mean per-pixel RGB Euclidean distance over rendered-covered pixels,
  // weighted by the mask. Empty when no covered pixel has mask weight.
  std::optional<double> photometric_l2;
  // Mean Euclidean pixel distance over the valid landmarks.
  std::optional<double> landmark_px;
  int pixels = 0;
};

void to_json(nlohmann::json& j, const Metrics& m);

Metrics evaluate(const Image& target, const Image& mask, const LandmarkSet& landmarks,
                 const MorphableModel& model, const FaceParams& params,
                 const RenderOptions& options = {});

}  // namespace morphfit
