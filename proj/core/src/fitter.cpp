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

#include "morphfit/fitter.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include <nlohmann/json.hpp>

#include "morphfit/error.hpp"
#include "morphfit/renderer.hpp"

namespace morphfit {

void to_json(nlohmann::json& j, const FitConfig& c) {
  j = {{"max_iters", c.max_iters},
       {"optimizer", "adam"},
       {"learning_rate", c.adam.learning_rate},
       {"beta1", c.adam.beta1},
       {"beta2", c.adam.beta2},
       {"epsilon", c.adam.epsilon},
       {"weight_decay", c.adam.weight_decay},
       {"weights", c.weights},
       {"landmark_only_warmup_iters", c.landmark_only_warmup_iters},
       {"convergence_tol", c.convergence_tol},
       {"block_lr", c.block_lr},
       {"seed", c.seed}};
}

void to_json(nlohmann::json& j, const Metrics& m) {
  j = nlohmann::json::object();
  j["photometric_l2"] = m.photometric_l2 ? nlohmann::json(*m.photometric_l2) : nlohmann::json();
  j["landmark_px"] = m.landmark_px ? nlohmann::json(*m.landmark_px) : nlohmann::json();
  j["pixels"] = m.pixels;
}

namespace {

struct Box {
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = Eigen::Vector2d::Constant(-std::numeric_limits<double>::infinity());
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int count = 0;

  void add(const Eigen::Vector2d& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
    sum += p;
    ++count;
  }
  double diagonal() const { return (hi - lo).norm(); }
  Eigen::Vector2d centroid() const { return sum / count; }
};

Eigen::Vector2d to_ndc(const Eigen::Vector2d& pix, int width, int height) {
  return {2.0 * pix.x() / width - 1.0, 1.0 - 2.0 * pix.y() / height};
}

}  // namespace

FaceParams init_from_landmarks(const LandmarkSet& landmarks, const MorphableModel& model,
                               int width, int height) {
  if (static_cast<int>(landmarks.size()) != model.n_landmarks()) {
    throw DimensionError("expected " + std::to_string(model.n_landmarks()) +
                         " landmarks, got " + std::to_string(landmarks.size()));
  }
  FaceParams p = FaceParams::zeros(ParamLayout::of(model));
  const Eigen::Matrix2Xd mean_lm = project_landmarks(model, p, width, height);
  Box detected, reference;
  for (std::size_t i = 0; i < landmarks.size(); ++i) {
    if (!landmarks[i]) continue;
    detected.add(*landmarks[i]);
    reference.add(mean_lm.col(static_cast<Eigen::Index>(i)));
  }
  if (detected.count < 2) {
    throw ValidationError("initialization needs at least 2 valid landmarks");
  }
  const double d_det = detected.diagonal(), d_ref = reference.diagonal();
  if (!(d_det > 0.0) || !(d_ref > 0.0)) {
    throw ValidationError("degenerate landmark configuration (zero extent)");
  }
  const double scale = d_det / d_ref;
  const Eigen::Vector2d t = to_ndc(detected.centroid(), width, height) -
                            scale * to_ndc(reference.centroid(), width, height);
  p.cam[kTx] = t.x();
  p.cam[kTy] = t.y();
  p.cam[kLogScale] = std::log(scale);
  return p;
}

FitResult fit(const Image& target, const LandmarkSet& landmarks, const MorphableModel& model,
              const FitConfig& config, const std::optional<FaceParams>& init, const Image* mask,
              const FeatureExtractor& extractor) {
  if (config.max_iters < 1 || !(config.adam.learning_rate > 0.0)) {
    throw ValidationError("fit needs positive iterations and step size");
  }
  const auto layout = ParamLayout::of(model);
  FaceParams params =
      init ? *init : init_from_landmarks(landmarks, model, target.width, target.height);
  check_params(model, params);

  Adam adam(layout.total(), config.adam);
  Eigen::VectorXd multipliers(layout.total());
  for (std::size_t b = 0; b < kAllBlocks.size(); ++b) {
    multipliers.segment(layout.offset(kAllBlocks[b]), layout.size(kAllBlocks[b]))
        .setConstant(config.block_lr[b]);
  }
  adam.set_multipliers(multipliers);

  LossWeights warm = config.weights;
  warm.pixel = 0.0;
  warm.perceptual = 0.0;
  const FaceLossOptions with_grad{true, config.threads};
  const FaceLossOptions no_grad{false, config.threads};

  FitResult result;
  result.params = params;
  double best = std::numeric_limits<double>::infinity();
  double previous = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd flat = params.flatten();

  for (int it = 0; it <= config.max_iters; ++it) {
    const bool warmup = it < config.landmark_only_warmup_iters;
    const bool last = it == config.max_iters;
    auto full = face_loss(target, landmarks, model, params, config.weights, extractor, mask,
                          (warmup || last) ? no_grad : with_grad);
    if (!std::isfinite(full.report.total)) {
      throw NumericError("fit: non-finite loss at iteration " + std::to_string(it));
    }
    result.trace.push_back({it, full.report});
    if (full.report.total < best) {
      best = full.report.total;
      result.best = full.report;
      result.best_iter = it;
      result.params = params;
    }
    if (last) break;
    if (!warmup && std::isfinite(previous) &&
        std::abs(previous - full.report.total) <=
            config.convergence_tol * std::max(std::abs(previous), 1e-300)) {
      result.converged = true;
      break;
    }
    previous = warmup ? std::numeric_limits<double>::quiet_NaN() : full.report.total;

    const FaceParams grad =
        warmup ? face_loss(target, landmarks, model, params, warm, extractor, mask, with_grad)
                     .gradient
               : full.gradient;
    const Eigen::VectorXd g = grad.flatten();
    if (!g.allFinite()) {
      throw NumericError("fit: non-finite gradient at iteration " + std::to_string(it));
    }
    adam.step(flat, g);
    params = FaceParams::unflatten(layout, flat);
  }
  return result;
}

void write_trace_csv(const std::vector<FitTraceRow>& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "iter,total,pixel,perc,lm,reg\n" << std::setprecision(17);
  for (const auto& row : trace) {
    const auto& r = row.report;
    out << row.iter << ',' << r.total << ',' << r.pixel.weighted << ','
        << r.perceptual.weighted << ',' << r.landmark.weighted << ','
        << r.regularization.weighted << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Metrics evaluate(const Image& target, const Image& mask, const LandmarkSet& landmarks,
                 const MorphableModel& model, const FaceParams& params,
                 const RenderOptions& options) {
  if (mask.width != target.width || mask.height != target.height || mask.channels != 1) {
    throw DimensionError("evaluate: mask must be single channel and match the target");
  }
  const auto rendered = render(model, params, target.width, target.height, options);
  Metrics m;
  double sum = 0.0, mass = 0.0;
  for (std::size_t p = 0; p < rendered.coverage.size(); ++p) {
    if (!rendered.coverage[p] || mask.data[p] <= 0.0) continue;
    double d2 = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
      const double d = target.data[3 * p + ch] - rendered.color.data[3 * p + ch];
      d2 += d * d;
    }
    sum += mask.data[p] * std::sqrt(d2);
    mass += mask.data[p];
    ++m.pixels;
  }
  if (mass > 0.0) m.photometric_l2 = sum / mass;

  const auto projected = project_landmarks(model, params, target.width, target.height);
  if (static_cast<Eigen::Index>(landmarks.size()) != projected.cols()) {
    throw DimensionError("evaluate: landmark count does not match the model");
  }
  double lsum = 0.0;
  int valid = 0;
  for (std::size_t i = 0; i < landmarks.size(); ++i) {
    if (!landmarks[i]) continue;
    lsum += (projected.col(static_cast<Eigen::Index>(i)) - *landmarks[i]).norm();
    ++valid;
  }
  if (valid > 0) m.landmark_px = lsum / valid;
  return m;
}

}  // namespace morphfit
