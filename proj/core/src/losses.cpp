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

#include "morphfit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "morphfit/decoder.hpp"
#include "morphfit/error.hpp"
#include "morphfit/scene.hpp"

namespace morphfit {

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"pixel", w.pixel},
       {"perceptual", w.perceptual},
       {"landmark", w.landmark},
       {"regularization", w.regularization},
       {"reg_alpha", w.reg_alpha},
       {"reg_delta", w.reg_delta},
       {"reg_gamma", w.reg_gamma}};
}

ImageLoss pixel_loss(const Image& target, const Image& rendered, const Image& mask) {
  if (!target.same_shape(rendered) || target.channels != 3) {
    throw DimensionError("pixel_loss: target and rendered images differ in shape");
  }
  if (mask.width != target.width || mask.height != target.height || mask.channels != 1) {
    throw DimensionError("pixel_loss: mask must be single channel and match the image");
  }
  double mass = 0.0;
  for (const double m : mask.data) mass += m;
  const double denom = std::max(mass, 1.0);

  ImageLoss out;
  out.adjoint = Image(target.width, target.height, 3);
  double sum = 0.0;
  for (std::size_t p = 0; p < mask.data.size(); ++p) {
    const double m = mask.data[p];
    if (m == 0.0) continue;
    for (int ch = 0; ch < 3; ++ch) {
      const double d = target.data[3 * p + ch] - rendered.data[3 * p + ch];
      sum += m * d * d;
      out.adjoint.data[3 * p + ch] = -2.0 * m * d / denom;
    }
  }
  out.value = sum / denom;
  return out;
}

void from_json(const nlohmann::json& j, SkinGmm& gmm) {
  try {
    gmm.weights = j.at("weights").get<std::vector<double>>();
    const auto means = j.at("means").get<std::vector<std::vector<double>>>();
    const auto covs = j.at("covariances_diag").get<std::vector<std::vector<double>>>();
    gmm.skin_components = j.at("skin_components").get<std::vector<int>>();
    const std::size_t k = gmm.weights.size();
    if (k == 0 || means.size() != k || covs.size() != k) {
      throw FormatError("GMM weights, means and covariances_diag must have equal length");
    }
    gmm.means.clear();
    gmm.variances.clear();
    for (std::size_t i = 0; i < k; ++i) {
      if (means[i].size() != 3 || covs[i].size() != 3) {
        throw FormatError("GMM means and covariances must be RGB triples");
      }
      gmm.means.emplace_back(means[i][0], means[i][1], means[i][2]);
      gmm.variances.emplace_back(covs[i][0], covs[i][1], covs[i][2]);
      if (!(gmm.variances.back().minCoeff() > 0.0) || !(gmm.weights[i] >= 0.0)) {
        throw FormatError("GMM variances must be positive and weights non-negative");
      }
    }
    for (const int s : gmm.skin_components) {
      if (s < 0 || static_cast<std::size_t>(s) >= k) {
        throw FormatError("GMM skin component index out of range");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed GMM: ") + e.what());
  }
}

SkinGmm load_gmm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed GMM file " + path.string() + ": " + e.what());
  }
  return j.get<SkinGmm>();
}

Image skin_mask(const Image& image, const std::optional<SkinGmm>& gmm, bool hard) {
  Image mask(image.width, image.height, 1, 1.0);
  if (!gmm) return mask;
  const std::size_t k = gmm->weights.size();
  std::vector<std::uint8_t> is_skin(k, 0);
  for (const int s : gmm->skin_components) is_skin[static_cast<std::size_t>(s)] = 1;
  std::vector<double> log_terms(k);
  for (std::size_t p = 0; p < mask.data.size(); ++p) {
    const Eigen::Vector3d x(image.data[3 * p], image.data[3 * p + 1], image.data[3 * p + 2]);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      const Eigen::Vector3d d = x - gmm->means[i];
      double l = std::log(gmm->weights[i]);
      for (int c = 0; c < 3; ++c) {
        const double var = gmm->variances[i][c];
        l -= 0.5 * (d[c] * d[c] / var + std::log(2.0 * std::numbers::pi * var));
      }
      log_terms[i] = l;
      best = std::max(best, l);
    }
    double skin = 0.0, all = 0.0;
    if (std::isfinite(best)) {
      for (std::size_t i = 0; i < k; ++i) {
        const double e = std::exp(log_terms[i] - best);
        all += e;
        if (is_skin[i]) skin += e;
      }
    }
    const double posterior = all > 0.0 ? skin / all : 0.0;
    mask.data[p] = hard ? (posterior >= 0.5 ? 1.0 : 0.0) : posterior;
  }
  return mask;
}

LandmarkSet load_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed landmark file " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw FormatError("landmark file must hold a JSON array");
  LandmarkSet out;
  for (const auto& e : j) {
    if (e.is_null()) {
      out.emplace_back(std::nullopt);
      continue;
    }
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
      throw FormatError("landmark entries must be [x, y] pairs or null");
    }
    out.emplace_back(Eigen::Vector2d(e[0].get<double>(), e[1].get<double>()));
  }
  return out;
}

void save_landmarks(const LandmarkSet& landmarks, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& l : landmarks) {
    if (l) {
      j.push_back({l->x(), l->y()});
    } else {
      j.push_back(nullptr);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

LandmarkSet to_landmark_set(const Eigen::Matrix2Xd& points) {
  LandmarkSet out;
  out.reserve(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index i = 0; i < points.cols(); ++i) out.emplace_back(points.col(i));
  return out;
}

LandmarkLoss landmark_loss(const LandmarkSet& detected, const Eigen::Matrix2Xd& projected) {
  if (static_cast<Eigen::Index>(detected.size()) != projected.cols()) {
    throw DimensionError("landmark_loss: " + std::to_string(detected.size()) +
                         " detections vs " + std::to_string(projected.cols()) +
                         " projected landmarks");
  }
  LandmarkLoss out;
  out.adjoint = Eigen::Matrix2Xd::Zero(2, projected.cols());
  for (const auto& d : detected) out.valid += d.has_value() ? 1 : 0;
  if (out.valid == 0) return out;
  double sum = 0.0;
  for (std::size_t i = 0; i < detected.size(); ++i) {
    if (!detected[i]) continue;
    const auto col = static_cast<Eigen::Index>(i);
    const Eigen::Vector2d diff = projected.col(col) - *detected[i];
    sum += diff.squaredNorm();
    out.adjoint.col(col) = 2.0 * diff / out.valid;
  }
  out.value = sum / out.valid;
  return out;
}

Eigen::VectorXd DownsampleExtractor::pooled(const Image& image) const {
  if (grid_ < 1) throw ValidationError("extractor grid must be positive");
  if (image.channels != 3) throw DimensionError("extractor expects an RGB image");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(grid_ * grid_);
  for (int gy = 0; gy < grid_; ++gy) {
    const int y0 = gy * image.height / grid_, y1 = (gy + 1) * image.height / grid_;
    for (int gx = 0; gx < grid_; ++gx) {
      const int x0 = gx * image.width / grid_, x1 = (gx + 1) * image.width / grid_;
      const int count = (y1 - y0) * (x1 - x0);
      if (count == 0) continue;
      double sum = 0.0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          sum += (image.at(x, y, 0) + image.at(x, y, 1) + image.at(x, y, 2)) / 3.0;
        }
      }
      v[gy * grid_ + gx] = sum / count;
    }
  }
  return v;
}

Eigen::VectorXd DownsampleExtractor::extract(const Image& image) const {
  const Eigen::VectorXd v = pooled(image);
  const double len = v.norm();
  return len > 0.0 ? Eigen::VectorXd(v / len) : v;
}

Image DownsampleExtractor::backward(const Image& image, const Eigen::VectorXd& d_feature) const {
  const Eigen::VectorXd v = pooled(image);
  const double len = v.norm();
  Image out(image.width, image.height, 3);
  if (len == 0.0) return out;
  const Eigen::VectorXd f = v / len;
  const Eigen::VectorXd dv = (d_feature - f * f.dot(d_feature)) / len;
  for (int gy = 0; gy < grid_; ++gy) {
    const int y0 = gy * image.height / grid_, y1 = (gy + 1) * image.height / grid_;
    for (int gx = 0; gx < grid_; ++gx) {
      const int x0 = gx * image.width / grid_, x1 = (gx + 1) * image.width / grid_;
      const int count = (y1 - y0) * (x1 - x0);
      if (count == 0) continue;
      const double g = dv[gy * grid_ + gx] / (3.0 * count);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = g;
        }
      }
    }
  }
  return out;
}

ImageLoss perceptual_loss(const Image& target, const Image& rendered,
                          const FeatureExtractor& extractor) {
  if (!target.same_shape(rendered)) {
    throw DimensionError("perceptual_loss: target and rendered images differ in shape");
  }
  const Eigen::VectorXd ft = extractor.extract(target);
  const Eigen::VectorXd fr = extractor.extract(rendered);
  if (ft.size() != fr.size() || !ft.allFinite() || !fr.allFinite()) {
    throw NumericError("feature extractor produced invalid features");
  }
  ImageLoss out;
  out.value = 1.0 - ft.dot(fr);
  out.adjoint = extractor.backward(rendered, -ft);
  return out;
}

RegLoss reg_loss(const FaceParams& params, const LossWeights& weights) {
  RegLoss out;
  out.gradient = FaceParams::zeros(params.layout());
  const std::array<std::pair<ParamBlock, double>, 3> blocks = {
      std::pair{ParamBlock::kAlpha, weights.reg_alpha},
      std::pair{ParamBlock::kDelta, weights.reg_delta},
      std::pair{ParamBlock::kGamma, weights.reg_gamma}};
  for (const auto& [block, w] : blocks) {
    const auto& v = params.block(block);
    out.value += w * v.squaredNorm();
    out.gradient.block(block) = 2.0 * w * v;
  }
  return out;
}

Eigen::Matrix2Xd project_landmarks(const MorphableModel& model, const FaceParams& params,
                                   int width, int height) {
  const auto positions = decode_geometry(model, params.alpha, params.delta);
  const auto lm = select_landmarks_3d(positions, model.landmark_indices);
  const auto screen = project(lm, params.cam, width, height);
  Eigen::Matrix2Xd out(2, static_cast<Eigen::Index>(screen.size()));
  for (std::size_t i = 0; i < screen.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) << screen[i].x_pix, screen[i].y_pix;
  }
  return out;
}

FaceLossResult face_loss(const Image& target, const LandmarkSet& landmarks,
                         const MorphableModel& model, const FaceParams& params,
                         const LossWeights& weights, const FeatureExtractor& extractor,
                         const Image* mask, const FaceLossOptions& options) {
  const int width = target.width, height = target.height;
  const RenderOptions ropts{options.threads};
  const auto state = render_state(model, params, width, height, ropts);
  const Image ones(width, height, 1, 1.0);
  const Image& m = mask ? *mask : ones;

  const auto pix = pixel_loss(target, state.output.color, m);
  const auto perc = perceptual_loss(target, state.output.color, extractor);
  const auto reg = reg_loss(params, weights);

  const auto positions_lm = select_landmarks_3d(state.positions, model.landmark_indices);
  const auto screen_lm = project(positions_lm, params.cam, width, height);
  Eigen::Matrix2Xd projected(2, static_cast<Eigen::Index>(screen_lm.size()));
  for (std::size_t i = 0; i < screen_lm.size(); ++i) {
    projected.col(static_cast<Eigen::Index>(i)) << screen_lm[i].x_pix, screen_lm[i].y_pix;
  }
  const auto lm = landmark_loss(landmarks, projected);

  FaceLossResult out;
  auto& r = out.report;
  r.pixel = {pix.value, weights.pixel * pix.value};
  r.perceptual = {perc.value, weights.perceptual * perc.value};
  r.landmark = {lm.value, weights.landmark * lm.value};
  r.regularization = {reg.value, weights.regularization * reg.value};
  r.total = r.pixel.weighted + r.perceptual.weighted + r.landmark.weighted +
            r.regularization.weighted;
  if (!std::isfinite(r.total)) throw NumericError("face loss is not finite");

  out.gradient = FaceParams::zeros(params.layout());
  if (options.compute_gradient) {
    Image adjoint(width, height, 3);
    for (std::size_t i = 0; i < adjoint.data.size(); ++i) {
      adjoint.data[i] = weights.pixel * pix.adjoint.data[i] +
                        weights.perceptual * perc.adjoint.data[i];
    }
    if (weights.pixel != 0.0 || weights.perceptual != 0.0) {
      out.gradient = render_backward(model, params, state, adjoint, ropts);
    }
    if (weights.landmark != 0.0 && lm.valid > 0) {
      Eigen::Matrix3Xd d_screen = Eigen::Matrix3Xd::Zero(3, projected.cols());
      d_screen.topRows<2>() = weights.landmark * lm.adjoint;
      const auto pg = project_backward(positions_lm, params.cam, width, height, d_screen);
      Eigen::Matrix3Xd d_positions = Eigen::Matrix3Xd::Zero(3, state.positions.cols());
      for (std::size_t i = 0; i < model.landmark_indices.size(); ++i) {
        d_positions.col(model.landmark_indices[i]) += pg.positions.col(static_cast<Eigen::Index>(i));
      }
      const auto geo = decode_geometry_backward(model, d_positions);
      out.gradient.alpha += geo.alpha;
      out.gradient.delta += geo.delta;
      out.gradient.cam += pg.cam;
    }
    for (const auto b : {ParamBlock::kAlpha, ParamBlock::kDelta, ParamBlock::kGamma}) {
      out.gradient.block(b) += weights.regularization * reg.gradient.block(b);
    }
  }
  out.render = state.output;
  return out;
}

}  // namespace morphfit
