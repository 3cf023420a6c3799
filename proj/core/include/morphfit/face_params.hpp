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
#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace morphfit {

struct MorphableModel;

enum class ParamBlock { kAlpha, kDelta, kGamma, kPhi, kCam };

inline constexpr std::array<ParamBlock, 5> kAllBlocks = {
    ParamBlock::kAlpha, ParamBlock::kDelta, ParamBlock::kGamma, ParamBlock::kPhi,
    ParamBlock::kCam};

std::string_view to_string(ParamBlock block);
ParamBlock parse_block(std::string_view name);

// Camera block layout.
enum CamIndex : int { kPitch = 0, kYaw = 1, kRoll = 2, kTx = 3, kTy = 4, kLogScale = 5 };

inline constexpr int kPhiSize = 27;  // 9 SH coefficients x RGB, channel-major
inline constexpr int kCamSize = 6;

struct ParamLayout {
  int k_shape = 80;
  int k_expr = 64;
  int k_albedo = 80;

  static ParamLayout of(const MorphableModel& model);
  int total() const { return k_shape + k_expr + k_albedo + kPhiSize + kCamSize; }
  int size(ParamBlock block) const;
  int offset(ParamBlock block) const;
  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

// Semantic face code [alpha, delta, gamma, phi, cam]. Also used for gradients
// with respect to that code.
struct FaceParams {
  Eigen::VectorXd alpha;
  Eigen::VectorXd delta;
  Eigen::VectorXd gamma;
  Eigen::VectorXd phi;
  Eigen::VectorXd cam;

  static FaceParams zeros(const ParamLayout& layout);
  static FaceParams unflatten(const ParamLayout& layout, const Eigen::VectorXd& flat);

  ParamLayout layout() const;
  Eigen::VectorXd flatten() const;
  Eigen::VectorXd& block(ParamBlock b);
  const Eigen::VectorXd& block(ParamBlock b) const;
  bool all_finite() const;

  FaceParams& operator+=(const FaceParams& other);
  friend bool operator==(const FaceParams& a, const FaceParams& b);
};

// Throws DimensionError if the blocks do not match the model and
// NumericError on non-finite entries.
void check_params(const MorphableModel& model, const FaceParams& params);

void to_json(nlohmann::json& j, const FaceParams& p);
void from_json(const nlohmann::json& j, FaceParams& p);

FaceParams load_params(const std::filesystem::path& path);
void save_params(const FaceParams& params, const std::filesystem::path& path);

}  // namespace morphfit
