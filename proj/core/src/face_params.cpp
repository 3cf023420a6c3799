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

#include "morphfit/face_params.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "morphfit/error.hpp"
#include "morphfit/model.hpp"

namespace morphfit {

std::string_view to_string(ParamBlock block) {
  switch (block) {
    case ParamBlock::kAlpha: return "alpha";
    case ParamBlock::kDelta: return "delta";
    case ParamBlock::kGamma: return "gamma";
    case ParamBlock::kPhi: return "phi";
    case ParamBlock::kCam: return "cam";
  }
  return "?";
}

ParamBlock parse_block(std::string_view name) {
  for (const auto b : kAllBlocks) {
    if (to_string(b) == name) return b;
  }
  throw ValidationError("unknown parameter block: " + std::string(name));
}

ParamLayout ParamLayout::of(const MorphableModel& model) {
  return {model.k_shape(), model.k_expr(), model.k_albedo()};
}

int ParamLayout::size(ParamBlock block) const {
  switch (block) {
    case ParamBlock::kAlpha: return k_shape;
    case ParamBlock::kDelta: return k_expr;
    case ParamBlock::kGamma: return k_albedo;
    case ParamBlock::kPhi: return kPhiSize;
    case ParamBlock::kCam: return kCamSize;
  }
  return 0;
}

int ParamLayout::offset(ParamBlock block) const {
  int off = 0;
  for (const auto b : kAllBlocks) {
    if (b == block) return off;
    off += size(b);
  }
  return off;
}

FaceParams FaceParams::zeros(const ParamLayout& layout) {
  FaceParams p;
  p.alpha = Eigen::VectorXd::Zero(layout.k_shape);
  p.delta = Eigen::VectorXd::Zero(layout.k_expr);
  p.gamma = Eigen::VectorXd::Zero(layout.k_albedo);
  p.phi = Eigen::VectorXd::Zero(kPhiSize);
  p.cam = Eigen::VectorXd::Zero(kCamSize);
  return p;
}

FaceParams FaceParams::unflatten(const ParamLayout& layout, const Eigen::VectorXd& flat) {
  if (flat.size() != layout.total()) {
    throw DimensionError("flat parameter vector has length " +
                         std::to_string(flat.size()) + ", expected " +
                         std::to_string(layout.total()));
  }
  FaceParams p = zeros(layout);
  for (const auto b : kAllBlocks) {
    p.block(b) = flat.segment(layout.offset(b), layout.size(b));
  }
  return p;
}

ParamLayout FaceParams::layout() const {
  return {static_cast<int>(alpha.size()), static_cast<int>(delta.size()),
          static_cast<int>(gamma.size())};
}

Eigen::VectorXd FaceParams::flatten() const {
  Eigen::VectorXd flat(alpha.size() + delta.size() + gamma.size() + phi.size() +
                       cam.size());
  flat << alpha, delta, gamma, phi, cam;
  return flat;
}

Eigen::VectorXd& FaceParams::block(ParamBlock b) {
  switch (b) {
    case ParamBlock::kAlpha: return alpha;
    case ParamBlock::kDelta: return delta;
    case ParamBlock::kGamma: return gamma;
    case ParamBlock::kPhi: return phi;
    case ParamBlock::kCam: return cam;
  }
  return cam;
}

const Eigen::VectorXd& FaceParams::block(ParamBlock b) const {
  return const_cast<FaceParams*>(this)->block(b);
}

bool FaceParams::all_finite() const {
  return alpha.allFinite() && delta.allFinite() && gamma.allFinite() &&
         phi.allFinite() && cam.allFinite();
}

FaceParams& FaceParams::operator+=(const FaceParams& other) {
  for (const auto b : kAllBlocks) block(b) += other.block(b);
  return *this;
}

bool operator==(const FaceParams& a, const FaceParams& b) {
  for (const auto blk : kAllBlocks) {
    if (a.block(blk).size() != b.block(blk).size() || a.block(blk) != b.block(blk)) {
      return false;
    }
  }
  return true;
}

void check_params(const MorphableModel& model, const FaceParams& params) {
  const auto want = ParamLayout::of(model);
  if (!(params.layout() == want) || params.phi.size() != kPhiSize ||
      params.cam.size() != kCamSize) {
    throw DimensionError(
        "parameter blocks (" + std::to_string(params.alpha.size()) + ", " +
        std::to_string(params.delta.size()) + ", " + std::to_string(params.gamma.size()) +
        ", " + std::to_string(params.phi.size()) + ", " + std::to_string(params.cam.size()) +
        ") do not match model (" + std::to_string(want.k_shape) + ", " +
        std::to_string(want.k_expr) + ", " + std::to_string(want.k_albedo) + ", 27, 6)");
  }
  if (!params.all_finite()) throw NumericError("face parameters contain non-finite values");
}

void to_json(nlohmann::json& j, const FaceParams& p) {
  j = nlohmann::json::object();
  for (const auto b : kAllBlocks) {
    const auto& v = p.block(b);
    j[std::string(to_string(b))] = std::vector<double>(v.data(), v.data() + v.size());
  }
}

void from_json(const nlohmann::json& j, FaceParams& p) {
  if (!j.is_object()) throw FormatError("face parameters must be a JSON object");
  for (const auto b : kAllBlocks) {
    const std::string key(to_string(b));
    if (!j.contains(key) || !j.at(key).is_array()) {
      throw FormatError("face parameters missing array '" + key + "'");
    }
    std::vector<double> values;
    for (const auto& e : j.at(key)) {
      if (!e.is_number()) throw FormatError("non-numeric entry in '" + key + "'");
      values.push_back(e.get<double>());
    }
    p.block(b) = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                   static_cast<Eigen::Index>(values.size()));
  }
  if (p.phi.size() != kPhiSize || p.cam.size() != kCamSize) {
    throw DimensionError("phi must have 27 entries and cam 6");
  }
}

FaceParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed parameter file " + path.string() + ": " + e.what());
  }
  return j.get<FaceParams>();
}

void save_params(const FaceParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << nlohmann::json(params).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace morphfit
