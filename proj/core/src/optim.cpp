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

#include "morphfit/optim.hpp"

#include <algorithm>
#include <cmath>

#include "morphfit/error.hpp"

namespace morphfit {

Adam::Adam(Eigen::Index size, AdamConfig config)
    : config_(config),
      m_(Eigen::VectorXd::Zero(size)),
      v_(Eigen::VectorXd::Zero(size)),
      multipliers_(Eigen::VectorXd::Ones(size)) {
  if (!(config.learning_rate >= 0.0) || !(config.epsilon > 0.0) ||
      !(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.weight_decay >= 0.0)) {
    throw ValidationError("invalid Adam hyper-parameters");
  }
}

void Adam::set_multipliers(Eigen::VectorXd multipliers) {
  if (multipliers.size() != m_.size()) {
    throw DimensionError("learning-rate multipliers do not match parameter count");
  }
  multipliers_ = std::move(multipliers);
}

void Adam::step(Eigen::Ref<Eigen::VectorXd> params,
                const Eigen::Ref<const Eigen::VectorXd>& grad, double lr_scale) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw DimensionError("Adam::step size mismatch");
  }
  ++t_;
  const double lr = config_.learning_rate * lr_scale;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double decay = 1.0 - lr * config_.weight_decay;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    double p = params[i];
    if (config_.weight_decay != 0.0) p *= decay;
    const double denom = std::sqrt(v_[i] / bc2) + config_.epsilon;
    params[i] = p - lr * multipliers_[i] * (m_[i] / bc1) / denom;
  }
}

double warmup_decay_scale(std::int64_t step, std::int64_t warmup, std::int64_t total) {
  if (warmup > 0 && step < warmup) {
    return static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  if (total <= warmup) return 1.0;
  return std::max(0.0, static_cast<double>(total - step) / static_cast<double>(total - warmup));
}

}  // namespace morphfit
