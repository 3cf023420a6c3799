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

#include <cstdint>

#include <Eigen/Core>

namespace morphfit {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled (AdamW) decay: p -= lr * weight_decay * p before the Adam step.
  double weight_decay = 0.0;
};

// Adam / AdamW over a flat parameter vector with bias-corrected moments.
class Adam {
 public:
  Adam(Eigen::Index size, AdamConfig config);

  // Optional per-coordinate learning-rate multipliers (default all ones).
  void set_multipliers(Eigen::VectorXd multipliers);

  // One update with learning rate config.learning_rate * lr_scale.
  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad,
            double lr_scale = 1.0);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  Eigen::VectorXd multipliers_;
  std::int64_t t_ = 0;
};

// Linear warmup to the base rate over `warmup` steps, then linear decay to
// zero at `total` steps. Returns the multiplier for 0-based step `step`.
double warmup_decay_scale(std::int64_t step, std::int64_t warmup, std::int64_t total);

}  // namespace morphfit
