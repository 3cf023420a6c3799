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
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "morphfit/face_params.hpp"
#include "morphfit/image.hpp"
#include "morphfit/losses.hpp"
#include "morphfit/model.hpp"
#include "morphfit/optim.hpp"

namespace morphfit {

// MLP that projects an opaque embedding vector onto the face code:
// dense layers with exact GeLU between them and a linear output layer.
struct HeadWeights {
  std::vector<int> layer_sizes;         // input, hidden..., output
  std::vector<Eigen::MatrixXd> weights;  // weights[l] is sizes[l+1] x sizes[l]
  std::vector<Eigen::VectorXd> biases;

  int input_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
  int output_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.back(); }
  std::size_t layers() const { return weights.size(); }
  bool all_finite() const;
  friend bool operator==(const HeadWeights& a, const HeadWeights& b);
};

inline const std::vector<int> kDefaultHeadLayers = {4096, 1024, 1024, 257};

// x * Phi(x) with Phi the standard normal CDF.
double gelu(double x);
double gelu_derivative(double x);

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
HeadWeights head_init(std::uint64_t seed, const std::vector<int>& layer_sizes);

Eigen::VectorXd head_forward_flat(const HeadWeights& weights, const Eigen::VectorXd& embedding);
FaceParams head_forward(const HeadWeights& weights, const Eigen::VectorXd& embedding,
                        const ParamLayout& layout);

// Batched forward pass keeping the activations needed for backward.
struct HeadActivations {
  std::vector<Eigen::MatrixXd> inputs;  // input of each layer, one column per sample
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
  Eigen::MatrixXd output;
};
HeadActivations head_forward_batch(const HeadWeights& weights, const Eigen::MatrixXd& embeddings);

struct HeadGradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd input;  // d/d(embeddings); empty unless requested
};
HeadGradient head_backward_batch(const HeadWeights& weights, const HeadActivations& acts,
                                 const Eigen::MatrixXd& d_output, bool with_input = true);

// "FIGH" container: header u32 layer count, u32 array layer_sizes, then for
// every layer an f32 weight matrix (row-major) and bias vector.
void save_head(const HeadWeights& weights, const std::filesystem::path& path);
HeadWeights load_head(const std::filesystem::path& path);

// One training example. truth is kept for diagnostics only.
struct EmbeddingSample {
  Eigen::VectorXd embedding;
  Image image;
  LandmarkSet landmarks;
  std::optional<FaceParams> truth;
};

// What the training loop is allowed to see of a sample. It carries no
// ground-truth parameters.
struct SupervisionView {
  const Eigen::VectorXd* embedding = nullptr;
  const Image* image = nullptr;
  const LandmarkSet* landmarks = nullptr;
};
std::vector<SupervisionView> supervision_views(std::span<const EmbeddingSample> samples);

struct HeadTrainConfig {
  // One iteration is one optimizer step over batch_size * grad_accum samples.
  int iterations = 2000;
  AdamConfig adamw{.learning_rate = 2e-5, .beta1 = 0.9, .beta2 = 0.999, .epsilon = 1e-8,
                   .weight_decay = 0.0};
  int warmup_iters = 100;
  int batch_size = 8;
  int grad_accum = 4;
  // Multiplies L_face in the training objective.
  double face_weight = 0.1;
  LossWeights weights;
  std::uint64_t seed = 0;
  int threads = 1;
};

void to_json(nlohmann::json& j, const HeadTrainConfig& c);

struct HeadTrainResult {
  HeadWeights weights;
  std::vector<double> loss_curve;  // mean L_face of each iteration's samples
};

HeadTrainResult head_train(const std::vector<SupervisionView>& data, const MorphableModel& model,
                           const HeadTrainConfig& config, HeadWeights init);
// Initializes from head_init(config.seed, kDefaultHeadLayers-like sizes
// matching the embedding and parameter dimensions) and trains.
HeadTrainResult head_train(std::span<const EmbeddingSample> dataset, const MorphableModel& model,
                           const HeadTrainConfig& config);

// Trailing moving average.
std::vector<double> smooth_curve(const std::vector<double>& curve, int window);

struct DatasetOptions {
  int width = 64;
  int height = 64;
  int embedding_dim = 4096;
};

// Synthetic embedding/image pairs. Per sample, alpha, delta and gamma are
// drawn from N(0, 0.5^2), phi is the default white light plus N(0, 0.1^2),
// rotations from N(0, 0.1^2), translations and log-scale from N(0, 0.05^2).
// embedding = W theta + noise with a seed-derived W (entries N(0, 1/P) for
// code length P) and noise N(0, noise_sigma^2). Images are rendered and
// landmarks projected from theta.
std::vector<EmbeddingSample> gen_embedding_dataset(const MorphableModel& model, int n_samples,
                                                   std::uint64_t seed, double noise_sigma,
                                                   const DatasetOptions& options = {});

// The fixed encoding matrix used by gen_embedding_dataset.
Eigen::MatrixXd embedding_matrix(std::uint64_t seed, int embedding_dim, int code_dim);

// Random face code drawn from the dataset distribution.
FaceParams sample_face_params(const ParamLayout& layout, std::uint64_t seed);

// Directory layout: sample_%05d.{ppm,landmarks,embedding} plus
// sample_%05d.truth.json with the generating parameters.
void save_dataset(std::span<const EmbeddingSample> samples, const std::filesystem::path& dir);
std::vector<EmbeddingSample> load_dataset(const std::filesystem::path& dir,
                                          bool with_truth = false);

void write_embedding(const Eigen::VectorXd& embedding, const std::filesystem::path& path);
Eigen::VectorXd read_embedding(const std::filesystem::path& path);

}  // namespace morphfit
