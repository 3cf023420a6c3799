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

#include "morphfit/head.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "container.hpp"
#include "morphfit/error.hpp"
#include "morphfit/parallel.hpp"

namespace morphfit {

namespace {

constexpr char kHeadMagic[] = "FIGH";
constexpr std::uint32_t kHeadVersion = 1;

void check_sizes(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw ValidationError("head needs at least input and output sizes");
  for (const int s : sizes) {
    if (s < 1) throw ValidationError("head layer sizes must be positive");
  }
}

}  // namespace

bool HeadWeights::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

bool operator==(const HeadWeights& a, const HeadWeights& b) {
  if (a.layer_sizes != b.layer_sizes || a.weights.size() != b.weights.size()) return false;
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
  }
  return true;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

HeadWeights head_init(std::uint64_t seed, const std::vector<int>& layer_sizes) {
  check_sizes(layer_sizes);
  HeadWeights h;
  h.layer_sizes = layer_sizes;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Eigen::MatrixXd w(fan_out, fan_in);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = uniform(rng);
    }
    h.weights.push_back(std::move(w));
    h.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return h;
}

HeadActivations head_forward_batch(const HeadWeights& weights, const Eigen::MatrixXd& embeddings) {
  if (embeddings.rows() != weights.input_dim()) {
    throw DimensionError("embedding dimension " + std::to_string(embeddings.rows()) +
                         " does not match head input " + std::to_string(weights.input_dim()));
  }
  HeadActivations acts;
  Eigen::MatrixXd x = embeddings;
  for (std::size_t l = 0; l < weights.layers(); ++l) {
    Eigen::MatrixXd z = weights.weights[l] * x;
    z.colwise() += weights.biases[l];
    acts.inputs.push_back(std::move(x));
    if (l + 1 == weights.layers()) {
      acts.output = std::move(z);
      break;
    }
    x = z.unaryExpr([](double v) { return gelu(v); });
    acts.pre.push_back(std::move(z));
  }
  return acts;
}

HeadGradient head_backward_batch(const HeadWeights& weights, const HeadActivations& acts,
                                 const Eigen::MatrixXd& d_output, bool with_input) {
  const std::size_t n = weights.layers();
  HeadGradient g;
  g.weights.resize(n);
  g.biases.resize(n);
  Eigen::MatrixXd delta = d_output;
  for (std::size_t l = n; l-- > 0;) {
    g.weights[l].noalias() = delta * acts.inputs[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l == 0) {
      if (with_input) g.input.noalias() = weights.weights[0].transpose() * delta;
      break;
    }
    Eigen::MatrixXd d_in = weights.weights[l].transpose() * delta;
    delta = d_in.cwiseProduct(acts.pre[l - 1].unaryExpr([](double v) { return gelu_derivative(v); }));
  }
  return g;
}

Eigen::VectorXd head_forward_flat(const HeadWeights& weights, const Eigen::VectorXd& embedding) {
  return head_forward_batch(weights, embedding).output.col(0);
}

FaceParams head_forward(const HeadWeights& weights, const Eigen::VectorXd& embedding,
                        const ParamLayout& layout) {
  if (weights.output_dim() != layout.total()) {
    throw DimensionError("head output " + std::to_string(weights.output_dim()) +
                         " does not match code length " + std::to_string(layout.total()));
  }
  return FaceParams::unflatten(layout, head_forward_flat(weights, embedding));
}

void save_head(const HeadWeights& weights, const std::filesystem::path& path) {
  check_sizes(weights.layer_sizes);
  detail::ContainerWriter w(std::string_view(kHeadMagic, 4), kHeadVersion);
  w.header(static_cast<std::uint32_t>(weights.layer_sizes.size()));
  std::vector<std::uint32_t> sizes(weights.layer_sizes.begin(), weights.layer_sizes.end());
  w.u32_array("layer_sizes", sizes);
  for (std::size_t l = 0; l < weights.layers(); ++l) {
    const auto& m = weights.weights[l];
    std::vector<double> rows(static_cast<std::size_t>(m.size()));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) rows[k++] = m(r, c);
    }
    w.f32_array("w" + std::to_string(l), rows);
    w.f32_array("b" + std::to_string(l),
                std::span<const double>(weights.biases[l].data(),
                                        static_cast<std::size_t>(weights.biases[l].size())));
  }
  w.write(path);
}

HeadWeights load_head(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("head file not found: " + path.string());
  detail::ContainerReader r(path, std::string_view(kHeadMagic, 4), kHeadVersion);
  const auto count = r.header();
  const auto sizes = r.u32_array("layer_sizes");
  if (sizes.size() != count) throw DimensionError("layer_sizes length disagrees with header");
  HeadWeights h;
  h.layer_sizes.assign(sizes.begin(), sizes.end());
  check_sizes(h.layer_sizes);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const Eigen::Index out = sizes[l + 1], in = sizes[l];
    const auto w = r.f32_array("w" + std::to_string(l));
    const auto b = r.f32_array("b" + std::to_string(l));
    if (static_cast<Eigen::Index>(w.size()) != out * in ||
        static_cast<Eigen::Index>(b.size()) != out) {
      throw DimensionError("layer " + std::to_string(l) + " arrays do not match layer sizes");
    }
    Eigen::MatrixXd m(out, in);
    std::size_t k = 0;
    for (Eigen::Index row = 0; row < out; ++row) {
      for (Eigen::Index c = 0; c < in; ++c) m(row, c) = w[k++];
    }
    h.weights.push_back(std::move(m));
    h.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), out));
  }
  r.expect_end();
  return h;
}

std::vector<SupervisionView> supervision_views(std::span<const EmbeddingSample> samples) {
  std::vector<SupervisionView> views;
  views.reserve(samples.size());
  for (const auto& s : samples) views.push_back({&s.embedding, &s.image, &s.landmarks});
  return views;
}

void to_json(nlohmann::json& j, const HeadTrainConfig& c) {
  j = {{"iterations", c.iterations},
       {"optimizer", "adamw"},
       {"learning_rate", c.adamw.learning_rate},
       {"beta1", c.adamw.beta1},
       {"beta2", c.adamw.beta2},
       {"epsilon", c.adamw.epsilon},
       {"weight_decay", c.adamw.weight_decay},
       {"lr_schedule", "warmup_decay"},
       {"warmup_iters", c.warmup_iters},
       {"batch_size", c.batch_size},
       {"grad_accum", c.grad_accum},
       {"face_weight", c.face_weight},
       {"weights", c.weights},
       {"seed", c.seed}};
}

HeadTrainResult head_train(const std::vector<SupervisionView>& data, const MorphableModel& model,
                           const HeadTrainConfig& config, HeadWeights init) {
  if (data.empty()) throw ValidationError("head_train: empty dataset");
  if (config.iterations < 0 || config.batch_size < 1 || config.grad_accum < 1) {
    throw ValidationError("head_train: iterations, batch size and accumulation must be valid");
  }
  const auto layout = ParamLayout::of(model);
  if (init.output_dim() != layout.total()) {
    throw DimensionError("head output does not match the model's code length");
  }
  for (const auto& v : data) {
    if (v.embedding->size() != init.input_dim()) {
      throw DimensionError("sample embedding does not match head input dimension");
    }
  }

  HeadTrainResult result;
  result.weights = std::move(init);
  auto& head = result.weights;
  std::vector<Adam> w_opt, b_opt;
  for (std::size_t l = 0; l < head.layers(); ++l) {
    w_opt.emplace_back(head.weights[l].size(), config.adamw);
    b_opt.emplace_back(head.biases[l].size(), config.adamw);
  }

  const DownsampleExtractor extractor;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  auto next_index = [&] {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    return order[cursor++];
  };

  const int per_step = config.batch_size * config.grad_accum;
  const Eigen::Index dim = head.input_dim();
  for (int it = 0; it < config.iterations; ++it) {
    // Accumulating grad_accum micro-batch gradients is a plain sum, so the
    // step's samples go through the network as one batch.
    std::vector<std::size_t> batch(static_cast<std::size_t>(per_step));
    Eigen::MatrixXd x(dim, per_step);
    for (int b = 0; b < per_step; ++b) {
      batch[static_cast<std::size_t>(b)] = next_index();
      x.col(b) = *data[batch[static_cast<std::size_t>(b)]].embedding;
    }
    const auto acts = head_forward_batch(head, x);

    std::vector<double> losses(batch.size());
    Eigen::MatrixXd d_out(acts.output.rows(), per_step);
    // Each sample writes only its own column; the loss sum runs in batch order.
    parallel_for(batch.size(), config.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t b = begin; b < end; ++b) {
        const auto& v = data[batch[b]];
        const auto params =
            FaceParams::unflatten(layout, acts.output.col(static_cast<Eigen::Index>(b)));
        const auto r = face_loss(*v.image, *v.landmarks, model, params, config.weights,
                                 extractor, nullptr, FaceLossOptions{true, 1});
        losses[b] = r.report.total;
        d_out.col(static_cast<Eigen::Index>(b)) =
            (config.face_weight / per_step) * r.gradient.flatten();
      }
    });
    double loss_sum = 0.0;
    for (const double l : losses) {
      if (!std::isfinite(l)) {
        throw NumericError("head_train: non-finite face loss at iteration " + std::to_string(it));
      }
      loss_sum += l;
    }
    const auto g = head_backward_batch(head, acts, d_out, false);
    result.loss_curve.push_back(loss_sum / per_step);

    const double scale = warmup_decay_scale(it, config.warmup_iters, config.iterations);
    for (std::size_t l = 0; l < head.layers(); ++l) {
      Eigen::Map<Eigen::VectorXd> w(head.weights[l].data(), head.weights[l].size());
      Eigen::Map<const Eigen::VectorXd> dw(g.weights[l].data(), g.weights[l].size());
      w_opt[l].step(w, dw, scale);
      b_opt[l].step(head.biases[l], g.biases[l], scale);
    }
    if (!head.all_finite()) {
      throw NumericError("head_train: weights became non-finite at iteration " + std::to_string(it));
    }
  }
  return result;
}

HeadTrainResult head_train(std::span<const EmbeddingSample> dataset, const MorphableModel& model,
                           const HeadTrainConfig& config) {
  if (dataset.empty()) throw ValidationError("head_train: empty dataset");
  std::vector<int> sizes = kDefaultHeadLayers;
  sizes.front() = static_cast<int>(dataset.front().embedding.size());
  sizes.back() = ParamLayout::of(model).total();
  return head_train(supervision_views(dataset), model, config, head_init(config.seed, sizes));
}

std::vector<double> smooth_curve(const std::vector<double>& curve, int window) {
  if (window < 1) throw ValidationError("smoothing window must be positive");
  std::vector<double> out(curve.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    sum += curve[i];
    if (i >= static_cast<std::size_t>(window)) sum -= curve[i - static_cast<std::size_t>(window)];
    const auto n = std::min<std::size_t>(i + 1, static_cast<std::size_t>(window));
    out[i] = sum / static_cast<double>(n);
  }
  return out;
}

}  // namespace morphfit
