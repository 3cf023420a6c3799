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

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "morphfit/error.hpp"
#include "morphfit/head.hpp"
#include "morphfit/renderer.hpp"
#include "morphfit/scene.hpp"

namespace morphfit {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kMatrixTag = 1;
constexpr std::uint64_t kSampleTag = 2;
constexpr std::uint64_t kNoiseTag = 3;

std::string sample_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05zu", i);
  return buf;
}

}  // namespace

Eigen::MatrixXd embedding_matrix(std::uint64_t seed, int embedding_dim, int code_dim) {
  if (embedding_dim < 1 || code_dim < 1) throw ValidationError("embedding sizes must be positive");
  auto rng = stream(seed, kMatrixTag, 0);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(code_dim)));
  Eigen::MatrixXd w(embedding_dim, code_dim);
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = normal(rng);
  }
  return w;
}

FaceParams sample_face_params(const ParamLayout& layout, std::uint64_t seed) {
  auto rng = stream(seed, kSampleTag, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Eigen::VectorXd& v, double sigma) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += sigma * normal(rng);
  };
  auto p = FaceParams::zeros(layout);
  fill(p.alpha, 0.5);
  fill(p.delta, 0.5);
  fill(p.gamma, 0.5);
  p.phi = default_illumination();
  fill(p.phi, 0.1);
  for (int i = kPitch; i <= kRoll; ++i) p.cam[i] = 0.1 * normal(rng);
  for (int i = kTx; i <= kLogScale; ++i) p.cam[i] = 0.05 * normal(rng);
  return p;
}

std::vector<EmbeddingSample> gen_embedding_dataset(const MorphableModel& model, int n_samples,
                                                   std::uint64_t seed, double noise_sigma,
                                                   const DatasetOptions& options) {
  if (n_samples < 1) throw ValidationError("dataset needs at least one sample");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ValidationError("embedding noise sigma must be finite and non-negative");
  }
  if (options.width < 1 || options.height < 1) throw ValidationError("image size must be positive");
  const auto layout = ParamLayout::of(model);
  const auto w = embedding_matrix(seed, options.embedding_dim, layout.total());
  std::vector<EmbeddingSample> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    const std::uint64_t sample_seed = stream(seed, kSampleTag, static_cast<std::uint64_t>(i))();
    EmbeddingSample s;
    s.truth = sample_face_params(layout, sample_seed);
    s.embedding = w * s.truth->flatten();
    auto noise_rng = stream(seed, kNoiseTag, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (Eigen::Index k = 0; k < s.embedding.size(); ++k) {
      if (noise_sigma > 0.0) s.embedding[k] += noise(noise_rng);
      // Stored as binary32 on disk; keep memory identical to a reload.
      s.embedding[k] = static_cast<float>(s.embedding[k]);
    }
    s.image = render(model, *s.truth, options.width, options.height).color;
    const auto bytes = quantize_rgb8(s.image);
    for (std::size_t k = 0; k < bytes.size(); ++k) s.image.data[k] = bytes[k] / 255.0;
    s.landmarks = to_landmark_set(project_landmarks(model, *s.truth, options.width, options.height));
    out.push_back(std::move(s));
  }
  return out;
}

void write_embedding(const Eigen::VectorXd& embedding, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  auto put = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<unsigned char>(v >> (8 * b)));
  };
  put(static_cast<std::uint32_t>(embedding.size()));
  for (Eigen::Index i = 0; i < embedding.size(); ++i) {
    const float f = static_cast<float>(embedding[i]);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put(u);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

Eigen::VectorXd read_embedding(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open embedding " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  auto get = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[at + b]) << (8 * b);
    return v;
  };
  if (bytes.size() < 4) throw FormatError("embedding file truncated: " + path.string());
  const std::uint32_t n = get(0);
  if (bytes.size() != 4 + 4 * static_cast<std::size_t>(n)) {
    throw FormatError("embedding length mismatch in " + path.string());
  }
  Eigen::VectorXd v(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t u = get(4 + 4 * static_cast<std::size_t>(i));
    float f;
    std::memcpy(&f, &u, 4);
    v[i] = f;
  }
  return v;
}

void save_dataset(std::span<const EmbeddingSample> samples, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto stem = dir / sample_stem(i);
    const auto& s = samples[i];
    write_ppm(s.image, stem.string() + ".ppm");
    save_landmarks(s.landmarks, stem.string() + ".landmarks");
    write_embedding(s.embedding, stem.string() + ".embedding");
    if (s.truth) save_params(*s.truth, stem.string() + ".truth.json");
  }
}

std::vector<EmbeddingSample> load_dataset(const std::filesystem::path& dir, bool with_truth) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<EmbeddingSample> out;
  for (std::size_t i = 0;; ++i) {
    const auto stem = (dir / sample_stem(i)).string();
    if (!std::filesystem::exists(stem + ".embedding")) break;
    EmbeddingSample s;
    s.embedding = read_embedding(stem + ".embedding");
    s.image = read_ppm(stem + ".ppm");
    s.landmarks = load_landmarks(stem + ".landmarks");
    if (with_truth && std::filesystem::exists(stem + ".truth.json")) {
      s.truth = load_params(stem + ".truth.json");
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw IoError("no samples found in " + dir.string());
  return out;
}

}  // namespace morphfit
