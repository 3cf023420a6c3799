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

#include <algorithm>
#include <cmath>
#include <random>

#include "morphfit/error.hpp"
#include "morphfit/renderer.hpp"

namespace morphfit {

namespace {

bool clamp_state_changed(double base, double moved) {
  auto region = [](double c) { return c < 0.0 ? -1 : (c > 1.0 ? 1 : 0); };
  return region(base) != region(moved);
}

double weighted_sum(const Image& adjoint, const Image& color,
                    const std::vector<std::uint8_t>& keep) {
  double sum = 0.0;
  for (std::size_t p = 0; p < keep.size(); ++p) {
    if (!keep[p]) continue;
    for (int ch = 0; ch < 3; ++ch) {
      sum += adjoint.data[3 * p + ch] * std::clamp(color.data[3 * p + ch], 0.0, 1.0);
    }
  }
  return sum;
}

// Statistical coefficients act through s^2-sized columns, so a fixed step
// would move the image by far less than round-off; step in decoded units.
double step_size(const MorphableModel& model, ParamBlock block, int i, double epsilon) {
  const Eigen::VectorXd* scales = nullptr;
  switch (block) {
    case ParamBlock::kAlpha: scales = &model.shape_scales; break;
    case ParamBlock::kDelta: scales = &model.expr_scales; break;
    case ParamBlock::kGamma: scales = &model.albedo_scales; break;
    default: return epsilon;
  }
  const double s = (*scales)[i];
  return s > 0.0 ? epsilon / (s * s) : epsilon;
}

}  // namespace

GradcheckReport gradcheck(const MorphableModel& model, const FaceParams& params, int width,
                          int height, const GradcheckOptions& options) {
  if (!(options.epsilon > 0.0) || !(options.tolerance > 0.0)) {
    throw ValidationError("gradcheck epsilon and tolerance must be positive");
  }
  const RenderOptions ropts{options.threads};
  const auto base = render_state(model, params, width, height, ropts);
  const std::size_t n = base.output.color.pixel_count();

  Image adjoint(width, height, 3);
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  for (auto& v : adjoint.data) v = uniform(rng);

  GradcheckReport report;
  report.pass = true;
  for (const auto block : options.blocks) {
    const int dim = params.block(block).size();
    std::vector<std::uint8_t> keep(n, 0);
    for (std::size_t p = 0; p < n; ++p) keep[p] = base.output.coverage[p];

    // Pass 1: mask pixels whose visibility or clamp state is unstable under
    // any perturbation of this block.
    for (int i = 0; i < dim; ++i) {
      const double h = step_size(model, block, i, options.epsilon);
      for (const double sign : {1.0, -1.0}) {
        FaceParams moved = params;
        moved.block(block)[i] += sign * h;
        const auto vis = render(model, moved, width, height, ropts);
        const auto frozen = shade_visibility(model, moved, base.output, ropts);
        for (std::size_t p = 0; p < n; ++p) {
          if (!keep[p]) continue;
          if (vis.tri_id[p] != base.output.tri_id[p]) {
            keep[p] = 0;
            continue;
          }
          for (int ch = 0; ch < 3; ++ch) {
            if (clamp_state_changed(base.unclamped[3 * p + ch], frozen.data[3 * p + ch])) {
              keep[p] = 0;
              break;
            }
          }
        }
      }
    }

    Image masked_adjoint = adjoint;
    int masked = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (keep[p]) continue;
      if (base.output.coverage[p]) ++masked;
      for (int ch = 0; ch < 3; ++ch) masked_adjoint.data[3 * p + ch] = 0.0;
    }
    const auto analytic = render_backward(model, params, base, masked_adjoint, ropts);

    // Pass 2: central differences on the frozen-visibility scalar.
    BlockCheck summary{block, 0.0, masked, true};
    for (int i = 0; i < dim; ++i) {
      const double h = step_size(model, block, i, options.epsilon);
      FaceParams plus = params, minus = params;
      plus.block(block)[i] += h;
      minus.block(block)[i] -= h;
      const double fp = weighted_sum(adjoint, shade_visibility(model, plus, base.output, ropts), keep);
      const double fm = weighted_sum(adjoint, shade_visibility(model, minus, base.output, ropts), keep);
      CoordinateCheck c;
      c.block = block;
      c.index = i;
      c.analytic = analytic.block(block)[i];
      c.numeric = (fp - fm) / (2.0 * h);
      const double scale = std::max(std::abs(c.analytic), std::abs(c.numeric));
      c.rel_error = scale < options.absolute_floor ? 0.0 : std::abs(c.analytic - c.numeric) / scale;
      c.pass = c.rel_error <= options.tolerance;
      summary.max_rel_error = std::max(summary.max_rel_error, c.rel_error);
      summary.pass = summary.pass && c.pass;
      report.coordinates.push_back(c);
    }
    report.pass = report.pass && summary.pass;
    report.blocks.push_back(summary);
  }
  return report;
}

}  // namespace morphfit
