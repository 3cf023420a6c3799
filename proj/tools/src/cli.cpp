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

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "manifest.hpp"
#include "morphfit/fitter.hpp"
#include "morphfit/head.hpp"
#include "morphfit/model.hpp"
#include "morphfit/renderer.hpp"

namespace morphfit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
      return kExitIo;
    case ErrorKind::kDimension:
    case ErrorKind::kValidation:
      return kExitUsage;
    case ErrorKind::kNumeric:
      return kExitNumeric;
  }
  return kExitUsage;
}

namespace {

constexpr int kMaxImageSide = 4096;

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string manifest;
};

struct Size {
  int size = 0;  // square shorthand, 0 = unset
  int width = 0;
  int height = 0;

  void add(CLI::App* sub, int default_side) {
    sub->add_option("--size", size, "Square image side in pixels")
        ->default_val(default_side)
        ->check(CLI::Range(1, kMaxImageSide));
    sub->add_option("--width", width, "Image width (overrides --size)")
        ->check(CLI::Range(1, kMaxImageSide));
    sub->add_option("--height", height, "Image height (overrides --size)")
        ->check(CLI::Range(1, kMaxImageSide));
  }
  int w() const { return width > 0 ? width : size; }
  int h() const { return height > 0 ? height : size; }
};

// Inputs are hashed before anything runs; outputs after the command finished.
class Run {
 public:
  Run(std::string command, const std::vector<std::string>& args, const Globals& g)
      : start_(std::chrono::steady_clock::now()), globals_(g) {
    manifest_.command = std::move(command);
    manifest_.argv = args;
  }

  RunManifest& manifest() { return manifest_; }

  void input(const std::string& path) {
    if (!fs::exists(path)) throw IoError("input not found: " + path);
    manifest_.inputs[path] = fs::is_directory(path) ? directory_digest(path) : sha256_file(path);
  }
  void output(const std::string& path) { outputs_.push_back(path); }

  // Refuses to run if an output would overwrite an input.
  void check_outputs() const {
    for (const auto& o : outputs_) {
      for (const auto& [i, digest] : manifest_.inputs) {
        std::error_code ec;
        if (fs::exists(o) && fs::equivalent(o, i, ec)) {
          throw ValidationError("output " + o + " would overwrite input " + i);
        }
      }
    }
  }

  int finish(const std::string& default_manifest, std::ostream& out, json extra = json::object()) {
    for (const auto& o : outputs_) {
      manifest_.outputs[o] = fs::is_directory(o) ? directory_digest(o) : sha256_file(o);
    }
    manifest_.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const std::string path = globals_.manifest.empty() ? default_manifest : globals_.manifest;
    write_manifest(manifest_, path);
    json summary = {{"command", manifest_.command}, {"status", "ok"},
                    {"outputs", manifest_.outputs}, {"metrics", manifest_.metrics},
                    {"manifest", path}};
    summary.update(extra);
    out << summary.dump() << '\n';
    return kExitOk;
  }

  // Digest of a directory: sha256 of every regular file except manifests
  // (including rerun manifests), listed in sorted order.
  static std::string directory_digest(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      const bool manifest = name == "manifest.json" || name.ends_with(".rerun.json");
      if (e.is_regular_file() && !manifest) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string listing;
    for (const auto& f : files) listing += f.filename().string() + " " + sha256_file(f) + "\n";
    return sha256_hex(listing);
  }

 private:
  std::chrono::steady_clock::time_point start_;
  Globals globals_;
  RunManifest manifest_;
  std::vector<std::string> outputs_;
};

std::string with_suffix(const std::string& path, const std::string& suffix) { return path + suffix; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

void add_weight_options(CLI::App* sub, LossWeights& w) {
  sub->add_option("--w-pixel", w.pixel, "Pixel loss weight")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--w-perceptual", w.perceptual, "Perceptual loss weight")
      ->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--w-landmark", w.landmark, "Landmark loss weight")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--w-reg", w.regularization, "Regularization weight")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
}

std::optional<SkinGmm> maybe_gmm(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_gmm(path);
}

json report_json(const LossReport& r) {
  return {{"total", r.total},
          {"pixel", r.pixel.weighted},
          {"perceptual", r.perceptual.weighted},
          {"landmark", r.landmark.weighted},
          {"regularization", r.regularization.weighted}};
}

std::vector<std::string> replace_flag(std::vector<std::string> argv, const std::string& flag,
                                      const std::string& value) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < argv.size(); ++i) {
    if (argv[i] == flag) {
      ++i;
      continue;
    }
    if (argv[i].rfind(flag + "=", 0) == 0) continue;
    out.push_back(argv[i]);
  }
  out.push_back(flag);
  out.push_back(value);
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Morphable face model fitting toolkit", "morphfit"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Global random seed")->capture_default_str();
  auto* threads_opt = app.add_option("--threads", g.threads, "Worker threads (results do not depend on it)")
                          ->capture_default_str()
                          ->check(CLI::Range(1, 256));
  app.add_option("--manifest", g.manifest, "Where to write the run manifest");

  // gen-model
  auto* gen_model = app.add_subcommand("gen-model", "Write a procedural morphable model");
  std::string gm_out;
  int gm_grid = 24;
  SyntheticModelOptions gm_opts;
  gen_model->add_option("--out", gm_out, "Model file")->required();
  gen_model->add_option("--grid", gm_grid, "Vertices per side of the face grid")
      ->capture_default_str()->check(CLI::Range(4, 512));
  gen_model->add_option("--k-shape", gm_opts.k_shape)->capture_default_str()->check(CLI::Range(1, 4096));
  gen_model->add_option("--k-expr", gm_opts.k_expr)->capture_default_str()->check(CLI::Range(1, 4096));
  gen_model->add_option("--k-albedo", gm_opts.k_albedo)->capture_default_str()->check(CLI::Range(1, 4096));
  gen_model->add_option("--landmarks", gm_opts.n_landmarks)->capture_default_str()->check(CLI::Range(1, 4096));

  // gen-dataset
  auto* gen_dataset = app.add_subcommand("gen-dataset", "Write a synthetic embedding dataset");
  std::string gd_model, gd_out;
  int gd_samples = 200;
  double gd_noise = 0.01;
  int gd_dim = 4096;
  Size gd_size;
  gen_dataset->add_option("--model", gd_model)->required();
  gen_dataset->add_option("--out", gd_out, "Output directory")->required();
  gen_dataset->add_option("--samples", gd_samples)->capture_default_str()->check(CLI::Range(1, 1000000));
  gen_dataset->add_option("--noise-sigma", gd_noise)->capture_default_str()->check(CLI::NonNegativeNumber);
  gen_dataset->add_option("--embedding-dim", gd_dim)->capture_default_str()->check(CLI::Range(1, 1 << 20));
  gd_size.add(gen_dataset, 64);

  // render
  auto* render_cmd = app.add_subcommand("render", "Render a face code to a PPM image");
  std::string r_model, r_params, r_out;
  Size r_size;
  render_cmd->add_option("--model", r_model)->required();
  render_cmd->add_option("--params", r_params, "Face code JSON")->required();
  render_cmd->add_option("--out", r_out, "PPM file")->required();
  r_size.add(render_cmd, 64);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit a face code to an image and its landmarks");
  std::string f_model, f_image, f_landmarks, f_out, f_trace, f_init, f_gmm;
  FitConfig f_cfg;
  fit_cmd->add_option("--model", f_model)->required();
  fit_cmd->add_option("--image", f_image)->required();
  fit_cmd->add_option("--landmarks", f_landmarks)->required();
  fit_cmd->add_option("--out", f_out, "Fitted face code JSON")->required();
  fit_cmd->add_option("--trace", f_trace, "Per-iteration loss CSV (default <out>.trace.csv)");
  fit_cmd->add_option("--init", f_init, "Initial face code JSON (default: from landmarks)");
  fit_cmd->add_option("--gmm", f_gmm, "Skin GMM JSON for the pixel mask");
  fit_cmd->add_option("--iters", f_cfg.max_iters)->capture_default_str()->check(CLI::Range(1, 1000000));
  fit_cmd->add_option("--lr", f_cfg.adam.learning_rate)->capture_default_str()->check(CLI::PositiveNumber);
  fit_cmd->add_option("--warmup", f_cfg.landmark_only_warmup_iters)->capture_default_str()
      ->check(CLI::Range(0, 1000000));
  fit_cmd->add_option("--tol", f_cfg.convergence_tol)->capture_default_str()->check(CLI::NonNegativeNumber);
  add_weight_options(fit_cmd, f_cfg.weights);

  // train-head
  auto* train_cmd = app.add_subcommand("train-head", "Train the embedding-to-code head");
  std::string t_model, t_dataset, t_out, t_curve;
  HeadTrainConfig t_cfg;
  int t_window = 100;
  train_cmd->add_option("--model", t_model)->required();
  train_cmd->add_option("--dataset", t_dataset)->required();
  train_cmd->add_option("--out", t_out, "Head weights file")->required();
  train_cmd->add_option("--curve", t_curve, "Loss curve CSV (default <out>.curve.csv)");
  train_cmd->add_option("--iters", t_cfg.iterations)->capture_default_str()->check(CLI::Range(0, 10000000));
  train_cmd->add_option("--lr", t_cfg.adamw.learning_rate)->capture_default_str()->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--weight-decay", t_cfg.adamw.weight_decay)->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--warmup", t_cfg.warmup_iters)->capture_default_str()->check(CLI::Range(0, 10000000));
  train_cmd->add_option("--batch", t_cfg.batch_size)->capture_default_str()->check(CLI::Range(1, 4096));
  train_cmd->add_option("--accum", t_cfg.grad_accum)->capture_default_str()->check(CLI::Range(1, 4096));
  train_cmd->add_option("--face-weight", t_cfg.face_weight)->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--smooth", t_window, "Moving-average window for the reported curve")
      ->capture_default_str()->check(CLI::Range(1, 1000000));
  add_weight_options(train_cmd, t_cfg.weights);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Photometric and landmark error of a face code");
  std::string e_model, e_params, e_image, e_landmarks, e_gmm, e_out;
  eval_cmd->add_option("--model", e_model)->required();
  eval_cmd->add_option("--params", e_params)->required();
  eval_cmd->add_option("--image", e_image)->required();
  eval_cmd->add_option("--landmarks", e_landmarks)->required();
  eval_cmd->add_option("--gmm", e_gmm, "Skin GMM JSON for the pixel mask");
  eval_cmd->add_option("--out", e_out, "Metrics JSON");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare renderer gradients to finite differences");
  std::string gc_model, gc_params, gc_out;
  std::vector<std::string> gc_blocks = {"alpha", "delta", "gamma", "phi", "cam"};
  GradcheckOptions gc_opts;
  Size gc_size;
  grad_cmd->add_option("--model", gc_model)->required();
  grad_cmd->add_option("--params", gc_params)->required();
  grad_cmd->add_option("--blocks", gc_blocks, "Subset of alpha,delta,gamma,phi,cam")
      ->delimiter(',')->capture_default_str()
      ->check(CLI::IsMember({"alpha", "delta", "gamma", "phi", "cam"}));
  grad_cmd->add_option("--tol", gc_opts.tolerance)->capture_default_str()->check(CLI::PositiveNumber);
  grad_cmd->add_option("--eps", gc_opts.epsilon)->capture_default_str()->check(CLI::PositiveNumber);
  grad_cmd->add_option("--out", gc_out, "Report JSON");
  gc_size.add(grad_cmd, 32);

  // rerun
  auto* rerun_cmd = app.add_subcommand("rerun", "Re-execute a manifest and compare its outputs");
  std::string rr_manifest;
  rerun_cmd->add_option("manifest", rr_manifest, "Manifest JSON")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*gen_model) {
      Run run("gen-model", args, g);
      run.output(gm_out);
      const auto model = gen_synthetic_model(g.seed, gm_grid, gm_opts);
      save_model(model, gm_out);
      auto& m = run.manifest();
      m.config = {{"grid", gm_grid}, {"k_shape", gm_opts.k_shape}, {"k_expr", gm_opts.k_expr},
                  {"k_albedo", gm_opts.k_albedo}, {"n_landmarks", gm_opts.n_landmarks}};
      m.seeds = {{"model", g.seed}};
      m.metrics = {{"n_vertices", model.n_vertices()}, {"n_triangles", model.n_triangles()}};
      return run.finish(with_suffix(gm_out, ".manifest.json"), out);
    }

    if (*gen_dataset) {
      Run run("gen-dataset", args, g);
      run.input(gd_model);
      const auto model = load_model(gd_model);
      const DatasetOptions opts{gd_size.w(), gd_size.h(), gd_dim};
      const auto samples = gen_embedding_dataset(model, gd_samples, g.seed, gd_noise, opts);
      if (fs::exists(gd_out) && !fs::is_directory(gd_out)) {
        throw ValidationError("--out exists and is not a directory: " + gd_out);
      }
      save_dataset(samples, gd_out);
      run.output(gd_out);
      auto& m = run.manifest();
      m.config = {{"samples", gd_samples}, {"noise_sigma", gd_noise}, {"width", opts.width},
                  {"height", opts.height}, {"embedding_dim", gd_dim}};
      m.seeds = {{"dataset", g.seed}};
      m.metrics = {{"samples", samples.size()}};
      return run.finish((fs::path(gd_out) / "manifest.json").string(), out);
    }

    if (*render_cmd) {
      Run run("render", args, g);
      run.input(r_model);
      run.input(r_params);
      run.output(r_out);
      run.check_outputs();
      const auto model = load_model(r_model);
      const auto params = load_params(r_params);
      check_params(model, params);
      const auto img = render(model, params, r_size.w(), r_size.h(), {g.threads});
      write_ppm(img.color, r_out);
      int covered = 0;
      for (const auto c : img.coverage) covered += c;
      auto& m = run.manifest();
      m.config = {{"width", r_size.w()}, {"height", r_size.h()}};
      m.metrics = {{"covered_pixels", covered}};
      return run.finish(with_suffix(r_out, ".manifest.json"), out);
    }

    if (*fit_cmd) {
      Run run("fit", args, g);
      for (const auto* p : {&f_model, &f_image, &f_landmarks}) run.input(*p);
      if (!f_init.empty()) run.input(f_init);
      if (!f_gmm.empty()) run.input(f_gmm);
      const std::string trace = f_trace.empty() ? with_suffix(f_out, ".trace.csv") : f_trace;
      run.output(f_out);
      run.output(trace);
      run.check_outputs();
      const auto model = load_model(f_model);
      const auto target = read_ppm(f_image);
      const auto landmarks = load_landmarks(f_landmarks);
      const auto gmm = maybe_gmm(f_gmm);
      std::optional<FaceParams> init;
      if (!f_init.empty()) init = load_params(f_init);
      f_cfg.seed = g.seed;
      f_cfg.threads = g.threads;
      const Image mask = skin_mask(target, gmm);
      const auto result = fit(target, landmarks, model, f_cfg, init, gmm ? &mask : nullptr);
      const auto metrics = evaluate(target, mask, landmarks, model, result.params, {g.threads});
      save_params(result.params, f_out);
      write_trace_csv(result.trace, trace);
      auto& m = run.manifest();
      m.config = f_cfg;
      m.seeds = {{"fit", g.seed}};
      m.metrics = json(metrics);
      m.metrics["best_loss"] = report_json(result.best);
      m.metrics["best_iter"] = result.best_iter;
      m.metrics["converged"] = result.converged;
      return run.finish(with_suffix(f_out, ".manifest.json"), out);
    }

    if (*train_cmd) {
      Run run("train-head", args, g);
      run.input(t_model);
      run.input(t_dataset);
      const std::string curve = t_curve.empty() ? with_suffix(t_out, ".curve.csv") : t_curve;
      run.output(t_out);
      run.output(curve);
      run.check_outputs();
      const auto model = load_model(t_model);
      // Ground-truth codes stay on disk; training sees only supervision views.
      const auto dataset = load_dataset(t_dataset, false);
      t_cfg.seed = g.seed;
      t_cfg.threads = g.threads;
      const auto result = head_train(dataset, model, t_cfg);
      save_head(result.weights, t_out);
      const auto smooth = smooth_curve(result.loss_curve, t_window);
      std::ostringstream csv;
      csv << std::setprecision(17) << "iter,loss,smoothed\n";
      for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
        csv << i << ',' << result.loss_curve[i] << ',' << smooth[i] << '\n';
      }
      write_text(curve, csv.str());
      auto& m = run.manifest();
      m.config = t_cfg;
      m.config["smooth_window"] = t_window;
      m.seeds = {{"train", g.seed}};
      if (!smooth.empty()) {
        m.metrics = {{"initial_loss", smooth.front()},
                     {"final_smoothed_loss", smooth.back()},
                     {"reduction", smooth.front() / smooth.back()},
                     {"samples", dataset.size()}};
      }
      return run.finish(with_suffix(t_out, ".manifest.json"), out);
    }

    if (*eval_cmd) {
      Run run("eval", args, g);
      for (const auto* p : {&e_model, &e_params, &e_image, &e_landmarks}) run.input(*p);
      if (!e_gmm.empty()) run.input(e_gmm);
      if (!e_out.empty()) run.output(e_out);
      run.check_outputs();
      const auto model = load_model(e_model);
      const auto params = load_params(e_params);
      check_params(model, params);
      const auto target = read_ppm(e_image);
      const auto landmarks = load_landmarks(e_landmarks);
      const Image mask = skin_mask(target, maybe_gmm(e_gmm));
      const auto metrics = evaluate(target, mask, landmarks, model, params, {g.threads});
      auto& m = run.manifest();
      m.metrics = json(metrics);
      if (!e_out.empty()) write_text(e_out, m.metrics.dump(2) + "\n");
      return run.finish(e_out.empty() ? "morphfit-eval.manifest.json" : with_suffix(e_out, ".manifest.json"),
                        out);
    }

    if (*grad_cmd) {
      Run run("gradcheck", args, g);
      run.input(gc_model);
      run.input(gc_params);
      if (!gc_out.empty()) run.output(gc_out);
      run.check_outputs();
      const auto model = load_model(gc_model);
      const auto params = load_params(gc_params);
      check_params(model, params);
      gc_opts.blocks.clear();
      for (const auto& b : gc_blocks) gc_opts.blocks.push_back(parse_block(b));
      gc_opts.seed = g.seed;
      gc_opts.threads = g.threads;
      const auto report = gradcheck(model, params, gc_size.w(), gc_size.h(), gc_opts);
      json blocks = json::array();
      for (const auto& b : report.blocks) {
        blocks.push_back({{"block", to_string(b.block)}, {"max_rel_error", b.max_rel_error},
                          {"masked_pixels", b.masked_pixels}, {"pass", b.pass}});
      }
      auto& m = run.manifest();
      m.config = {{"blocks", gc_blocks}, {"tolerance", gc_opts.tolerance}, {"epsilon", gc_opts.epsilon},
                  {"width", gc_size.w()}, {"height", gc_size.h()}};
      m.seeds = {{"adjoint", g.seed}};
      m.metrics = {{"pass", report.pass}, {"blocks", blocks}};
      if (!gc_out.empty()) {
        json coords = json::array();
        for (const auto& c : report.coordinates) {
          coords.push_back({{"block", to_string(c.block)}, {"index", c.index}, {"analytic", c.analytic},
                            {"numeric", c.numeric}, {"rel_error", c.rel_error}, {"pass", c.pass}});
        }
        json full = m.metrics;
        full["coordinates"] = coords;
        write_text(gc_out, full.dump(2) + "\n");
      }
      const int code = run.finish(
          gc_out.empty() ? "morphfit-gradcheck.manifest.json" : with_suffix(gc_out, ".manifest.json"), out);
      return report.pass ? code : kExitCheckFailed;
    }

    if (*rerun_cmd) {
      const auto original = read_manifest(rr_manifest);
      if (original.command == "rerun") throw ValidationError("cannot rerun a rerun manifest");
      auto argv = original.argv;
      if (threads_opt->count() > 0) argv = replace_flag(argv, "--threads", std::to_string(g.threads));
      const std::string new_manifest =
          g.manifest.empty() ? with_suffix(rr_manifest, ".rerun.json") : g.manifest;
      argv = replace_flag(argv, "--manifest", new_manifest);
      std::ostringstream inner_out;
      const int code = run(argv, inner_out, err);
      if (code != kExitOk && code != kExitCheckFailed) return code;
      const auto again = read_manifest(new_manifest);
      json mismatches = json::array();
      for (const auto& [path, digest] : original.outputs) {
        const auto it = again.outputs.find(path);
        if (it == again.outputs.end() || it->second != digest) mismatches.push_back(path);
      }
      const bool identical = mismatches.empty() && again.outputs.size() == original.outputs.size();
      json summary = {{"command", "rerun"}, {"source", rr_manifest}, {"rerun_manifest", new_manifest},
                      {"argv", argv}, {"identical", identical}, {"mismatches", mismatches}};
      out << summary.dump() << '\n';
      return identical ? kExitOk : kExitCheckFailed;
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    err << "error (format): " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error (io): " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace morphfit::cli
