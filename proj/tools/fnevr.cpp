// Copyright 2026 The fnevr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// fnevr command-line entry point.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fnevr/harness/commands.hpp"

namespace {

using fnevr::harness::RunConfig;
using fnevr::harness::json;

// Flags shared by every pipeline subcommand. Values given on the command
// line override the config file.
struct CommonFlags {
  std::string config_path;
  std::string size;
  std::uint64_t seed = 0;
  std::size_t depth = 0;
  std::size_t keypoints = 0;
  std::size_t channels = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* size_opt = nullptr;
  CLI::Option* depth_opt = nullptr;
  CLI::Option* k_opt = nullptr;
  CLI::Option* c_opt = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config {H,W,C,K,D,n_sigma,n_color,m_color,hidden,seed}")
        ->check(CLI::ExistingFile);
    seed_opt = app->add_option("--seed", seed, "RNG seed");
    size_opt = app->add_option("--size", size, "image size HxW");
    depth_opt = app->add_option("--depth", depth, "depth bins D")->check(CLI::PositiveNumber);
    k_opt = app->add_option("--keypoints", keypoints, "keypoint count K")->check(CLI::PositiveNumber);
    c_opt = app->add_option("--channels", channels, "feature channels C")->check(CLI::PositiveNumber);
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : fnevr::harness::load_config(config_path);
    if (seed_opt->count()) c.seed = seed;
    if (depth_opt->count()) c.D = depth;
    if (k_opt->count()) c.K = keypoints;
    if (c_opt->count()) c.C = channels;
    if (size_opt->count()) {
      const auto x = size.find('x');
      std::size_t h = 0, w = 0;
      try {
        if (x == std::string::npos) throw std::invalid_argument(size);
        std::size_t used = 0;
        h = std::stoul(size.substr(0, x), &used);
        if (used != x) throw std::invalid_argument(size);
        w = std::stoul(size.substr(x + 1), &used);
        if (used != size.size() - x - 1) throw std::invalid_argument(size);
      } catch (const std::logic_error&) {
        throw CLI::ValidationError("--size", "expected HxW, got '" + size + "'");
      }
      c.H = h;
      c.W = w;
    }
    return c;
  }
};

void print_checks(const std::vector<fnevr::harness::OpCheck>& checks) {
  for (const auto& c : checks) {
    std::printf("%-4s %-10s %-18s instances=%zu failures=%zu max_abs=%.3e max_rel=%.3e\n",
                c.passed() ? "PASS" : "FAIL", c.module.c_str(), c.op.c_str(), c.instances,
                c.failures, c.max_abs_err, c.max_rel_err);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fnevr: differentiable face animation kernels"};
  app.require_subcommand(1);
  app.allow_extras(false);

  // demo
  auto* demo = app.add_subcommand("demo", "full pipeline on a synthetic scene");
  CommonFlags demo_flags;
  demo_flags.attach(demo);
  fnevr::harness::DemoOptions demo_opts;
  std::string demo_out = "out";
  demo->add_option("--out", demo_out, "output directory");
  demo->add_option("--steps", demo_opts.steps, "fit steps");
  demo->add_option("--lr", demo_opts.lr, "Adam learning rate")->check(CLI::PositiveNumber);

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  fnevr::harness::GradCheckConfig gcfg;
  std::string module = "all";
  std::string grad_out;
  grad->add_option("--module", module, "module")
      ->check(CLI::IsMember({"motion2d", "fvr", "pose_edit", "optim", "all"}));
  grad->add_option("--trials", gcfg.trials, "random instances per op")->check(CLI::PositiveNumber);
  grad->add_option("--tol", gcfg.rtol, "relative tolerance")->check(CLI::PositiveNumber);
  grad->add_option("--seed", gcfg.seed, "RNG seed");
  grad->add_option("--out", grad_out, "write results as JSON");

  // bench
  auto* bench = app.add_subcommand("bench", "one-stage vs two-stage sampling benchmark");
  CommonFlags bench_flags;
  bench_flags.attach(bench);
  fnevr::harness::BenchOptions bench_opts;
  std::string bench_out;
  bench->add_option("--trials", bench_opts.trials, "timed repetitions (>= 10)");
  bench->add_option("--threads", bench_opts.threads, "MLP worker threads")->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "CSV report path");

  // edit
  auto* edit = app.add_subcommand("edit", "pose-edit the scene's source keypoints");
  CommonFlags edit_flags;
  edit_flags.attach(edit);
  fnevr::harness::EditOptions edit_opts;
  std::string edit_out = "out", editor_path, model_path, scene_path;
  edit->add_option("--yaw", edit_opts.degrees.yaw, "yaw in degrees");
  edit->add_option("--pitch", edit_opts.degrees.pitch, "pitch in degrees");
  edit->add_option("--roll", edit_opts.degrees.roll, "roll in degrees");
  edit->add_option("--scene", scene_path, "scene config (e.g. scene.json from demo)")
      ->check(CLI::ExistingFile);
  edit->add_option("--editor", editor_path, "editor.fnvt from fit-editor")->check(CLI::ExistingFile);
  edit->add_option("--model", model_path, "model.fnvt from demo")->check(CLI::ExistingFile);
  edit->add_option("--out", edit_out, "output directory");

  // fit-editor
  auto* fit = app.add_subcommand("fit-editor", "train the pose editor on synthetic rotations");
  CommonFlags fit_flags;
  fit_flags.attach(fit);
  fnevr::harness::FitEditorOptions fit_opts;
  std::string fit_out = "out";
  fit->add_option("--steps", fit_opts.steps, "Adam steps");
  fit->add_option("--train", fit_opts.train, "training samples")->check(CLI::PositiveNumber);
  fit->add_option("--test", fit_opts.test, "held-out samples")->check(CLI::PositiveNumber);
  fit->add_option("--out", fit_out, "output directory");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "L1 / PSNR / SSIM between two PPM images");
  std::string img_a, img_b;
  metrics->add_option("--a", img_a, "first image")->required()->check(CLI::ExistingFile);
  metrics->add_option("--b", img_b, "second image")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (*demo) {
      demo_opts.config = demo_flags.resolve();
      demo_opts.out = demo_out;
      const auto r = fnevr::harness::run_demo(demo_opts);
      std::printf("psnr=%.4f ssim=%.4f l1=%.5f loss %.6f -> %.6f (%.1fs)\n", r.render.psnr,
                  r.render.ssim, r.render.l1, r.initial_loss, r.final_loss, r.seconds);
    } else if (*grad) {
      const auto checks = fnevr::harness::run_gradcheck_suite(module, gcfg);
      print_checks(checks);
      if (!grad_out.empty()) fnevr::harness::write_json(fnevr::harness::to_json(checks), grad_out);
      for (const auto& c : checks) {
        if (!c.passed()) return 1;
      }
    } else if (*bench) {
      bench_opts.config = bench_flags.resolve();
      if (!bench_out.empty()) bench_opts.csv = bench_out;
      const auto r = fnevr::harness::run_bench(bench_opts);
      std::printf("one_stage  evals/pixel=%zu networks=%zu median_ns/frame=%.0f\n",
                  r.one_stage.mlp_evals_per_pixel, r.one_stage.networks,
                  r.one_stage.median_ns_per_frame);
      std::printf("two_stage  evals/pixel=%zu networks=%zu median_ns/frame=%.0f\n",
                  r.two_stage.mlp_evals_per_pixel, r.two_stage.networks,
                  r.two_stage.median_ns_per_frame);
      std::printf("throughput_ratio=%.4f\n", r.throughput_ratio);
    } else if (*edit) {
      edit_opts.config = edit_flags.resolve();
      if (!scene_path.empty()) {
        // The scene file is a config; explicit flags still win.
        edit_flags.config_path = scene_path;
        edit_opts.config = edit_flags.resolve();
      }
      if (!editor_path.empty()) edit_opts.editor = editor_path;
      if (!model_path.empty()) edit_opts.model = model_path;
      edit_opts.out = edit_out;
      const auto r = fnevr::harness::run_edit(edit_opts);
      std::printf("edited %zu keypoints, mean error vs rigid re-projection %.5f%s\n",
                  r.edited.size(), r.keypoint_error,
                  r.trained_editor ? " (editor trained in-process)" : "");
    } else if (*fit) {
      fit_opts.config = fit_flags.resolve();
      fit_opts.out = fit_out;
      const auto r = fnevr::harness::run_fit_editor(fit_opts);
      std::printf("L_editor %.6f -> %.6f (x%.1f), held-out keypoint error %.5f (%.1fs)\n",
                  r.initial_loss, r.final_loss, r.reduction, r.heldout_error, r.seconds);
    } else if (*metrics) {
      const auto a = fnevr::harness::load_ppm(img_a);
      const auto b = fnevr::harness::load_ppm(img_b);
      std::cout << fnevr::harness::to_json(fnevr::harness::image_metrics(a, b)).dump(2) << '\n';
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fnevr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
