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

#pragma once

// Subcommand bodies shared by the fnevr CLI and the acceptance runner. Every
// command writes its non-timing outputs deterministically from the seed;
// wall-clock figures go to a separate timing.json.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fnevr/fnvt.hpp"
#include "fnevr/harness/bench.hpp"
#include "fnevr/harness/config.hpp"
#include "fnevr/harness/gradcheck.hpp"
#include "fnevr/harness/image.hpp"
#include "fnevr/harness/metrics.hpp"
#include "fnevr/harness/pipeline.hpp"
#include "fnevr/harness/scene.hpp"

namespace fnevr::harness {

using json = nlohmann::ordered_json;

inline constexpr double kDemoLearningRate = 2e-4;
inline constexpr std::size_t kDemoSteps = 500;
inline constexpr std::size_t kEditorSteps = 2000;
inline constexpr std::size_t kEditorTrain = 256;
inline constexpr std::size_t kEditorTest = 128;

inline void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) raise<IoError>("cannot write ", path.string());
  os << j.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) raise<IoError>("cannot read ", path.string());
  try {
    return json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    raise<IoError>(path.string(), ": ", e.what());
  }
}

namespace impl {

using clock = std::chrono::steady_clock;

inline double seconds_since(clock::time_point t0) {
  return std::chrono::duration<double>(clock::now() - t0).count();
}

inline Tensor clamp01(Tensor t) {
  for (double& v : t.values()) v = std::clamp(v, 0.0, 1.0);
  return t;
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) raise<IoError>("cannot create ", dir.string(), ": ", ec.message());
}

inline json components_json(const std::vector<std::pair<std::string, double>>& c) {
  json j = json::object();
  for (const auto& [k, v] : c) j[k] = v;
  return j;
}

}  // namespace impl

struct ImageMetrics {
  double l1 = 0.0;
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

inline ImageMetrics image_metrics(const Tensor& a, const Tensor& b) {
  return {metric_l1(a, b), metric_mse(a, b), metric_psnr(a, b), metric_ssim(a, b)};
}

inline json to_json(const ImageMetrics& m) {
  return {{"l1", m.l1}, {"mse", m.mse}, {"psnr", m.psnr}, {"ssim", m.ssim}};
}

// ---------------------------------------------------------------- demo

struct DemoOptions {
  RunConfig config;
  std::size_t steps = kDemoSteps;
  double lr = kDemoLearningRate;
  std::filesystem::path out = "out";
};

struct DemoResult {
  ImageMetrics render;  // quantized I_m vs quantized driving frame
  ImageMetrics warp;    // RGB of the warped source vs the same target
  double initial_loss = 0.0;
  double final_loss = 0.0;
  optim::SpotCheck spot;
  double seconds = 0.0;
};

inline DemoResult run_demo(const DemoOptions& o) {
  const auto t0 = impl::clock::now();
  const RunConfig& c = o.config;
  impl::ensure_dir(o.out);
  const auto scene = gen_scene(c.seed, c.scene());
  const auto ws = warp_scene(scene);
  const auto inputs = make_fvr_inputs(scene, ws.warped);
  FvrModel model = FvrModel::random(c.C, c.fvr(), scene.config.n_down, c.seed);

  optim::FitConfig fc;
  fc.steps = o.steps;
  fc.adam.lr = o.lr;
  fc.seed = c.seed;
  const auto fit = optim::fit(fvr_objective(model, inputs), model.flatten(), fc);
  model.assign(fit.params);
  const auto ev = evaluate_fvr(model, inputs, fvr::pyramid_l1(), false);

  const Tensor render = quantize(impl::clamp01(ev.image));
  const Tensor target = quantize(scene.driving_image);
  const Tensor warped_rgb = quantize(impl::clamp01(rgb_channels(ws.warped)));
  DemoResult r;
  r.render = image_metrics(render, target);
  r.warp = image_metrics(warped_rgb, target);
  r.initial_loss = fit.trace.empty() ? ev.report.total : fit.trace.front().loss;
  r.final_loss = ev.report.total;
  r.spot = fit.spot;

  fnvt::save(ws.warped, o.out / "warped.fnvt");
  fnvt::save(ws.dense, o.out / "dense_motion.fnvt");
  fnvt::save(ev.composite.alpha, o.out / "alpha.fnvt");
  fnvt::save(ev.composite.opacity, o.out / "opacity.fnvt");
  fnvt::save(fit.params, o.out / "model.fnvt");
  save_ppm(render, o.out / "render.ppm");
  save_ppm(target, o.out / "target.ppm");
  save_ppm(quantize(rgb_channels(scene.source_feature)), o.out / "source.ppm");
  save_ppm(warped_rgb, o.out / "warped.ppm");
  optim::write_trace_csv(fit.trace, o.out / "trace.csv");
  write_json(to_json(c), o.out / "scene.json");
  write_json({{"config", to_json(c)},
              {"steps", o.steps},
              {"lr", o.lr},
              {"metrics", to_json(r.render)},
              {"warp_metrics", to_json(r.warp)},
              {"loss", {{"initial", r.initial_loss},
                        {"final", r.final_loss},
                        {"L_R", ev.report[optim::Component::kRender].value},
                        {"L_sigma", ev.report[optim::Component::kMatching].value}}},
              {"spot_check", {{"analytic", r.spot.analytic},
                              {"numeric", r.spot.numeric},
                              {"passed", r.spot.passed}}},
              {"images", {{"render", "render.ppm"}, {"target", "target.ppm"}}}},
             o.out / "report.json");
  r.seconds = impl::seconds_since(t0);
  write_json({{"seconds", r.seconds}}, o.out / "timing.json");
  return r;
}

// ---------------------------------------------------------------- editor

inline void save_editor(const pose_edit::EditorMlpParams& p, const std::filesystem::path& fnvt_path) {
  fnvt::save(flatten_all(p.mlp.parts()), fnvt_path);
  auto meta = fnvt_path;
  meta.replace_extension(".json");
  write_json({{"K", p.keypoints()}, {"hidden", p.mlp.hidden()}, {"params", fnvt_path.filename()}},
             meta);
}

inline pose_edit::EditorMlpParams load_editor(const std::filesystem::path& fnvt_path) {
  auto meta_path = fnvt_path;
  meta_path.replace_extension(".json");
  const json meta = read_json(meta_path);
  const auto k = meta.at("K").get<std::size_t>();
  const auto hidden = meta.at("hidden").get<std::size_t>();
  pose_edit::EditorMlpParams p{nn::MlpParams::zeros(pose_edit::input_width(k), hidden,
                                                    pose_edit::output_width(k))};
  unflatten_all(fnvt::load(fnvt_path), p.mlp.parts());
  p.validate();
  return p;
}

struct FitEditorOptions {
  RunConfig config;
  std::size_t steps = kEditorSteps;
  std::size_t train = kEditorTrain;
  std::size_t test = kEditorTest;
  std::size_t hidden = pose_edit::kDefaultHidden;
  optim::AdamConfig adam;
  std::optional<std::filesystem::path> out;
};

struct FitEditorResult {
  pose_edit::EditorMlpParams params;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double reduction = 0.0;
  double heldout_error = 0.0;
  double train_error = 0.0;
  double seconds = 0.0;
};

inline FitEditorResult run_fit_editor(const FitEditorOptions& o) {
  const auto t0 = impl::clock::now();
  const RunConfig& c = o.config;
  EditorDataConfig dc;
  dc.keypoints = c.K;
  const auto train = make_editor_dataset(2 * c.seed + 1, o.train, dc);
  const auto test = make_editor_dataset(2 * c.seed + 2, o.test, dc);
  std::mt19937_64 rng(c.seed);
  auto p = pose_edit::EditorMlpParams::random(c.K, rng, o.hidden);

  optim::FitConfig fc;
  fc.steps = o.steps;
  fc.adam = o.adam;
  fc.seed = c.seed;
  const auto fit = optim::fit(editor_objective(p, train), flatten_all(p.mlp.parts()), fc);
  unflatten_all(fit.params, p.mlp.parts());

  FitEditorResult r;
  r.params = p;
  r.final_loss = editor_batch_loss(p, train, false).loss;
  r.initial_loss = fit.trace.empty() ? r.final_loss : fit.trace.front().loss;
  r.reduction = r.final_loss > 0.0 ? r.initial_loss / r.final_loss : 0.0;
  r.heldout_error = editor_keypoint_error(p, test);
  r.train_error = editor_keypoint_error(p, train);
  if (o.out) {
    impl::ensure_dir(*o.out);
    optim::write_trace_csv(fit.trace, *o.out / "loss.csv");
    save_editor(p, *o.out / "editor.fnvt");
    write_json({{"config", to_json(c)},
                {"steps", o.steps},
                {"train_samples", o.train},
                {"test_samples", o.test},
                {"adam", {{"lr", o.adam.lr}, {"beta1", o.adam.beta1}, {"beta2", o.adam.beta2}}},
                {"initial_loss", r.initial_loss},
                {"final_loss", r.final_loss},
                {"reduction", r.reduction},
                {"heldout_keypoint_error", r.heldout_error},
                {"train_keypoint_error", r.train_error}},
               *o.out / "report.json");
  }
  r.seconds = impl::seconds_since(t0);
  if (o.out) write_json({{"seconds", r.seconds}}, *o.out / "timing.json");
  return r;
}

// ---------------------------------------------------------------- edit

struct EditOptions {
  RunConfig config;
  EulerAngles degrees;
  std::optional<std::filesystem::path> editor;  // editor.fnvt from fit-editor
  std::optional<std::filesystem::path> model;   // model.fnvt from demo
  std::filesystem::path out = "out";
};

struct EditRunResult {
  KeypointSet edited;
  KeypointSet reference;  // rigid re-projection of the re-posed head
  double keypoint_error = 0.0;
  bool trained_editor = false;
};

// Applies f_editor to the scene's source keypoints for the requested
// rotation, then warps the source features with the edited keypoints.
inline EditRunResult run_edit(const EditOptions& o) {
  const auto t0 = impl::clock::now();
  const RunConfig& c = o.config;
  impl::ensure_dir(o.out);
  constexpr double kDeg = std::numbers::pi / 180.0;
  const EulerAngles rad{o.degrees.yaw * kDeg, o.degrees.pitch * kDeg, o.degrees.roll * kDeg};
  const auto scene = gen_scene(c.seed, c.scene(), &rad);

  EditRunResult r;
  pose_edit::EditorMlpParams editor;
  if (o.editor) {
    editor = load_editor(*o.editor);
  } else {
    FitEditorOptions fo;
    fo.config = c;
    editor = run_fit_editor(fo).params;
    r.trained_editor = true;
  }
  r.edited = pose_edit::edit_keypoints(rad, scene.source_keypoints, editor).as_keypoints();
  r.reference = scene.driving_keypoints;
  for (std::size_t k = 0; k < r.edited.size(); ++k) {
    r.keypoint_error += (r.edited.points[k] - r.reference.points[k]).norm() /
                        static_cast<double>(r.edited.size());
  }

  // Driving-frame coverage is unknown when editing, so the masks use the
  // source coverage channel and the occlusion map is left at one.
  const std::size_t h = c.H, w = c.W;
  const CoordGrid grid = CoordGrid::identity(h, w);
  Tensor coverage({h, w, 1});
  for (std::size_t p = 0; p < h * w; ++p) coverage[p] = scene.source_feature[p * c.C + 3];
  const motion2d::MaskStack masks(keypoint_masks(r.edited, coverage, grid));
  const Tensor dense = motion2d::dense_motion(
      motion2d::sparse_motion(scene.source_keypoints, r.edited, grid), masks, grid);
  Tensor ones({h, w, 1});
  ones.fill(1.0);
  const Tensor warped = motion2d::warp_feature(scene.source_feature, dense, ones);

  motion2d::save_keypoints(r.edited, o.out / "edited_keypoints.json");
  motion2d::save_keypoints(scene.source_keypoints, o.out / "source_keypoints.json");
  fnvt::save(warped, o.out / "warped.fnvt");
  save_ppm(quantize(impl::clamp01(rgb_channels(warped))), o.out / "warped.ppm");
  json report{{"config", to_json(c)},
              {"degrees", {{"yaw", o.degrees.yaw}, {"pitch", o.degrees.pitch}, {"roll", o.degrees.roll}}},
              {"editor", o.editor ? o.editor->string() : std::string("trained in-process")},
              {"keypoint_error_vs_rigid", r.keypoint_error}};
  if (o.model) {
    FvrModel m = FvrModel::random(c.C, c.fvr(), scene.config.n_down, c.seed);
    m.assign(fnvt::load(*o.model));
    const auto f_sigma = fvr::lift_shape(warped, m.lift);
    const auto f_color = fvr::lift_color(warped, m.lift);
    const auto comp = fvr::composite(fvr::ray_sample(f_sigma, f_color, m.ray));
    const Tensor img = quantize(impl::clamp01(fvr::render_head_forward(m.head, comp.color).image));
    save_ppm(img, o.out / "render.ppm");
    report["render_metrics"] = to_json(image_metrics(img, quantize(scene.driving_image)));
  }
  write_json(report, o.out / "report.json");
  write_json({{"seconds", impl::seconds_since(t0)}}, o.out / "timing.json");
  return r;
}

// ---------------------------------------------------------------- bench

struct BenchOptions {
  RunConfig config;
  std::size_t trials = 20;
  unsigned threads = 1;
  std::optional<std::filesystem::path> csv;
};

inline BenchReport run_bench(const BenchOptions& o) {
  BenchConfig b;
  b.height = o.config.H;
  b.width = o.config.W;
  b.fvr = o.config.fvr();
  b.trials = o.trials;
  b.threads = o.threads;
  b.seed = o.config.seed;
  const auto r = bench_sampling(b);
  if (o.csv) {
    if (o.csv->has_parent_path()) impl::ensure_dir(o.csv->parent_path());
    std::ofstream os(*o.csv, std::ios::trunc);
    if (!os) raise<IoError>("cannot write ", o.csv->string());
    os << "strategy,mlp_evals_per_pixel,networks,median_ns_per_frame\n" << std::setprecision(17);
    os << "one_stage," << r.one_stage.mlp_evals_per_pixel << ',' << r.one_stage.networks << ','
       << r.one_stage.median_ns_per_frame << '\n';
    os << "two_stage," << r.two_stage.mlp_evals_per_pixel << ',' << r.two_stage.networks << ','
       << r.two_stage.median_ns_per_frame << '\n';
    os << "throughput_ratio,,," << r.throughput_ratio << '\n';
  }
  return r;
}

// ---------------------------------------------------------------- gradcheck

inline json to_json(const std::vector<OpCheck>& checks) {
  json arr = json::array();
  for (const auto& c : checks) {
    arr.push_back({{"module", c.module},
                   {"op", c.op},
                   {"instances", c.instances},
                   {"failures", c.failures},
                   {"entries", c.entries},
                   {"max_abs_err", c.max_abs_err},
                   {"max_rel_err", c.max_rel_err},
                   {"passed", c.passed()}});
  }
  return arr;
}

}  // namespace fnevr::harness
