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

// End-to-end differentiable FVR pipeline on a synthetic scene, and the
// keypoint-rotation dataset used to train the pose editor.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fnevr/fvr.hpp"
#include "fnevr/harness/scene.hpp"
#include "fnevr/optim.hpp"
#include "fnevr/pose_edit.hpp"

namespace fnevr::harness {

// Trainable parameters of the rendering branch.
struct FvrModel {
  fvr::LiftNetParams lift;
  fvr::RaySampleMlpParams ray;
  fvr::RenderHeadParams head;

  static FvrModel random(std::size_t c_in, const fvr::FvrConfig& cfg, std::size_t n_down,
                         std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    FvrModel m;
    m.lift = fvr::LiftNetParams::random(c_in, cfg, n_down, rng);
    m.ray = fvr::RaySampleMlpParams::random(cfg, rng);
    m.head = fvr::RenderHeadParams::random(cfg, rng);
    return m;
  }

  std::vector<const Tensor*> parts() const {
    auto out = lift.parts();
    for (const Tensor* t : ray.mlp.parts()) out.push_back(t);
    for (const Tensor* t : head.parts()) out.push_back(t);
    return out;
  }
  std::vector<Tensor*> parts() {
    auto out = lift.parts();
    for (Tensor* t : ray.mlp.parts()) out.push_back(t);
    for (Tensor* t : head.parts()) out.push_back(t);
    return out;
  }

  Tensor flatten() const { return flatten_all(parts()); }
  void assign(const Tensor& flat) { unflatten_all(flat, parts()); }
};

// Fixed (non-trainable) inputs of the rendering branch.
struct FvrInputs {
  Tensor warped;                  // F_w, H x W x C
  Tensor target;                  // driving image, H x W x 3
  std::vector<Tensor> heatmaps;   // one H x W x D x 1 map per down-sampled vertex
};

inline FvrInputs make_fvr_inputs(const SyntheticScene& s, const Tensor& warped) {
  FvrInputs in;
  in.warped = warped;
  in.target = s.driving_image;
  const auto down = face3d::downsample_vertices(s.driving_vertices, s.config.n_down, 0);
  in.heatmaps = fvr::mesh_heatmaps(down, {s.config.height, s.config.width, s.config.depth});
  return in;
}

struct FvrEvaluation {
  optim::LossReport report;
  fvr::CompositeResult composite;
  Tensor image;  // I_m
  double matching_inner = 0.0;
  FvrModel grad;
};

// L_R + L_sigma and their gradients with respect to every model parameter.
inline FvrEvaluation evaluate_fvr(const FvrModel& m, const FvrInputs& in,
                                  const fvr::FeatureDistance& distance = fvr::pyramid_l1(),
                                  bool with_grad = true) {
  const auto f_sigma = fvr::lift_shape(in.warped, m.lift);
  const auto f_color = fvr::lift_color(in.warped, m.lift);
  const auto rs = fvr::ray_sample_forward(f_sigma, f_color, m.ray);
  FvrEvaluation ev;
  ev.composite = fvr::composite(rs.sample);
  auto rl = fvr::render_loss(ev.composite.color, in.target, m.head, distance);
  const auto f_mesh = fvr::mesh_feature(in.heatmaps, m.lift.heatmap_logits);
  const auto ml = fvr::matching_loss(f_sigma, f_mesh);
  ev.matching_inner = ml.inner;
  ev.image = std::move(rl.image);
  ev.report.set(optim::Component::kRender, rl.loss);
  ev.report.set(optim::Component::kMatching, ml.loss);
  ev.report = optim::total_loss(ev.report);
  if (!with_grad) return ev;

  const auto cg = fvr::composite_backward(rs.sample, rl.grad_f_r);
  auto rg = fvr::ray_sample_backward(f_sigma, f_color, m.ray, rs, cg.p_sigma, cg.p_color);
  rg.f_sigma += ml.grad_sigma;
  auto lg = fvr::lift_backward(in.warped, m.lift, rg.f_sigma, rg.f_color);
  lg.params.heatmap_logits = fvr::mesh_feature_backward(in.heatmaps, m.lift.heatmap_logits,
                                                        ml.grad_mesh);
  ev.grad.lift = std::move(lg.params);
  ev.grad.ray = std::move(rg.params);
  ev.grad.head = std::move(rl.grad_head);
  return ev;
}

inline optim::Objective fvr_objective(const FvrModel& shape_template, const FvrInputs& in) {
  return [shape_template, &in](const Tensor& flat) {
    FvrModel m = shape_template;
    m.assign(flat);
    auto ev = evaluate_fvr(m, in);
    optim::ObjectiveValue v;
    v.loss = ev.report.total;
    v.grad = ev.grad.flatten();
    v.components = {{"L_R", ev.report[optim::Component::kRender].value},
                    {"L_sigma", ev.report[optim::Component::kMatching].value}};
    return v;
  };
}

// ---------------------------------------------------------------- editor data

struct EditorSample {
  EulerAngles angles;
  KeypointSet source;
  KeypointSet target;
};

struct EditorDataset {
  std::size_t keypoints = 0;
  std::vector<EditorSample> samples;
  Tensor inputs;   // N x (9 + 6K)
  Tensor targets;  // N x 6K
};

struct EditorDataConfig {
  std::size_t keypoints = motion2d::kDefaultKeypoints;
  double max_yaw = 30.0 * std::numbers::pi / 180.0;
  double max_pitch = 20.0 * std::numbers::pi / 180.0;
  double max_roll = 20.0 * std::numbers::pi / 180.0;
  double shape_std = 0.5;
  double camera_scale = 0.8;
};

// Frontal source heads with random identity; targets are the same landmarks
// after a rigid rotation, projected orthographically.
inline EditorDataset make_editor_dataset(std::uint64_t seed, std::size_t count,
                                         const EditorDataConfig& cfg = {}) {
  const face3d::HeadModel head = face3d::make_desk_head();
  const auto landmarks = select_landmarks(head, cfg.keypoints);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  EditorDataset d;
  d.keypoints = cfg.keypoints;
  const std::size_t in_w = pose_edit::input_width(cfg.keypoints);
  const std::size_t out_w = pose_edit::output_width(cfg.keypoints);
  d.inputs = Tensor({count, in_w});
  d.targets = Tensor({count, out_w});
  const face3d::Camera cam{cfg.camera_scale, 0.0, 0.0};
  for (std::size_t n = 0; n < count; ++n) {
    face3d::FlameParams p = face3d::FlameParams::zeros(head);
    for (double& b : p.shape) b = cfg.shape_std * n01(rng);
    for (double& e : p.expression) e = cfg.shape_std * n01(rng);
    const EulerAngles a{cfg.max_yaw * unit(rng), cfg.max_pitch * unit(rng), cfg.max_roll * unit(rng)};
    const Mat3 r = euler_to_matrix(a);
    const auto src_v = face3d::camera_apply(face3d::blend_skinning(head, p), cam, std::nullopt);
    p.set_rotation(0, matrix_to_axis_angle(r));
    const auto drv_v = face3d::camera_apply(face3d::blend_skinning(head, p), cam, std::nullopt);
    EditorSample s{a, project_keypoints(src_v, landmarks, Mat3::Identity()),
                   project_keypoints(drv_v, landmarks, r)};
    pose_edit::write_editor_input(r, s.source, d.inputs.data() + n * in_w);
    const Tensor t = pose_edit::encode_targets(s.target);
    std::copy_n(t.data(), out_w, d.targets.data() + n * out_w);
    d.samples.push_back(std::move(s));
  }
  return d;
}

struct EditorBatchLoss {
  double loss = 0.0;
  double value_term = 0.0;
  double jacobian_term = 0.0;
  pose_edit::EditorMlpParams grad;
};

// Mean editor loss over the dataset and its parameter gradient.
inline EditorBatchLoss editor_batch_loss(const pose_edit::EditorMlpParams& p,
                                         const EditorDataset& d, bool with_grad = true) {
  const std::size_t n = d.samples.size(), k = d.keypoints, out_w = pose_edit::output_width(k);
  const auto fwd = nn::mlp_forward(p.mlp, d.inputs, n);
  EditorBatchLoss r;
  Tensor g_out({n, out_w});
  for (std::size_t i = 0; i < n; ++i) {
    const auto l = pose_edit::editor_loss_flat(fwd.out.data() + i * out_w,
                                               d.targets.data() + i * out_w, k);
    r.loss += l.loss / static_cast<double>(n);
    r.value_term += l.value_term / static_cast<double>(n);
    r.jacobian_term += l.jacobian_term / static_cast<double>(n);
    for (std::size_t j = 0; j < out_w; ++j) g_out[i * out_w + j] = l.grad[j] / static_cast<double>(n);
  }
  if (with_grad) r.grad = {nn::mlp_backward(p.mlp, d.inputs, n, fwd, g_out).params};
  return r;
}

// Mean Euclidean distance between predicted and true edited keypoints.
inline double editor_keypoint_error(const pose_edit::EditorMlpParams& p, const EditorDataset& d) {
  const std::size_t n = d.samples.size(), k = d.keypoints, out_w = pose_edit::output_width(k);
  const auto fwd = nn::mlp_forward(p.mlp, d.inputs, n);
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double dx = fwd.out[i * out_w + 2 * j] - d.targets[i * out_w + 2 * j];
      const double dy = fwd.out[i * out_w + 2 * j + 1] - d.targets[i * out_w + 2 * j + 1];
      err += std::hypot(dx, dy);
    }
  }
  return err / static_cast<double>(n * k);
}

inline optim::Objective editor_objective(const pose_edit::EditorMlpParams& shape_template,
                                         const EditorDataset& d) {
  return [shape_template, &d](const Tensor& flat) {
    pose_edit::EditorMlpParams p = shape_template;
    unflatten_all(flat, p.mlp.parts());
    auto l = editor_batch_loss(p, d);
    optim::ObjectiveValue v;
    v.loss = l.loss;
    v.grad = flatten_all(l.grad.mlp.parts());
    v.components = {{"L_editor_value", l.value_term}, {"L_editor_jacobian", l.jacobian_term}};
    return v;
  };
}

}  // namespace fnevr::harness
