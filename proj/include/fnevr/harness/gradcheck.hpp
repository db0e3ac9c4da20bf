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

// Randomized finite-difference checks of every hand-written backward pass.
// Each check draws a small random instance, contracts the output with a
// random cotangent where the op is not scalar, and compares the analytic
// gradient with central differences elementwise.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fnevr/fvr.hpp"
#include "fnevr/harness/pipeline.hpp"
#include "fnevr/motion2d.hpp"
#include "fnevr/numgrid.hpp"
#include "fnevr/pose_edit.hpp"

namespace fnevr::harness {

struct GradCheckConfig {
  std::size_t trials = 20;
  double rtol = 1e-4;
  double atol = 1e-7;
  double eps = 1e-5;
  std::uint64_t seed = 0;
};

struct OpCheck {
  std::string module;
  std::string op;
  std::size_t instances = 0;
  std::size_t failures = 0;
  std::size_t entries = 0;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;

  bool passed() const { return failures == 0 && instances > 0; }
};

inline const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> m{"motion2d", "fvr", "pose_edit", "optim"};
  return m;
}

namespace impl {

inline Tensor randn(const Dims& dims, std::mt19937_64& rng, double stddev = 1.0) {
  Tensor t(dims);
  nn::fill_normal(t, stddev, rng);
  return t;
}

inline Tensor uniform(const Dims& dims, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(dims);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Packs several tensors into one flat vector so one FD sweep covers them
// all; `eval` receives the unpacked tensors.
class Packed {
 public:
  explicit Packed(std::vector<Tensor> parts) : parts_(std::move(parts)) {}

  Tensor flat() const { return flatten_all(ptrs()); }
  std::vector<Tensor> unpack(const Tensor& flat) const {
    std::vector<Tensor> out = parts_;
    std::vector<Tensor*> p;
    for (auto& t : out) p.push_back(&t);
    unflatten_all(flat, p);
    return out;
  }

 private:
  std::vector<const Tensor*> ptrs() const {
    std::vector<const Tensor*> p;
    for (const auto& t : parts_) p.push_back(&t);
    return p;
  }
  std::vector<Tensor> parts_;
};

inline void record(OpCheck& c, const Tensor& analytic, const Tensor& numeric,
                   const GradCheckConfig& cfg) {
  const auto r = compare_gradients(analytic, numeric, cfg.rtol, cfg.atol);
  ++c.instances;
  if (!r.passed) ++c.failures;
  c.entries += r.checked;
  c.max_abs_err = std::max(c.max_abs_err, r.max_abs_err);
  c.max_rel_err = std::max(c.max_rel_err, r.max_rel_err);
}

using Trial = std::function<void(std::mt19937_64&, OpCheck&, const GradCheckConfig&)>;

inline OpCheck run_trials(const std::string& module, const std::string& op,
                          const GradCheckConfig& cfg, std::uint64_t salt, const Trial& trial) {
  OpCheck c{module, op};
  std::mt19937_64 rng(cfg.seed * 1000003ULL + salt);
  for (std::size_t t = 0; t < cfg.trials; ++t) trial(rng, c, cfg);
  return c;
}

// Small FVR configuration that keeps full finite differences cheap.
inline fvr::FvrConfig tiny_fvr() {
  fvr::FvrConfig f;
  f.depth = 4;
  f.n_sigma = 3;
  f.n_color = 2;
  f.m_color = 3;
  f.hidden = 6;
  f.head_hidden = 4;
  return f;
}

}  // namespace impl

// ---------------------------------------------------------------- motion2d

inline std::vector<OpCheck> gradcheck_motion2d(const GradCheckConfig& cfg) {
  using impl::Packed;
  auto warp = impl::run_trials("motion2d", "warp_feature", cfg, 1,
                               [](std::mt19937_64& rng, OpCheck& c, const GradCheckConfig& g) {
    const std::size_t h = 5, w = 6, ch = 2;
    Packed in({impl::randn({4, 5, ch}, rng), impl::uniform({h, w, 2}, rng, -0.95, 0.95),
               impl::uniform({h, w, 1}, rng, 0.05, 1.0)});
    const Tensor cot = impl::randn({h, w, ch}, rng);
    auto f = [&](const Tensor& flat) {
      const auto p = in.unpack(flat);
      return motion2d::warp_feature(p[0], p[1], p[2]).dot(cot);
    };
    const auto p = in.unpack(in.flat());
    const auto gr = motion2d::warp_feature_backward(p[0], p[1], p[2], cot);
    impl::record(c, flatten_all(std::vector<const Tensor*>{&gr.source, &gr.field, &gr.occlusion}),
                 finite_diff_grad(f, in.flat(), g.eps), g);
  });
  return {warp};
}

// ---------------------------------------------------------------- fvr

inline std::vector<OpCheck> gradcheck_fvr(const GradCheckConfig& cfg) {
  using impl::Packed;
  std::vector<OpCheck> out;

  out.push_back(impl::run_trials("fvr", "matching_loss", cfg, 11,
                                 [](std::mt19937_64& rng, OpCheck& c, const GradCheckConfig& g) {
    Packed in({impl::randn({3, 3, 4, 3}, rng), impl::uniform({3, 3, 4, 1}, rng, 0.0, 1.0)});
    auto eval = [&](const Tensor& flat) {
      const auto p = in.unpack(flat);
      return fvr::matching_loss(fvr::FeatureVolume(p[0]), fvr::FeatureVolume(p[1]));
    };
    const auto ml = eval(in.flat());
    impl::record(c, flatten_all(std::vector<const Tensor*>{&ml.grad_sigma, &ml.grad_mesh}),
                 finite_diff_grad([&](const Tensor& x) { return eval(x).loss; }, in.flat(), g.eps),
                 g);
  }));

  out.push_back(impl::run_trials("fvr", "ray_sample", cfg, 12,
                                 [](std::mt19937_64& rng, OpCheck& c, const GradCheckConfig& g) {
    const auto fc = impl::tiny_fvr();
    const auto mlp = fvr::RaySampleMlpParams::random(fc, rng);
    std::vector<Tensor> parts{impl::randn({2, 3, fc.depth, fc.n_sigma}, rng),
                              impl::randn({2, 3, fc.depth, fc.n_color}, rng)};
    for (const Tensor* t : mlp.mlp.parts()) parts.push_back(*t);
    Packed in(parts);
    const Tensor cs = impl::randn({2, 3, fc.depth, 1}, rng);
    const Tensor cc = impl::randn({2, 3, fc.depth, fc.m_color}, rng);
    auto unpack = [&](const Tensor& flat, fvr::RaySampleMlpParams& m) {
      auto p = in.unpack(flat);
      auto mp = m.mlp.parts();
      for (std::size_t i = 0; i < mp.size(); ++i) *mp[i] = p[2 + i];
      return std::pair{fvr::FeatureVolume(p[0]), fvr::FeatureVolume(p[1])};
    };
    auto f = [&](const Tensor& flat) {
      auto m = mlp;
      const auto [s, col] = unpack(flat, m);
      const auto r = fvr::ray_sample(s, col, m);
      return r.p_sigma.dot(cs) + r.p_color.dot(cc);
    };
    auto m = mlp;
    const auto [s, col] = unpack(in.flat(), m);
    const auto fw = fvr::ray_sample_forward(s, col, m);
    const auto gr = fvr::ray_sample_backward(s, col, m, fw, cs, cc);
    std::vector<const Tensor*> ga{&gr.f_sigma, &gr.f_color};
    for (const Tensor* t : gr.params.mlp.parts()) ga.push_back(t);
    impl::record(c, flatten_all(ga), finite_diff_grad(f, in.flat(), g.eps), g);
  }));

  out.push_back(impl::run_trials("fvr", "composite", cfg, 13,
                                 [](std::mt19937_64& rng, OpCheck& c, const GradCheckConfig& g) {
    Packed in({impl::uniform({2, 3, 6, 1}, rng, 0.0, 2.0), impl::randn({2, 3, 6, 3}, rng)});
    const Tensor cot = impl::randn({2, 3, 3}, rng);
    auto sample = [&](const Tensor& flat) {
      auto p = in.unpack(flat);
      return fvr::RenderSample{std::move(p[0]), std::move(p[1])};
    };
    auto f = [&](const Tensor& flat) { return fvr::composite(sample(flat)).color.dot(cot); };
    const auto gr = fvr::composite_backward(sample(in.flat()), cot);
    impl::record(c, flatten_all(std::vector<const Tensor*>{&gr.p_sigma, &gr.p_color}),
                 finite_diff_grad(f, in.flat(), g.eps), g);
  }));

  out.push_back(impl::run_trials("fvr", "render_loss", cfg, 14,
                                 [](std::mt19937_64& rng, OpCheck& c, const GradCheckConfig& g) {
    const auto fc = impl::tiny_fvr();
    const auto head = fvr::RenderHeadParams::random(fc, rng);
    std::vector<Tensor> parts{impl::randn({4, 5, fc.m_color}, rng)};
    for (const Tensor* t : head.parts()) parts.push_back(*t);
    Packed in(parts);
    const Tensor target = impl::uniform({4, 5, 3}, rng, 0.0, 1.0);
    auto eval = [&](const Tensor& flat) {
      auto p = in.unpack(flat);
      auto hd = head;
      auto hp = hd.parts();
      for (std::size_t i = 0; i < hp.size(); ++i) *hp[i] = p[1 + i];
      return fvr::render_loss(p[0], target, hd);
    };
    const auto rl = eval(in.flat());
    std::vector<const Tensor*> ga{&rl.grad_f_r};
    for (const Tensor* t : rl.grad_head.parts()) ga.push_back(t);
    impl::record(c, flatten_all(ga),
                 finite_diff_grad([&](const Tensor& x) { return eval(x).loss; }, in.flat(), g.eps),
                 g);
  }));

  out.push_back(impl::run_trials("fvr", "lift", cfg, 15,
                                 [](std::mt19937_64& rng, OpCheck& c, const GradCheckConfig& g) {
    const auto fc = impl::tiny_fvr();
    const auto lift = fvr::LiftNetParams::random(2, fc, 1, rng, 1, 3);
    std::vector<Tensor> parts{impl::randn({3, 4, 2}, rng)};
    for (const Tensor* t : lift.parts()) parts.push_back(*t);
    Packed in(parts);
    const Tensor cs = impl::randn({3, 4, fc.depth, fc.n_sigma}, rng);
    const Tensor cc = impl::randn({3, 4, fc.depth, fc.n_color}, rng);
    auto unpack = [&](const Tensor& flat) {
      auto p = in.unpack(flat);
      auto l = lift;
      auto lp = l.parts();
      for (std::size_t i = 0; i < lp.size(); ++i) *lp[i] = p[1 + i];
      return std::pair{p[0], l};
    };
    auto f = [&](const Tensor& flat) {
      const auto [x, l] = unpack(flat);
      return fvr::lift_shape(x, l).tensor().dot(cs) + fvr::lift_color(x, l).tensor().dot(cc);
    };
    const auto [x, l] = unpack(in.flat());
    auto gr = fvr::lift_backward(x, l, cs, cc);
    std::vector<const Tensor*> ga{&gr.input};
    for (const Tensor* t : std::as_const(gr.params).parts()) ga.push_back(t);
    impl::record(c, flatten_all(ga), finite_diff_grad(f, in.flat(), g.eps), g);
  }));

  out.push_back(impl::run_trials("fvr", "mesh_feature", cfg, 16,
                                 [](std::mt19937_64& rng, OpCheck& c, const GradCheckConfig& g) {
    std::vector<Tensor> maps;
    for (int i = 0; i < 5; ++i) maps.push_back(impl::uniform({3, 3, 2, 1}, rng, 0.0, 1.0));
    const Tensor logits = impl::randn({5}, rng);
    const Tensor cot = impl::randn({3, 3, 2, 1}, rng);
    auto f = [&](const Tensor& x) { return fvr::mesh_feature(maps, x).tensor().dot(cot); };
    impl::record(c, fvr::mesh_feature_backward(maps, logits, cot),
                 finite_diff_grad(f, logits, g.eps), g);
  }));
  return out;
}

// ---------------------------------------------------------------- pose_edit

inline std::vector<OpCheck> gradcheck_pose_edit(const GradCheckConfig& cfg) {
  std::vector<OpCheck> out;
  auto random_source = [](std::mt19937_64& rng, std::size_t k) {
    motion2d::KeypointSet kp;
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (std::size_t i = 0; i < k; ++i) {
      kp.points.emplace_back(u(rng), u(rng));
      Mat2 j;
      j << 1.0 + 0.2 * u(rng), 0.2 * u(rng), 0.2 * u(rng), 1.0 + 0.2 * u(rng);
      kp.jacobians.push_back(j);
    }
    return kp;
  };

  out.push_back(impl::run_trials("pose_edit", "edit_keypoints", cfg, 21,
                                 [&](std::mt19937_64& rng, OpCheck& c, const GradCheckConfig& g) {
    const std::size_t k = 3;
    const auto p = pose_edit::EditorMlpParams::random(k, rng, 12);
    const auto src = random_source(rng, k);
    std::uniform_real_distribution<double> a(-0.6, 0.6);
    const EulerAngles ang{a(rng), a(rng), a(rng)};
    const Tensor cot = impl::randn({pose_edit::output_width(k)}, rng);
    auto f = [&](const Tensor& flat) {
      auto q = p;
      unflatten_all(flat, q.mlp.parts());
      return pose_edit::encode_edit(pose_edit::edit_keypoints(ang, src, q)).dot(cot);
    };
    const auto fw = pose_edit::edit_keypoints_forward(ang, src, p);
    const auto gr = pose_edit::edit_keypoints_backward(p, fw, cot.reshaped({1, cot.size()}));
    impl::record(c, flatten_all(gr.params.parts()),
                 finite_diff_grad(f, flatten_all(p.mlp.parts()), g.eps), g);
  }));

  out.push_back(impl::run_trials("pose_edit", "editor_loss", cfg, 22,
                                 [&](std::mt19937_64& rng, OpCheck& c, const GradCheckConfig& g) {
    const std::size_t k = 4;
    const auto target = random_source(rng, k);
    const auto pred0 = random_source(rng, k);
    auto f = [&](const Tensor& flat) {
      return pose_edit::editor_loss(target, pose_edit::decode_edit(flat.data(), k)).loss;
    };
    const Tensor x = pose_edit::encode_targets(pred0);
    const auto l = pose_edit::editor_loss(target, pose_edit::decode_edit(x.data(), k));
    impl::record(c, l.grad, finite_diff_grad(f, x, g.eps), g);
  }));
  return out;
}

// ---------------------------------------------------------------- optim

// Full objectives as seen by the optimizer: composed gradients of the whole
// rendering branch and of the batched editor loss.
inline std::vector<OpCheck> gradcheck_optim(const GradCheckConfig& cfg) {
  std::vector<OpCheck> out;
  out.push_back(impl::run_trials("optim", "fvr_objective", cfg, 31,
                                 [](std::mt19937_64& rng, OpCheck& c, const GradCheckConfig& g) {
    const auto fc = impl::tiny_fvr();
    const std::size_t h = 4, w = 4, n_down = 3;
    const auto m = FvrModel::random(2, fc, n_down, rng());
    FvrModel mm = m;
    nn::fill_normal(mm.lift.heatmap_logits, 1.0, rng);
    FvrInputs in;
    in.warped = impl::randn({h, w, 2}, rng);
    in.target = impl::uniform({h, w, 3}, rng, 0.0, 1.0);
    for (std::size_t i = 0; i < n_down; ++i) {
      in.heatmaps.push_back(impl::uniform({h, w, fc.depth, 1}, rng, 0.0, 1.0));
    }
    const auto obj = fvr_objective(mm, in);
    const Tensor x = mm.flatten();
    impl::record(c, obj(x).grad,
                 finite_diff_grad([&](const Tensor& y) { return obj(y).loss; }, x, g.eps), g);
  }));
  out.push_back(impl::run_trials("optim", "editor_objective", cfg, 32,
                                 [](std::mt19937_64& rng, OpCheck& c, const GradCheckConfig& g) {
    EditorDataConfig dc;
    dc.keypoints = 3;
    const auto d = make_editor_dataset(rng(), 6, dc);
    const auto p = pose_edit::EditorMlpParams::random(dc.keypoints, rng, 10);
    const auto obj = editor_objective(p, d);
    const Tensor x = flatten_all(p.mlp.parts());
    impl::record(c, obj(x).grad,
                 finite_diff_grad([&](const Tensor& y) { return obj(y).loss; }, x, g.eps), g);
  }));
  return out;
}

// module is one of gradcheck_modules() or "all".
inline std::vector<OpCheck> run_gradcheck_suite(const std::string& module,
                                                const GradCheckConfig& cfg) {
  std::vector<OpCheck> out;
  auto add = [&](std::vector<OpCheck> v) { out.insert(out.end(), v.begin(), v.end()); };
  const bool all = module == "all";
  if (all || module == "motion2d") add(gradcheck_motion2d(cfg));
  if (all || module == "fvr") add(gradcheck_fvr(cfg));
  if (all || module == "pose_edit") add(gradcheck_pose_edit(cfg));
  if (all || module == "optim") add(gradcheck_optim(cfg));
  if (out.empty()) raise<DomainError>("unknown gradcheck module '", module, "'");
  return out;
}

}  // namespace fnevr::harness
