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

// Lightweight pose editing: an MLP maps (rotation matrix, source keypoints,
// source Jacobians) to edited keypoints and Jacobians, supervised by an L1
// loss against the driving keypoints.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "fnevr/motion2d.hpp"
#include "fnevr/nn.hpp"
#include "fnevr/rotation.hpp"

namespace fnevr::pose_edit {

using motion2d::KeypointSet;
using motion2d::Mat2;
using motion2d::Vec2;

inline constexpr double kLambdaValue = 1.0;
inline constexpr double kLambdaJacobian = 0.5;
inline constexpr std::size_t kDefaultHidden = 128;

inline std::size_t input_width(std::size_t k) { return 9 + 6 * k; }
inline std::size_t output_width(std::size_t k) { return 6 * k; }

struct EditorMlpParams {
  nn::MlpParams mlp;

  std::size_t keypoints() const { return mlp.out() / 6; }

  static EditorMlpParams random(std::size_t k, std::mt19937_64& rng,
                                std::size_t hidden = kDefaultHidden) {
    return {nn::MlpParams::random(input_width(k), hidden, output_width(k), rng)};
  }

  void validate() const {
    mlp.validate();
    const std::size_t out = mlp.out();
    if (out % 6 != 0 || out == 0 || mlp.in() != input_width(out / 6)) {
      raise<ShapeError>("editor MLP widths ", mlp.in(), " -> ", out,
                        " are not 9+6K -> 6K for any K");
    }
  }
};

// Edited keypoints (absolute positions) and their Jacobians.
struct EditResult {
  std::vector<Vec2> values;
  std::vector<Mat2> jacobians;

  KeypointSet as_keypoints() const { return {values, jacobians}; }
};

// Flattened [vec(R) row-major, p_S (K x 2), J_S (K x 2 x 2)].
inline void write_editor_input(const Mat3& r, const KeypointSet& src, double* dst) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) *dst++ = r(i, j);
  for (const Vec2& p : src.points) {
    *dst++ = p.x();
    *dst++ = p.y();
  }
  for (const Mat2& j : src.jacobians) {
    *dst++ = j(0, 0);
    *dst++ = j(0, 1);
    *dst++ = j(1, 0);
    *dst++ = j(1, 1);
  }
}

inline Tensor editor_input(const Mat3& r, const KeypointSet& src) {
  Tensor x({input_width(src.size())});
  write_editor_input(r, src, x.data());
  return x;
}

// Output layout: [values (K x 2), jacobians (K x 2 x 2)].
inline EditResult decode_edit(const double* out, std::size_t k) {
  EditResult e;
  e.values.reserve(k);
  e.jacobians.reserve(k);
  for (std::size_t i = 0; i < k; ++i) e.values.emplace_back(out[2 * i], out[2 * i + 1]);
  const double* j = out + 2 * k;
  for (std::size_t i = 0; i < k; ++i) {
    Mat2 m;
    m << j[4 * i], j[4 * i + 1], j[4 * i + 2], j[4 * i + 3];
    e.jacobians.push_back(m);
  }
  return e;
}

inline Tensor encode_targets(const KeypointSet& kp) {
  const std::size_t k = kp.size();
  Tensor t({output_width(k)});
  for (std::size_t i = 0; i < k; ++i) {
    t[2 * i] = kp.points[i].x();
    t[2 * i + 1] = kp.points[i].y();
    const Mat2& j = kp.jacobians[i];
    t[2 * k + 4 * i] = j(0, 0);
    t[2 * k + 4 * i + 1] = j(0, 1);
    t[2 * k + 4 * i + 2] = j(1, 0);
    t[2 * k + 4 * i + 3] = j(1, 1);
  }
  return t;
}

inline Tensor encode_edit(const EditResult& e) {
  return encode_targets(e.as_keypoints());
}

struct EditForward {
  EditResult result;
  Tensor input;
  nn::MlpForward mlp;
};

inline EditForward edit_keypoints_forward(const EulerAngles& angles, const KeypointSet& src,
                                          const EditorMlpParams& p) {
  p.validate();
  src.validate(false);
  if (src.size() != p.keypoints()) {
    raise<ShapeError>("edit_keypoints: editor built for K = ", p.keypoints(),
                      ", source has ", src.size(), " keypoints");
  }
  EditForward f;
  f.input = editor_input(euler_to_matrix(angles), src);
  f.mlp = nn::mlp_forward(p.mlp, f.input, 1);
  f.result = decode_edit(f.mlp.out.data(), src.size());
  return f;
}

inline EditResult edit_keypoints(const EulerAngles& angles, const KeypointSet& src,
                                 const EditorMlpParams& p) {
  return edit_keypoints_forward(angles, src, p).result;
}

// grad_out is in the flattened output layout (see encode_edit).
inline nn::MlpGrads edit_keypoints_backward(const EditorMlpParams& p, const EditForward& fwd,
                                            const Tensor& grad_out) {
  return nn::mlp_backward(p.mlp, fwd.input, 1, fwd.mlp, grad_out);
}

struct EditorLoss {
  double loss = 0.0;
  double value_term = 0.0;     // mean |p_D - delta_value|
  double jacobian_term = 0.0;  // mean |J_D - delta_Jacobian|
  Tensor grad;                 // flattened output layout
};

// Same loss on pre-flattened prediction/target vectors (output layout).
inline EditorLoss editor_loss_flat(const double* pred, const double* target, std::size_t k,
                                   double lambda1 = kLambdaValue,
                                   double lambda2 = kLambdaJacobian) {
  EditorLoss l;
  l.grad = Tensor({output_width(k)});
  const double nv = static_cast<double>(2 * k), nj = static_cast<double>(4 * k);
  auto sgn = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
  for (std::size_t i = 0; i < 2 * k; ++i) {
    const double d = pred[i] - target[i];
    l.value_term += std::abs(d) / nv;
    l.grad[i] = lambda1 * sgn(d) / nv;
  }
  for (std::size_t i = 2 * k; i < 6 * k; ++i) {
    const double d = pred[i] - target[i];
    l.jacobian_term += std::abs(d) / nj;
    l.grad[i] = lambda2 * sgn(d) / nj;
  }
  l.loss = lambda1 * l.value_term + lambda2 * l.jacobian_term;
  return l;
}

// lambda1 * mean|p_D - delta_value| + lambda2 * mean|J_D - delta_Jacobian|.
inline EditorLoss editor_loss(const KeypointSet& target, const EditResult& pred,
                              double lambda1 = kLambdaValue, double lambda2 = kLambdaJacobian) {
  if (target.size() != pred.values.size() || target.size() != pred.jacobians.size() ||
      target.points.size() != target.jacobians.size()) {
    raise<ShapeError>("editor_loss: target has ", target.size(), " keypoints, prediction ",
                      pred.values.size(), " values / ", pred.jacobians.size(), " jacobians");
  }
  const Tensor t = encode_targets(target);
  const Tensor p = encode_edit(pred);
  return editor_loss_flat(p.data(), t.data(), target.size(), lambda1, lambda2);
}

}  // namespace fnevr::pose_edit
