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

// Linear blend skinned parametric head, camera mapping, farthest-point
// vertex down-sampling and Euler angle extraction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "fnevr/rotation.hpp"
#include "fnevr/tensor.hpp"

namespace fnevr::face3d {

// M x 3 vertex positions.
struct VertexSet {
  Tensor xyz;

  std::size_t size() const { return xyz.dim(0); }
  Vec3 vertex(std::size_t i) const {
    return {xyz.at(i, 0), xyz.at(i, 1), xyz.at(i, 2)};
  }
  void set(std::size_t i, const Vec3& v) {
    xyz.at(i, 0) = v.x();
    xyz.at(i, 1) = v.y();
    xyz.at(i, 2) = v.z();
  }
  static VertexSet with_size(std::size_t m) { return {Tensor({m, 3})}; }
};

struct HeadModel {
  Tensor template_vertices;  // N x 3
  Tensor shape_basis;        // N x 3 x |beta|
  Tensor expr_basis;         // N x 3 x |psi|
  Tensor joint_regressor;    // K_j x N, J(beta) = regressor * shaped template
  Tensor skin_weights;       // K_j x N, columns sum to one
  Tensor faces;              // F x 3 vertex indices (stored as reals)

  std::size_t vertices() const { return template_vertices.dim(0); }
  std::size_t joints() const { return skin_weights.dim(0); }
  std::size_t shape_count() const { return shape_basis.dim(2); }
  std::size_t expr_count() const { return expr_basis.dim(2); }
  std::size_t face_count() const { return faces.dim(0); }

  void validate() const {
    require_rank(template_vertices, 2, "HeadModel template");
    const std::size_t n = template_vertices.dim(0);
    if (template_vertices.dim(1) != 3) raise<ShapeError>("template must be Nx3");
    if (n < 4) raise<ShapeError>("HeadModel needs N >= 4 vertices, got ", n);
    require_rank(shape_basis, 3, "HeadModel shape basis");
    require_rank(expr_basis, 3, "HeadModel expression basis");
    require_rank(joint_regressor, 2, "HeadModel joint regressor");
    require_rank(skin_weights, 2, "HeadModel skin weights");
    require_rank(faces, 2, "HeadModel faces");
    if (shape_basis.dim(0) != n || shape_basis.dim(1) != 3 ||
        expr_basis.dim(0) != n || expr_basis.dim(1) != 3) {
      raise<ShapeError>("blendshape bases must be Nx3xB with N = ", n);
    }
    const std::size_t kj = skin_weights.dim(0);
    if (skin_weights.dim(1) != n || joint_regressor.dims() != Dims{kj, n}) {
      raise<ShapeError>("skin weights ", detail::dims_str(skin_weights.dims()),
                        " / joint regressor ",
                        detail::dims_str(joint_regressor.dims()),
                        " must both be K_j x N");
    }
    if (faces.dim(1) != 3) raise<ShapeError>("faces must be Fx3");
    for (double f : faces.values()) {
      if (f < 0 || f >= static_cast<double>(n) || f != std::floor(f)) {
        raise<DomainError>("face index ", f, " invalid for N = ", n);
      }
    }
    require_finite(template_vertices, "HeadModel template");
    require_finite(shape_basis, "HeadModel shape basis");
    require_finite(expr_basis, "HeadModel expression basis");
    require_finite(joint_regressor, "HeadModel joint regressor");
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < kj; ++k) {
        const double w = skin_weights.at(k, i);
        if (!(w >= 0.0)) {
          raise<DomainError>("negative skinning weight at joint ", k,
                             " vertex ", i);
        }
        s += w;
      }
      if (std::abs(s - 1.0) > 1e-9) {
        raise<DomainError>("skinning weights of vertex ", i, " sum to ", s);
      }
    }
  }
};

struct Camera {
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
};

struct DepthRange {
  double near = -1.0;
  double far = 1.0;
};

struct FlameParams {
  std::vector<double> shape;       // |beta|
  std::vector<double> pose;        // 3 (global) + 3 per joint, axis-angle
  std::vector<double> expression;  // |psi|
  Camera camera;

  static FlameParams zeros(const HeadModel& m) {
    return {std::vector<double>(m.shape_count(), 0.0),
            std::vector<double>(3 * (m.joints() + 1), 0.0),
            std::vector<double>(m.expr_count(), 0.0), Camera{}};
  }

  Vec3 rotation(std::size_t slot) const {
    return {pose[3 * slot], pose[3 * slot + 1], pose[3 * slot + 2]};
  }
  void set_rotation(std::size_t slot, const Vec3& r) {
    pose[3 * slot] = r.x();
    pose[3 * slot + 1] = r.y();
    pose[3 * slot + 2] = r.z();
  }
};

namespace detail {

inline Vec3 row3(const Tensor& t, std::size_t i) {
  return {t.at(i, 0), t.at(i, 1), t.at(i, 2)};
}

struct Rigid {
  Mat3 r = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Rigid then(const Rigid& inner) const { return {r * inner.r, r * inner.t + t}; }
  Vec3 apply(const Vec3& v) const { return r * v + t; }
};

}  // namespace detail

// Rest mesh plus bases, without pose: T_bar + B_beta beta + B_psi psi.
inline Tensor shaped_template(const HeadModel& m, const std::vector<double>& beta,
                              const std::vector<double>& psi) {
  Tensor v = m.template_vertices;
  const std::size_t n = m.vertices(), nb = m.shape_count(), ne = m.expr_count();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < 3; ++d) {
      double acc = v.at(i, d);
      for (std::size_t b = 0; b < nb; ++b) acc += m.shape_basis.at(i, d, b) * beta[b];
      for (std::size_t e = 0; e < ne; ++e) acc += m.expr_basis.at(i, d, e) * psi[e];
      v.at(i, d) = acc;
    }
  }
  return v;
}

// J(beta): joint locations regressed from the shape-only mesh.
inline Tensor rest_joints(const HeadModel& m, const std::vector<double>& beta) {
  const Tensor shaped = shaped_template(m, beta, std::vector<double>(m.expr_count(), 0.0));
  const std::size_t kj = m.joints(), n = m.vertices();
  Tensor j({kj, 3});
  for (std::size_t k = 0; k < kj; ++k) {
    for (std::size_t d = 0; d < 3; ++d) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += m.joint_regressor.at(k, i) * shaped.at(i, d);
      j.at(k, d) = acc;
    }
  }
  return j;
}

// Posed vertices. Pose slot 0 rotates the whole head about the model origin;
// slot k+1 rotates joint k about its rest location, chained root -> jaw.
inline VertexSet blend_skinning(const HeadModel& m, const FlameParams& p) {
  const std::size_t kj = m.joints(), n = m.vertices();
  if (p.shape.size() != m.shape_count() || p.expression.size() != m.expr_count() ||
      p.pose.size() != 3 * (kj + 1)) {
    raise<ShapeError>("blend_skinning: params (|beta|=", p.shape.size(),
                      ", |theta|=", p.pose.size(), ", |psi|=", p.expression.size(),
                      ") do not match model (", m.shape_count(), ", ",
                      3 * (kj + 1), ", ", m.expr_count(), ")");
  }
  for (double v : p.pose) {
    if (!std::isfinite(v)) raise<DomainError>("blend_skinning: non-finite rotation vector");
  }
  for (double v : p.shape) {
    if (!std::isfinite(v)) raise<DomainError>("blend_skinning: non-finite shape coefficient");
  }
  for (double v : p.expression) {
    if (!std::isfinite(v)) raise<DomainError>("blend_skinning: non-finite expression coefficient");
  }

  const Tensor shaped = shaped_template(m, p.shape, p.expression);
  const Tensor joints = rest_joints(m, p.shape);

  const detail::Rigid global{axis_angle_to_matrix(p.rotation(0)), Vec3::Zero()};
  std::vector<detail::Rigid> world(kj);
  detail::Rigid chain;
  for (std::size_t k = 0; k < kj; ++k) {
    const Vec3 jk = detail::row3(joints, k);
    const Mat3 rk = axis_angle_to_matrix(p.rotation(k + 1));
    const detail::Rigid local{rk, jk - rk * jk};
    chain = chain.then(local);
    world[k] = global.then(chain);
  }

  // Blended as v + sum_k w_k ((R_k - I) v + t_k), equal to sum_k w_k (R_k v + t_k)
  // for weights summing to one, and exact at the rest pose.
  VertexSet out = VertexSet::with_size(n);
  for (std::size_t i = 0; i < n; ++i) {
    Mat3 r = Mat3::Zero();
    Vec3 t = Vec3::Zero();
    for (std::size_t k = 0; k < kj; ++k) {
      const double w = m.skin_weights.at(k, i);
      if (w == 0.0) continue;
      r += w * (world[k].r - Mat3::Identity());
      t += w * world[k].t;
    }
    const Vec3 v = detail::row3(shaped, i);
    out.set(i, v + (r * v + t));
  }
  return out;
}

// (x, y) -> s (x, y) + t, z -> s z, then optionally z -> (z - near)/(far - near).
inline VertexSet camera_apply(const VertexSet& v, const Camera& c,
                              std::optional<DepthRange> depth = DepthRange{}) {
  if (!(c.scale > 0.0)) raise<DomainError>("camera_apply: scale must be > 0, got ", c.scale);
  if (depth && !(depth->far > depth->near)) {
    raise<DomainError>("camera_apply: depth range far must exceed near");
  }
  VertexSet out = v;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double x = c.scale * v.xyz.at(i, 0) + c.tx;
    double y = c.scale * v.xyz.at(i, 1) + c.ty;
    double z = c.scale * v.xyz.at(i, 2);
    if (depth) z = (z - depth->near) / (depth->far - depth->near);
    out.xyz.at(i, 0) = x;
    out.xyz.at(i, 1) = y;
    out.xyz.at(i, 2) = z;
  }
  return out;
}

// Farthest-point visit order starting at `start`; ties go to the lowest index.
inline std::vector<std::size_t> farthest_point_order(const VertexSet& v,
                                                     std::size_t n_down,
                                                     std::size_t start) {
  const std::size_t m = v.size();
  if (n_down < 1 || n_down > m) {
    raise<DomainError>("downsample_vertices: n_down = ", n_down,
                       " outside [1, ", m, "]");
  }
  if (start >= m) raise<DomainError>("downsample_vertices: start index ", start, " >= ", m);
  std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(m, false);
  std::vector<std::size_t> order;
  order.reserve(n_down);
  std::size_t current = start;
  for (std::size_t step = 0; step < n_down; ++step) {
    order.push_back(current);
    taken[current] = true;
    if (step + 1 == n_down) break;
    const Vec3 c = v.vertex(current);
    std::size_t best = m;
    double best_d = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (taken[i]) continue;
      nearest[i] = std::min(nearest[i], (v.vertex(i) - c).squaredNorm());
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    current = best;
  }
  return order;
}

inline VertexSet downsample_vertices(const VertexSet& v, std::size_t n_down,
                                     std::size_t start = 0) {
  const auto order = farthest_point_order(v, n_down, start);
  VertexSet out = VertexSet::with_size(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) out.set(i, v.vertex(order[i]));
  return out;
}

struct EulerExtraction {
  EulerAngles angles;
  bool degenerate = false;
};

// Inverts R = Rz(roll) Rx(pitch) Ry(yaw). yaw, roll in (-pi, pi],
// pitch in [-pi/2, pi/2]. Near gimbal lock roll is pinned to zero.
inline EulerExtraction euler_from_matrix(const Mat3& r) {
  constexpr double pi = std::numbers::pi;
  auto wrap = [](double a) { return a <= -pi ? a + 2.0 * pi : a; };
  EulerExtraction e;
  const double sp = std::clamp(r(2, 1), -1.0, 1.0);
  const double cp = std::hypot(r(2, 0), r(2, 2));
  e.angles.pitch = std::atan2(sp, cp);
  if (cp < 1e-7) {
    e.degenerate = true;
    e.angles.roll = 0.0;
    e.angles.yaw = wrap(std::atan2(r(0, 2), r(0, 0)));
    return e;
  }
  e.angles.yaw = wrap(std::atan2(-r(2, 0), r(2, 2)));
  e.angles.roll = wrap(std::atan2(-r(0, 1), r(1, 1)));
  return e;
}

inline EulerExtraction euler_extract(const Vec3& theta_global) {
  return euler_from_matrix(axis_angle_to_matrix(theta_global));
}

}  // namespace fnevr::face3d
