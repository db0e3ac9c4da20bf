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

// Synthetic paired scenes: a procedural head rendered into feature channels
// for a source frame and a rigidly re-posed driving frame, with keypoints
// taken from projected landmark vertices and masks derived from distances to
// the driving keypoints.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "fnevr/face3d.hpp"
#include "fnevr/head_asset.hpp"
#include "fnevr/motion2d.hpp"
#include "fnevr/numgrid.hpp"

namespace fnevr::harness {

using motion2d::KeypointSet;
using motion2d::Mat2;
using motion2d::Vec2;

struct SceneConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 8;
  std::size_t keypoints = motion2d::kDefaultKeypoints;
  std::size_t depth = 16;
  std::size_t n_down = 64;
  double camera_scale = 0.8;
  // Driving rotation is drawn per Euler angle from [-max, max] radians.
  double max_driving_angle = 10.0 * std::numbers::pi / 180.0;
  int supersample = 3;
};

struct SyntheticScene {
  SceneConfig config;
  std::uint64_t seed = 0;
  face3d::HeadModel head;
  face3d::FlameParams source_params;
  face3d::FlameParams driving_params;
  EulerAngles driving_rotation;                // relative to the source pose
  face3d::VertexSet source_vertices;           // camera space, depth in [0, 1]
  face3d::VertexSet driving_vertices;
  std::vector<std::size_t> landmarks;          // vertex indices behind the keypoints
  KeypointSet source_keypoints;
  KeypointSet driving_keypoints;
  Tensor source_feature;                       // F_S, H x W x C
  Tensor driving_feature;                      // same rendering of the driving frame
  Tensor driving_image;                        // H x W x 3 target
  Tensor masks;                                // H x W x (K+1)
  Tensor occlusion;                            // H x W x 1
};

inline face3d::DepthRange scene_depth_range() { return {-1.0, 1.0}; }

// Keypoint landmarks: farthest-point spread over the camera-facing part of
// the template, starting from the nose tip.
inline std::vector<std::size_t> select_landmarks(const face3d::HeadModel& head, std::size_t k) {
  const Tensor& t = head.template_vertices;
  std::vector<std::size_t> front;
  std::size_t nose = 0;
  double zmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < head.vertices(); ++i) {
    if (t.at(i, 2) < -0.35) front.push_back(i);
    if (t.at(i, 2) < zmin) {
      zmin = t.at(i, 2);
      nose = i;
    }
  }
  if (front.size() < k) raise<DomainError>("select_landmarks: only ", front.size(),
                                           " front vertices for K = ", k);
  face3d::VertexSet sub = face3d::VertexSet::with_size(front.size());
  std::size_t start = 0;
  for (std::size_t i = 0; i < front.size(); ++i) {
    sub.set(i, face3d::detail::row3(t, front[i]));
    if (front[i] == nose) start = i;
  }
  const auto order = face3d::farthest_point_order(sub, k, start);
  std::vector<std::size_t> out;
  for (std::size_t i : order) out.push_back(front[i]);
  return out;
}

// Image-plane keypoints of landmark vertices; every Jacobian is the upper-left
// 2x2 block of the head's global rotation.
inline KeypointSet project_keypoints(const face3d::VertexSet& cam_vertices,
                                     const std::vector<std::size_t>& landmarks,
                                     const Mat3& global_rotation) {
  KeypointSet kp;
  const Mat2 j = global_rotation.topLeftCorner<2, 2>();
  for (std::size_t idx : landmarks) {
    kp.points.emplace_back(cam_vertices.xyz.at(idx, 0), cam_vertices.xyz.at(idx, 1));
    kp.jacobians.push_back(j);
  }
  return kp;
}

namespace impl {

inline Vec3 albedo(const Vec3& canon) {
  Vec3 c(0.86, 0.64, 0.52);
  const double front = std::max(0.0, -canon.z());
  // Hair cap.
  const double hair = face3d::detail::smoothstep(-0.35, -0.6, canon.y());
  c = (1 - hair) * c + hair * Vec3(0.25, 0.15, 0.08);
  // Eyes.
  for (double ex : {-0.26, 0.26}) {
    const double d2 = (canon.x() - ex) * (canon.x() - ex) + (canon.y() + 0.1) * (canon.y() + 0.1);
    const double eye = std::exp(-d2 / 0.006) * front;
    c = (1 - eye) * c + eye * Vec3(0.1, 0.12, 0.2);
  }
  // Mouth.
  const double mouth = std::exp(-(canon.x() * canon.x()) / 0.05 -
                                (canon.y() - 0.42) * (canon.y() - 0.42) / 0.004) * front;
  c = (1 - mouth) * c + mouth * Vec3(0.7, 0.15, 0.18);
  return c;
}

inline Vec3 background(double x, double y) {
  return {0.25 + 0.1 * x, 0.3 + 0.05 * y, 0.38 - 0.08 * x};
}

// Deterministic per-channel texture directions for feature channels >= 4.
inline Vec3 texture_dir(std::size_t ch) {
  const double a = 2.399963229728653 * static_cast<double>(ch);  // golden angle
  const double z = 1.0 - 2.0 * std::fmod(0.61803398875 * static_cast<double>(ch), 1.0);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(a), r * std::sin(a), z};
}

struct Raster {
  Tensor feature;   // H x W x C
  Tensor coverage;  // H x W x 1
};

// z-buffered orthographic rasterization with supersampling; shading uses
// interpolated vertex normals and a fixed directional light.
inline Raster render_head(const face3d::HeadModel& head, const face3d::VertexSet& cam,
                          std::size_t h, std::size_t w, std::size_t channels, int ss) {
  if (channels < 4) raise<ShapeError>("render_head: need at least 4 feature channels");
  const std::size_t n = head.vertices(), nf = head.face_count();
  std::vector<Vec3> normals(n, Vec3::Zero());
  Vec3 centroid = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) centroid += cam.vertex(i);
  centroid /= static_cast<double>(n);
  std::vector<std::array<std::size_t, 3>> faces(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    for (std::size_t d = 0; d < 3; ++d) faces[f][d] = static_cast<std::size_t>(head.faces.at(f, d));
    const Vec3 a = cam.vertex(faces[f][0]), b = cam.vertex(faces[f][1]), c = cam.vertex(faces[f][2]);
    const Vec3 fn = (b - a).cross(c - a);
    for (std::size_t i : faces[f]) normals[i] += fn;
  }
  for (std::size_t i = 0; i < n; ++i) {
    normals[i].normalize();
    if (normals[i].dot(cam.vertex(i) - centroid) < 0.0) normals[i] = -normals[i];
  }
  const Vec3 light = Vec3(-0.4, -0.6, -1.0).normalized();

  const std::size_t sh = h * static_cast<std::size_t>(ss), sw = w * static_cast<std::size_t>(ss);
  std::vector<double> zbuf(sh * sw, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> tri(sh * sw, nf);
  std::vector<Vec3> bary(sh * sw);
  auto to_px = [&](double x, std::size_t len) { return (x + 1.0) * 0.5 * static_cast<double>(len - 1); };
  const double step = 1.0 / ss;
  for (std::size_t f = 0; f < nf; ++f) {
    const auto& fc = faces[f];
    const Vec2 p0(to_px(cam.xyz.at(fc[0], 0), w), to_px(cam.xyz.at(fc[0], 1), h));
    const Vec2 p1(to_px(cam.xyz.at(fc[1], 0), w), to_px(cam.xyz.at(fc[1], 1), h));
    const Vec2 p2(to_px(cam.xyz.at(fc[2], 0), w), to_px(cam.xyz.at(fc[2], 1), h));
    const double area = (p1 - p0).x() * (p2 - p0).y() - (p1 - p0).y() * (p2 - p0).x();
    if (std::abs(area) < 1e-14) continue;
    const double minx = std::min({p0.x(), p1.x(), p2.x()}), maxx = std::max({p0.x(), p1.x(), p2.x()});
    const double miny = std::min({p0.y(), p1.y(), p2.y()}), maxy = std::max({p0.y(), p1.y(), p2.y()});
    // Subsample (i, j) sits at pixel coordinate (j + 0.5) * step - 0.5.
    auto lo = [&](double v) { return static_cast<long>(std::max(0.0, std::ceil((v + 0.5) / step - 0.5))); };
    auto hi = [&](double v, std::size_t len) {
      return std::min(static_cast<long>(len) - 1, static_cast<long>(std::floor((v + 0.5) / step - 0.5)));
    };
    for (long si = lo(miny); si <= hi(maxy, sh); ++si) {
      const double py = (static_cast<double>(si) + 0.5) * step - 0.5;
      for (long sj = lo(minx); sj <= hi(maxx, sw); ++sj) {
        const double px = (static_cast<double>(sj) + 0.5) * step - 0.5;
        const Vec2 q(px, py);
        const double w0 = ((p1 - q).x() * (p2 - q).y() - (p1 - q).y() * (p2 - q).x()) / area;
        const double w1 = ((p2 - q).x() * (p0 - q).y() - (p2 - q).y() * (p0 - q).x()) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12) continue;
        const double z = w0 * cam.xyz.at(fc[0], 2) + w1 * cam.xyz.at(fc[1], 2) + w2 * cam.xyz.at(fc[2], 2);
        const std::size_t idx = static_cast<std::size_t>(si) * sw + static_cast<std::size_t>(sj);
        if (z < zbuf[idx]) {
          zbuf[idx] = z;
          tri[idx] = f;
          bary[idx] = Vec3(w0, w1, w2);
        }
      }
    }
  }

  Raster out{Tensor({h, w, channels}), Tensor({h, w, 1})};
  const double inv = 1.0 / static_cast<double>(ss * ss);
  std::vector<double> acc(channels);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      std::fill(acc.begin(), acc.end(), 0.0);
      double cov = 0.0;
      for (int i = 0; i < ss; ++i) {
        for (int j = 0; j < ss; ++j) {
          const std::size_t si = r * static_cast<std::size_t>(ss) + static_cast<std::size_t>(i);
          const std::size_t sj = c * static_cast<std::size_t>(ss) + static_cast<std::size_t>(j);
          const std::size_t idx = si * sw + sj;
          if (tri[idx] == nf) {
            const double x = -1.0 + 2.0 * ((static_cast<double>(sj) + 0.5) * step - 0.5) / static_cast<double>(w - 1);
            const double y = -1.0 + 2.0 * ((static_cast<double>(si) + 0.5) * step - 0.5) / static_cast<double>(h - 1);
            const Vec3 bg = background(x, y);
            for (std::size_t k = 0; k < 3; ++k) acc[k] += bg[k];
            continue;
          }
          const auto& fc = faces[tri[idx]];
          const Vec3& b = bary[idx];
          Vec3 canon = Vec3::Zero(), nrm = Vec3::Zero();
          for (std::size_t d = 0; d < 3; ++d) {
            canon += b[d] * face3d::detail::row3(head.template_vertices, fc[d]);
            nrm += b[d] * normals[fc[d]];
          }
          nrm.normalize();
          const Vec3 rgb = albedo(canon) * (0.35 + 0.65 * std::max(0.0, nrm.dot(light)));
          for (std::size_t k = 0; k < 3; ++k) acc[k] += rgb[k];
          acc[3] += 1.0;
          for (std::size_t k = 4; k < channels; ++k) {
            const double freq = 2.0 + static_cast<double>(k % 3);
            acc[k] += 0.5 + 0.5 * std::sin(std::numbers::pi * freq * canon.dot(texture_dir(k)));
          }
          cov += 1.0;
        }
      }
      for (std::size_t k = 0; k < channels; ++k) out.feature.at(r, c, k) = acc[k] * inv;
      out.coverage.at(r, c, 0) = cov * inv;
    }
  }
  return out;
}

}  // namespace impl

// Soft keypoint masks: keypoint logits fall off with squared distance to the
// driving keypoint; the background logit follows head coverage.
inline Tensor keypoint_masks(const KeypointSet& drv, const Tensor& coverage, const CoordGrid& grid) {
  const std::size_t h = grid.height(), w = grid.width(), k = drv.size();
  Tensor logits({h, w, k + 1});
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      logits.at(r, c, 0) = 8.0 * (0.5 - coverage.at(r, c, 0));
      for (std::size_t i = 0; i < k; ++i) {
        const double dx = grid.x(r, c) - drv.points[i].x();
        const double dy = grid.y(r, c) - drv.points[i].y();
        logits.at(r, c, i + 1) = -(dx * dx + dy * dy) / (2.0 * 0.03);
      }
    }
  }
  return softmax_channel(logits, 2);
}

// Renders the source and driving frames. `driving_override` fixes the
// driving rotation instead of drawing it from the seed.
inline SyntheticScene gen_scene(std::uint64_t seed, const SceneConfig& cfg,
                                const EulerAngles* driving_override = nullptr) {
  if (cfg.height < 8 || cfg.width < 8 || cfg.channels < 8 || cfg.depth < 8) {
    raise<DomainError>("gen_scene: H, W, C, D must all be >= 8 (got ", cfg.height, ", ",
                       cfg.width, ", ", cfg.channels, ", ", cfg.depth, ")");
  }
  if (cfg.keypoints < 1) raise<DomainError>("gen_scene: K must be >= 1");
  SyntheticScene s;
  s.config = cfg;
  s.seed = seed;
  s.head = face3d::make_desk_head();
  if (cfg.n_down < 1 || cfg.n_down > s.head.vertices()) {
    raise<DomainError>("gen_scene: n_down = ", cfg.n_down, " outside [1, ", s.head.vertices(), "]");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  face3d::FlameParams src = face3d::FlameParams::zeros(s.head);
  for (double& b : src.shape) b = 0.5 * n01(rng);
  for (double& e : src.expression) e = 0.5 * n01(rng);
  const EulerAngles src_pose{0.08 * unit(rng), 0.08 * unit(rng), 0.05 * unit(rng)};
  src.set_rotation(0, matrix_to_axis_angle(euler_to_matrix(src_pose)));
  src.set_rotation(2, Vec3(0.08 * std::abs(n01(rng)), 0.0, 0.0));  // jaw
  src.camera = {cfg.camera_scale, 0.03 * unit(rng), 0.03 * unit(rng)};

  EulerAngles rel{cfg.max_driving_angle * unit(rng), cfg.max_driving_angle * unit(rng),
                  cfg.max_driving_angle * unit(rng)};
  if (driving_override) rel = *driving_override;
  s.driving_rotation = rel;
  const Mat3 r_src = euler_to_matrix(src_pose);
  const Mat3 r_drv = euler_to_matrix(rel) * r_src;
  face3d::FlameParams drv = src;  // shape coefficients are shared by construction
  drv.set_rotation(0, matrix_to_axis_angle(r_drv));

  s.source_params = src;
  s.driving_params = drv;
  s.source_vertices = face3d::camera_apply(face3d::blend_skinning(s.head, src), src.camera,
                                           scene_depth_range());
  s.driving_vertices = face3d::camera_apply(face3d::blend_skinning(s.head, drv), drv.camera,
                                            scene_depth_range());
  s.landmarks = select_landmarks(s.head, cfg.keypoints);
  s.source_keypoints = project_keypoints(s.source_vertices, s.landmarks, r_src);
  s.driving_keypoints = project_keypoints(s.driving_vertices, s.landmarks, r_drv);

  auto rs = impl::render_head(s.head, s.source_vertices, cfg.height, cfg.width, cfg.channels,
                              cfg.supersample);
  auto rd = impl::render_head(s.head, s.driving_vertices, cfg.height, cfg.width, cfg.channels,
                              cfg.supersample);
  s.source_feature = std::move(rs.feature);
  s.driving_feature = std::move(rd.feature);
  s.driving_image = Tensor({cfg.height, cfg.width, 3});
  for (std::size_t p = 0; p < cfg.height * cfg.width; ++p)
    for (std::size_t k = 0; k < 3; ++k) s.driving_image[p * 3 + k] = s.driving_feature[p * cfg.channels + k];

  const CoordGrid grid = CoordGrid::identity(cfg.height, cfg.width);
  s.masks = keypoint_masks(s.driving_keypoints, rd.coverage, grid);
  const Tensor sparse = motion2d::sparse_motion(s.source_keypoints, s.driving_keypoints, grid);
  const Tensor dense = motion2d::dense_motion(sparse, motion2d::MaskStack(s.masks), grid);
  const Tensor warped_cov = grid_sample_2d(rs.coverage, CoordGrid(dense));
  s.occlusion = Tensor({cfg.height, cfg.width, 1});
  for (std::size_t p = 0; p < cfg.height * cfg.width; ++p) {
    s.occlusion[p] = std::clamp(1.0 - 0.5 * std::abs(rd.coverage[p] - warped_cov[p]), 0.0, 1.0);
  }
  return s;
}

// Dense motion and warped source features implied by the scene inputs.
struct WarpedScene {
  Tensor sparse;
  Tensor dense;
  Tensor warped;
};

inline WarpedScene warp_scene(const SyntheticScene& s) {
  const CoordGrid grid = CoordGrid::identity(s.config.height, s.config.width);
  WarpedScene w;
  w.sparse = motion2d::sparse_motion(s.source_keypoints, s.driving_keypoints, grid);
  w.dense = motion2d::dense_motion(w.sparse, motion2d::MaskStack(s.masks), grid);
  w.warped = motion2d::warp_feature(s.source_feature, w.dense, s.occlusion);
  return w;
}

}  // namespace fnevr::harness
