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

// Procedural desk-scale head asset (subdivided icosahedron) and its on-disk
// bundle: a directory of FNVT tensors plus model.json.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fnevr/face3d.hpp"
#include "fnevr/fnvt.hpp"

namespace fnevr::face3d {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> faces;
};

// Unit icosphere; each subdivision level quadruples the face count
// (12, 42, 162, 642 ... vertices).
inline Mesh icosphere(int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Mesh m;
  const double base[12][3] = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                              {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                              {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (const auto& b : base) m.vertices.push_back(Vec3(b[0], b[1], b[2]).normalized());
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> mid;
    auto midpoint = [&](std::size_t a, std::size_t b) {
      const auto key = std::minmax(a, b);
      const auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      mid.emplace(key, m.vertices.size() - 1);
      return m.vertices.size() - 1;
    };
    std::vector<std::array<std::size_t, 3>> next;
    next.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const std::size_t a = midpoint(f[0], f[1]);
      const std::size_t b = midpoint(f[1], f[2]);
      const std::size_t c = midpoint(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    m.faces = std::move(next);
  }
  return m;
}

namespace detail {

inline double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace detail

// Head-shaped icosphere in model space: x right, y down, z away from the
// camera (the face looks towards -z). Joint 0 is the head root, joint 1 the
// jaw. Two shape bases (width, height) and two expression bases (jaw drop,
// cheek puff).
inline HeadModel make_desk_head(int subdivisions = 2) {
  const Mesh sphere = icosphere(subdivisions);
  const std::size_t n = sphere.vertices.size();
  HeadModel h;
  h.template_vertices = Tensor({n, 3});
  h.shape_basis = Tensor({n, 3, 2});
  h.expr_basis = Tensor({n, 3, 2});
  h.joint_regressor = Tensor({2, n});
  h.skin_weights = Tensor({2, n});
  h.faces = Tensor({sphere.faces.size(), 3});

  std::size_t jaw_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& s = sphere.vertices[i];
    Vec3 v(0.72 * s.x(), 0.9 * s.y(), 0.78 * s.z());
    // Nose ridge and brow towards the camera.
    const double front = std::max(0.0, -s.z());
    v.z() -= 0.18 * std::exp(-(s.x() * s.x()) / 0.02 - (s.y() * s.y()) / 0.08) * front;
    v.z() -= 0.05 * std::exp(-((s.y() + 0.35) * (s.y() + 0.35)) / 0.02) * front;
    for (std::size_t d = 0; d < 3; ++d) h.template_vertices.at(i, d) = v[d];

    h.shape_basis.at(i, 0, 0) = 0.15 * v.x();
    h.shape_basis.at(i, 1, 1) = 0.15 * v.y();

    const double lower = detail::smoothstep(0.25, 0.55, s.y());
    const double jaw = lower * detail::smoothstep(-0.1, 0.4, front);
    h.expr_basis.at(i, 1, 0) = 0.12 * jaw;
    h.expr_basis.at(i, 0, 1) =
        0.08 * s.x() * detail::smoothstep(0.2, 0.7, front) *
        std::exp(-((s.y() - 0.15) * (s.y() - 0.15)) / 0.05);

    h.skin_weights.at(1, i) = jaw;
    h.skin_weights.at(0, i) = 1.0 - jaw;
    if (s.y() > 0.2 && s.y() < 0.45) ++jaw_count;
  }
  for (std::size_t i = 0; i < n; ++i) {
    h.joint_regressor.at(0, i) = 1.0 / static_cast<double>(n);
    const double y = sphere.vertices[i].y();
    if (y > 0.2 && y < 0.45) h.joint_regressor.at(1, i) = 1.0 / static_cast<double>(jaw_count);
  }
  for (std::size_t f = 0; f < sphere.faces.size(); ++f) {
    for (std::size_t d = 0; d < 3; ++d) {
      h.faces.at(f, d) = static_cast<double>(sphere.faces[f][d]);
    }
  }
  h.validate();
  return h;
}

inline void save_head_bundle(const HeadModel& h, const std::filesystem::path& dir) {
  h.validate();
  std::filesystem::create_directories(dir);
  fnvt::save(h.template_vertices, dir / "template.fnvt");
  fnvt::save(h.shape_basis, dir / "shape_basis.fnvt");
  fnvt::save(h.expr_basis, dir / "expr_basis.fnvt");
  fnvt::save(h.skin_weights, dir / "skin_weights.fnvt");
  fnvt::save(h.joint_regressor, dir / "joints.fnvt");
  fnvt::save(h.faces, dir / "faces.fnvt");
  const nlohmann::json meta = {{"N", h.vertices()},
                               {"K_j", h.joints()},
                               {"n_shape", h.shape_count()},
                               {"n_expr", h.expr_count()},
                               {"n_faces", h.face_count()},
                               {"joints", "regressor"}};
  std::ofstream os(dir / "model.json");
  if (!os) raise<IoError>("cannot write ", (dir / "model.json").string());
  os << meta.dump(2) << '\n';
}

inline HeadModel load_head_bundle(const std::filesystem::path& dir) {
  std::ifstream is(dir / "model.json");
  if (!is) raise<IoError>("missing ", (dir / "model.json").string());
  nlohmann::json meta;
  try {
    is >> meta;
  } catch (const nlohmann::json::exception& e) {
    raise<IoError>("model.json: ", e.what());
  }
  HeadModel h;
  h.template_vertices = fnvt::load(dir / "template.fnvt");
  h.shape_basis = fnvt::load(dir / "shape_basis.fnvt");
  h.expr_basis = fnvt::load(dir / "expr_basis.fnvt");
  h.skin_weights = fnvt::load(dir / "skin_weights.fnvt");
  h.joint_regressor = fnvt::load(dir / "joints.fnvt");
  h.faces = fnvt::load(dir / "faces.fnvt");
  h.validate();
  try {
    if (meta.at("N").get<std::size_t>() != h.vertices() ||
        meta.at("K_j").get<std::size_t>() != h.joints() ||
        meta.at("n_shape").get<std::size_t>() != h.shape_count() ||
        meta.at("n_expr").get<std::size_t>() != h.expr_count()) {
      raise<IoError>("model.json metadata disagrees with tensor extents");
    }
  } catch (const nlohmann::json::exception& e) {
    raise<IoError>("model.json: ", e.what());
  }
  return h;
}

}  // namespace fnevr::face3d
