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

// First-order motion: per-keypoint affine fields, mask-weighted aggregation
// into a dense backward motion field, and occlusion-masked warping.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fnevr/numgrid.hpp"

namespace fnevr::motion2d {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline constexpr std::size_t kDefaultKeypoints = 10;
inline constexpr double kMinJacobianDet = 1e-6;

// K keypoints in normalized coordinates, each with a 2x2 local Jacobian.
struct KeypointSet {
  std::vector<Vec2> points;
  std::vector<Mat2> jacobians;

  std::size_t size() const { return points.size(); }

  static KeypointSet identity_jacobians(std::vector<Vec2> pts) {
    KeypointSet k;
    k.jacobians.assign(pts.size(), Mat2::Identity());
    k.points = std::move(pts);
    return k;
  }

  // Checks K >= 1, matching lengths, finiteness and, when asked, that every
  // Jacobian is invertible.
  void validate(bool require_invertible = true) const {
    if (points.empty()) raise<ShapeError>("KeypointSet: K must be >= 1");
    if (points.size() != jacobians.size()) {
      raise<ShapeError>("KeypointSet: ", points.size(), " points but ",
                        jacobians.size(), " jacobians");
    }
    for (std::size_t k = 0; k < points.size(); ++k) {
      if (!points[k].allFinite() || !jacobians[k].allFinite()) {
        raise<DomainError>("KeypointSet: non-finite entry at keypoint ", k);
      }
      const double det = jacobians[k].determinant();
      if (require_invertible && std::abs(det) < kMinJacobianDet) {
        raise<DomainError>("KeypointSet: jacobian ", k,
                           " is singular (det = ", det, ")");
      }
    }
  }
};

inline nlohmann::json to_json(const KeypointSet& kp) {
  nlohmann::json pts = nlohmann::json::array();
  nlohmann::json jac = nlohmann::json::array();
  for (std::size_t k = 0; k < kp.size(); ++k) {
    pts.push_back({kp.points[k].x(), kp.points[k].y()});
    const Mat2& j = kp.jacobians[k];
    jac.push_back({{j(0, 0), j(0, 1)}, {j(1, 0), j(1, 1)}});
  }
  return {{"points", pts}, {"jacobians", jac}};
}

inline KeypointSet keypoints_from_json(const nlohmann::json& j) {
  KeypointSet kp;
  try {
    for (const auto& p : j.at("points")) {
      if (p.size() != 2) raise<ShapeError>("keypoint must have 2 coordinates");
      kp.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    }
    for (const auto& m : j.at("jacobians")) {
      if (m.size() != 2 || m.at(0).size() != 2 || m.at(1).size() != 2) {
        raise<ShapeError>("jacobian must be 2x2");
      }
      Mat2 a;
      a << m[0][0].get<double>(), m[0][1].get<double>(), m[1][0].get<double>(),
          m[1][1].get<double>();
      kp.jacobians.push_back(a);
    }
  } catch (const nlohmann::json::exception& e) {
    raise<IoError>("malformed keypoint JSON: ", e.what());
  }
  kp.validate(false);
  return kp;
}

inline void save_keypoints(const KeypointSet& kp, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) raise<IoError>("cannot write ", path.string());
  os << to_json(kp).dump(2) << '\n';
}

inline KeypointSet load_keypoints(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) raise<IoError>("cannot open ", path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    raise<IoError>(path.string(), ": ", e.what());
  }
  return keypoints_from_json(j);
}

// H x W x (K+1) convex weights: channel 0 is the background mask M_0.
class MaskStack {
 public:
  explicit MaskStack(Tensor masks) : masks_(std::move(masks)) {
    require_rank(masks_, 3, "MaskStack");
    if (masks_.dim(2) < 2) {
      raise<ShapeError>("MaskStack needs background + at least one keypoint mask");
    }
    const std::size_t n = masks_.dim(2);
    for (std::size_t p = 0; p < masks_.dim(0) * masks_.dim(1); ++p) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double m = masks_[p * n + k];
        if (!(m >= 0.0)) {
          raise<DomainError>("MaskStack: negative or NaN weight at pixel ", p,
                             " mask ", k);
        }
        s += m;
      }
      if (std::abs(s - 1.0) > 1e-9) {
        raise<DomainError>("MaskStack: weights at pixel ", p, " sum to ", s);
      }
    }
  }

  std::size_t height() const { return masks_.dim(0); }
  std::size_t width() const { return masks_.dim(1); }
  std::size_t keypoints() const { return masks_.dim(2) - 1; }
  const Tensor& tensor() const noexcept { return masks_; }

 private:
  Tensor masks_;
};

struct DenseMotion {
  Tensor field;      // H x W x 2 source coordinates
  Tensor occlusion;  // H x W x 1 in [0, 1]

  void validate() const {
    require_rank(field, 3, "DenseMotion field");
    if (field.dim(2) != 2) raise<ShapeError>("DenseMotion field must be HxWx2");
    if (occlusion.dims() != Dims{field.dim(0), field.dim(1), 1}) {
      raise<ShapeError>("occlusion ", detail::dims_str(occlusion.dims()),
                        " does not match field ", detail::dims_str(field.dims()));
    }
    require_finite(field, "DenseMotion field");
    for (double o : occlusion.values()) {
      if (!(o >= 0.0 && o <= 1.0)) {
        raise<DomainError>("occlusion entry ", o, " outside [0,1]");
      }
    }
  }
};

// T_k(z) = p_S,k + J_S,k J_D,k^{-1} (z - p_D,k) for every pixel and keypoint.
inline Tensor sparse_motion(const KeypointSet& src, const KeypointSet& drv,
                            const CoordGrid& grid) {
  src.validate(false);
  drv.validate(false);
  if (src.size() != drv.size()) {
    raise<ShapeError>("sparse_motion: source has ", src.size(),
                      " keypoints, driving has ", drv.size());
  }
  const std::size_t kp = src.size();
  std::vector<Mat2> affine(kp);
  for (std::size_t k = 0; k < kp; ++k) {
    const double det = drv.jacobians[k].determinant();
    if (std::abs(det) < kMinJacobianDet) {
      raise<DomainError>("sparse_motion: driving jacobian ", k,
                         " is singular (det = ", det, ")");
    }
    affine[k] = src.jacobians[k] * drv.jacobians[k].inverse();
  }
  const std::size_t h = grid.height(), w = grid.width();
  Tensor out({h, w, kp, 2});
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const Vec2 z(grid.x(r, c), grid.y(r, c));
      for (std::size_t k = 0; k < kp; ++k) {
        const Vec2 t = src.points[k] + affine[k] * (z - drv.points[k]);
        out.at(r, c, k, 0) = t.x();
        out.at(r, c, k, 1) = t.y();
      }
    }
  }
  return out;
}

// M_0 z + sum_k M_k T_k(z).
inline Tensor dense_motion(const Tensor& sparse, const MaskStack& masks,
                           const CoordGrid& grid) {
  require_rank(sparse, 4, "dense_motion sparse");
  const std::size_t h = grid.height(), w = grid.width(), kp = sparse.dim(2);
  if (sparse.dims() != Dims{h, w, kp, 2} || masks.height() != h ||
      masks.width() != w || masks.keypoints() != kp) {
    raise<ShapeError>("dense_motion: sparse ", detail::dims_str(sparse.dims()),
                      ", masks ", detail::dims_str(masks.tensor().dims()),
                      ", grid ", h, "x", w, " disagree");
  }
  const Tensor& m = masks.tensor();
  Tensor out({h, w, 2});
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double m0 = m.at(r, c, 0);
      double x = m0 * grid.x(r, c);
      double y = m0 * grid.y(r, c);
      for (std::size_t k = 0; k < kp; ++k) {
        const double mk = m.at(r, c, k + 1);
        x += mk * sparse.at(r, c, k, 0);
        y += mk * sparse.at(r, c, k, 1);
      }
      out.at(r, c, 0) = x;
      out.at(r, c, 1) = y;
    }
  }
  return out;
}

inline void check_occlusion(const Tensor& occ, std::size_t h, std::size_t w) {
  if (occ.dims() != Dims{h, w, 1}) {
    raise<ShapeError>("occlusion map ", detail::dims_str(occ.dims()),
                      " does not match motion field ", h, "x", w);
  }
  for (double o : occ.values()) {
    if (!(o >= 0.0 && o <= 1.0)) {
      raise<DomainError>("occlusion entry ", o, " outside [0,1]");
    }
  }
}

// O (Hadamard) grid_sample(F_S, dense).
inline Tensor warp_feature(const Tensor& source, const Tensor& dense,
                           const Tensor& occlusion) {
  require_rank(source, 3, "warp_feature source");
  const CoordGrid grid(dense);
  check_occlusion(occlusion, grid.height(), grid.width());
  Tensor out = grid_sample_2d(source, grid);
  const std::size_t ch = out.dim(2);
  for (std::size_t p = 0; p < grid.height() * grid.width(); ++p) {
    const double o = occlusion[p];
    for (std::size_t k = 0; k < ch; ++k) out[p * ch + k] *= o;
  }
  return out;
}

inline Tensor warp_feature(const Tensor& source, const DenseMotion& motion) {
  return warp_feature(source, motion.field, motion.occlusion);
}

struct WarpGrads {
  Tensor source;
  Tensor field;
  Tensor occlusion;
};

inline WarpGrads warp_feature_backward(const Tensor& source, const Tensor& dense,
                                       const Tensor& occlusion,
                                       const Tensor& grad_out) {
  const CoordGrid grid(dense);
  check_occlusion(occlusion, grid.height(), grid.width());
  const Tensor sampled = grid_sample_2d(source, grid);
  Tensor::require_same_shape(sampled, grad_out, "warp_feature_backward");
  const std::size_t ch = sampled.dim(2);
  Tensor g_sampled = grad_out;
  Tensor g_occ = Tensor::zeros_like(occlusion);
  for (std::size_t p = 0; p < grid.height() * grid.width(); ++p) {
    double acc = 0.0;
    for (std::size_t k = 0; k < ch; ++k) {
      acc += grad_out[p * ch + k] * sampled[p * ch + k];
      g_sampled[p * ch + k] *= occlusion[p];
    }
    g_occ[p] = acc;
  }
  auto gs = grid_sample_2d_backward(source, grid, g_sampled);
  return {std::move(gs.feature), std::move(gs.coords), std::move(g_occ)};
}

}  // namespace fnevr::motion2d
