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

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "fnevr/error.hpp"

namespace fnevr {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

// Head rotation in radians. Composed as R = Rz(roll) * Rx(pitch) * Ry(yaw).
struct EulerAngles {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

inline Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

inline Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

inline Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

inline Mat3 euler_to_matrix(const EulerAngles& a) {
  if (!std::isfinite(a.yaw) || !std::isfinite(a.pitch) ||
      !std::isfinite(a.roll)) {
    raise<DomainError>("euler_to_matrix: non-finite angle");
  }
  return rot_z(a.roll) * rot_x(a.pitch) * rot_y(a.yaw);
}

inline Mat3 skew(const Vec3& w) {
  Mat3 k;
  k << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return k;
}

// Rodrigues formula for an axis-angle vector (direction = axis, norm = angle).
inline Mat3 axis_angle_to_matrix(const Vec3& rotvec) {
  if (!rotvec.allFinite()) {
    raise<DomainError>("axis_angle_to_matrix: non-finite rotation vector");
  }
  const double theta = rotvec.norm();
  const Mat3 k = skew(rotvec);
  double a, b;  // sin(t)/t, (1 - cos(t))/t^2
  if (theta < 1e-6) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Mat3::Identity() + a * k + b * k * k;
}

// Inverse of axis_angle_to_matrix with angle in [0, pi].
inline Vec3 matrix_to_axis_angle(const Mat3& r) {
  const Vec3 w(0.5 * (r(2, 1) - r(1, 2)), 0.5 * (r(0, 2) - r(2, 0)),
               0.5 * (r(1, 0) - r(0, 1)));
  const double s = w.norm();               // sin(theta)
  const double c = 0.5 * (r.trace() - 1.0);  // cos(theta)
  const double theta = std::atan2(s, c);
  if (s > 1e-6) return w * (theta / s);
  if (c > 0.0) return w * (1.0 + s * s / 6.0);  // theta ~ 0
  // theta ~ pi: R ~ 2 a a^T - I, read the axis off the largest diagonal.
  const Mat3 b = 0.5 * (r + Mat3::Identity());
  int k = 0;
  b.diagonal().maxCoeff(&k);
  Vec3 axis = b.col(k) / std::sqrt(std::max(b(k, k), 1e-300));
  axis.normalize();
  if (axis.dot(w) < 0.0) axis = -axis;
  return axis * theta;
}

}  // namespace fnevr
