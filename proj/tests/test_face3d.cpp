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


#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fnevr/face3d.hpp"
#include "fnevr/fnvt.hpp"
#include "fnevr/head_asset.hpp"

namespace fnevr::face3d {
namespace {

constexpr double kPi = std::numbers::pi;

Vec3 random_rotvec(std::mt19937_64& rng, double max_angle = kPi) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, max_angle);
  Vec3 axis(n01(rng), n01(rng), n01(rng));
  return axis.normalized() * u(rng);
}

HeadModel root_only(HeadModel h) {
  for (std::size_t i = 0; i < h.vertices(); ++i) {
    h.skin_weights.at(0, i) = 1.0;
    for (std::size_t k = 1; k < h.joints(); ++k) h.skin_weights.at(k, i) = 0.0;
  }
  return h;
}

TEST(DeskHead, DefaultAssetShape) {
  const HeadModel h = make_desk_head();
  EXPECT_EQ(h.vertices(), 162u);
  EXPECT_EQ(h.joints(), 2u);
  EXPECT_EQ(h.shape_count(), 2u);
  EXPECT_EQ(h.expr_count(), 2u);
  EXPECT_NO_THROW(h.validate());
}

TEST(HeadModel, ValidationRejectsBadSkinWeights) {
  HeadModel h = make_desk_head();
  h.skin_weights.at(0, 3) += 0.1;
  EXPECT_THROW(h.validate(), DomainError);
  h = make_desk_head();
  h.skin_weights.at(0, 3) = -0.5;
  h.skin_weights.at(1, 3) = 1.5;
  EXPECT_THROW(h.validate(), DomainError);
}

TEST(BundleIo, RoundTripPreservesModel) {
  const HeadModel h = make_desk_head();
  const auto dir = std::filesystem::temp_directory_path() / "fnevr_head_bundle";
  std::filesystem::remove_all(dir);
  save_head_bundle(h, dir);
  for (const char* f : {"template.fnvt", "shape_basis.fnvt", "expr_basis.fnvt",
                        "skin_weights.fnvt", "joints.fnvt", "model.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const HeadModel back = load_head_bundle(dir);
  EXPECT_EQ(back.template_vertices, h.template_vertices);
  EXPECT_EQ(back.shape_basis, h.shape_basis);
  EXPECT_EQ(back.expr_basis, h.expr_basis);
  EXPECT_EQ(back.skin_weights, h.skin_weights);
  EXPECT_EQ(back.joint_regressor, h.joint_regressor);
  std::filesystem::remove_all(dir);
}

TEST(BlendSkinning, ZeroParamsGiveTemplateExactly) {
  const HeadModel h = make_desk_head();
  EXPECT_EQ(blend_skinning(h, FlameParams::zeros(h)).xyz, h.template_vertices);
}

TEST(BlendSkinning, RootOnlyWeightsRotateRigidly) {
  const HeadModel h = root_only(make_desk_head());
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    FlameParams p = FlameParams::zeros(h);
    const Vec3 w = random_rotvec(rng);
    p.set_rotation(0, w);
    const Mat3 r = axis_angle_to_matrix(w);
    const VertexSet v = blend_skinning(h, p);
    for (std::size_t i = 0; i < h.vertices(); ++i) {
      const Vec3 expect = r * detail::row3(h.template_vertices, i);
      EXPECT_LE((v.vertex(i) - expect).norm(), 1e-12);
    }
  }
}

TEST(BlendSkinning, SingleShapeCoefficientAddsBasis) {
  const HeadModel h = make_desk_head();
  FlameParams p = FlameParams::zeros(h);
  p.shape[0] = 1.0;
  const VertexSet v = blend_skinning(h, p);
  for (std::size_t i = 0; i < h.vertices(); ++i)
    for (std::size_t d = 0; d < 3; ++d)
      EXPECT_EQ(v.xyz.at(i, d), h.template_vertices.at(i, d) + h.shape_basis.at(i, d, 0));
}

TEST(BlendSkinning, SingleJointRotationPreservesPairwiseDistances) {
  const HeadModel h = root_only(make_desk_head());
  std::mt19937_64 rng(2);
  FlameParams p = FlameParams::zeros(h);
  p.shape = {0.4, -0.3};
  p.expression = {0.2, 0.5};
  const VertexSet rest = blend_skinning(h, p);
  for (int trial = 0; trial < 20; ++trial) {
    p.set_rotation(1, random_rotvec(rng));  // the root joint, about its rest location
    p.set_rotation(0, random_rotvec(rng));
    const VertexSet v = blend_skinning(h, p);
    for (std::size_t i = 0; i < h.vertices(); i += 7)
      for (std::size_t j = i + 1; j < h.vertices(); j += 5)
        EXPECT_NEAR((v.vertex(i) - v.vertex(j)).norm(), (rest.vertex(i) - rest.vertex(j)).norm(),
                    1e-9);
  }
}

TEST(BlendSkinning, LinearInShapeAndExpression) {
  const HeadModel h = make_desk_head();
  std::mt19937_64 rng(3);
  FlameParams base = FlameParams::zeros(h);
  base.set_rotation(0, random_rotvec(rng, 0.5));
  base.set_rotation(2, random_rotvec(rng, 0.3));
  auto at = [&](std::vector<double> b, std::vector<double> e) {
    FlameParams p = base;
    p.shape = b;
    p.expression = e;
    return blend_skinning(h, p).xyz;
  };
  // The jaw pivot J(beta) moves with beta, so linearity in beta holds with the
  // jaw at rest; expression is linear at any pose.
  const Tensor e0 = at({0, 0}, {0, 0}), e1 = at({0, 0}, {1, 0}), e2 = at({0, 0}, {0.3, -0.7});
  EXPECT_LE(max_abs_diff(e2 - e0, 0.3 * (e1 - e0) + -0.7 * (at({0, 0}, {0, 1}) - e0)), 1e-12);

  base.set_rotation(2, Vec3::Zero());
  const Tensor s0 = at({0, 0}, {0, 0}), s1 = at({1, 0}, {0, 0}), s2 = at({0, 1}, {0, 0});
  EXPECT_LE(max_abs_diff(at({0.6, -1.2}, {0, 0}) - s0, 0.6 * (s1 - s0) + -1.2 * (s2 - s0)), 1e-12);
}

TEST(BlendSkinning, JawRotationMovesOnlyJawWeightedVertices) {
  const HeadModel h = make_desk_head();
  FlameParams p = FlameParams::zeros(h);
  p.set_rotation(2, Vec3(0.3, 0.0, 0.0));
  const VertexSet v = blend_skinning(h, p);
  std::size_t moved = 0;
  for (std::size_t i = 0; i < h.vertices(); ++i) {
    const double d = (v.vertex(i) - detail::row3(h.template_vertices, i)).norm();
    if (h.skin_weights.at(1, i) == 0.0) EXPECT_EQ(d, 0.0);
    else if (d > 0.0) ++moved;
  }
  EXPECT_GT(moved, 0u);
}

TEST(BlendSkinning, RejectsMismatchedParams) {
  const HeadModel h = make_desk_head();
  FlameParams p = FlameParams::zeros(h);
  p.pose.pop_back();
  EXPECT_THROW(blend_skinning(h, p), ShapeError);
  p = FlameParams::zeros(h);
  p.pose[0] = std::nan("");
  EXPECT_THROW(blend_skinning(h, p), DomainError);
}

VertexSet random_vertices(std::size_t m, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  VertexSet v = VertexSet::with_size(m);
  for (double& x : v.xyz.values()) x = n01(rng);
  return v;
}

TEST(Camera, UnitScaleWithoutDepthRemapIsIdentity) {
  std::mt19937_64 rng(4);
  const VertexSet v = random_vertices(10, rng);
  EXPECT_EQ(camera_apply(v, {1.0, 0.0, 0.0}, std::nullopt).xyz, v.xyz);
  EXPECT_EQ(camera_apply(v, {2.0, 0.0, 0.0}, std::nullopt).xyz, 2.0 * v.xyz);
}

TEST(Camera, CompositionOfTwoCameras) {
  std::mt19937_64 rng(5);
  const VertexSet v = random_vertices(10, rng);
  const Camera c1{1.5, 0.2, -0.1}, c2{0.7, -0.3, 0.4};
  const VertexSet twice = camera_apply(camera_apply(v, c1, std::nullopt), c2, std::nullopt);
  const Camera c{c1.scale * c2.scale, c2.scale * c1.tx + c2.tx, c2.scale * c1.ty + c2.ty};
  EXPECT_LE(max_abs_diff(twice.xyz, camera_apply(v, c, std::nullopt).xyz), 1e-12);
}

TEST(Camera, DepthRemapAndScaleValidation) {
  VertexSet v = VertexSet::with_size(2);
  v.set(0, {0.0, 0.0, -1.0});
  v.set(1, {0.0, 0.0, 1.0});
  const VertexSet out = camera_apply(v, {1.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(out.xyz.at(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(out.xyz.at(1, 2), 1.0);
  EXPECT_THROW(camera_apply(v, {0.0, 0.0, 0.0}), DomainError);
  EXPECT_THROW(camera_apply(v, {-1.0, 0.0, 0.0}), DomainError);
}

TEST(Downsample, UnitSquareCornersPicksDiagonal) {
  VertexSet v = VertexSet::with_size(4);
  v.set(0, {0, 0, 0});
  v.set(1, {1, 0, 0});
  v.set(2, {0, 1, 0});
  v.set(3, {1, 1, 0});
  const VertexSet d = downsample_vertices(v, 2, 0);
  EXPECT_EQ(d.vertex(0), Vec3(0, 0, 0));
  EXPECT_EQ(d.vertex(1), Vec3(1, 1, 0));
  // Remaining two corners are tied; the lower index goes first.
  EXPECT_EQ(farthest_point_order(v, 4, 0), (std::vector<std::size_t>{0, 3, 1, 2}));
}

TEST(Downsample, EdgeCounts) {
  std::mt19937_64 rng(6);
  const VertexSet v = random_vertices(30, rng);
  EXPECT_EQ(downsample_vertices(v, 1, 7).vertex(0), v.vertex(7));
  const auto order = farthest_point_order(v, 30, 0);
  std::vector<std::size_t> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_THROW(downsample_vertices(v, 0), DomainError);
  EXPECT_THROW(downsample_vertices(v, 31), DomainError);
}

TEST(Downsample, DeterministicAndCoverageNonIncreasing) {
  std::mt19937_64 rng(7);
  const VertexSet v = random_vertices(80, rng);
  EXPECT_EQ(fnvt::encode(downsample_vertices(v, 20).xyz),
            fnvt::encode(downsample_vertices(v, 20).xyz));
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t n = 1; n <= 80; ++n) {
    const VertexSet d = downsample_vertices(v, n);
    double cover = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < d.size(); ++j) best = std::min(best, (v.vertex(i) - d.vertex(j)).norm());
      cover = std::max(cover, best);
    }
    EXPECT_LE(cover, prev);
    prev = cover;
  }
  EXPECT_EQ(prev, 0.0);
}

TEST(Euler, ZeroVectorGivesZeroAngles) {
  const auto e = euler_extract(Vec3::Zero());
  EXPECT_EQ(e.angles.yaw, 0.0);
  EXPECT_EQ(e.angles.pitch, 0.0);
  EXPECT_EQ(e.angles.roll, 0.0);
  EXPECT_FALSE(e.degenerate);
}

TEST(Euler, QuarterTurnAboutYIsPureYaw) {
  const auto e = euler_extract(Vec3(0.0, kPi / 2, 0.0));
  EXPECT_NEAR(e.angles.yaw, kPi / 2, 1e-12);
  EXPECT_NEAR(e.angles.pitch, 0.0, 1e-12);
  EXPECT_NEAR(e.angles.roll, 0.0, 1e-12);
}

TEST(Euler, RoundTripAwayFromGimbalLock) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> yaw(-kPi + 1e-6, kPi), pitch(-1.45, 1.45);
  for (int trial = 0; trial < 500; ++trial) {
    const EulerAngles a{yaw(rng), pitch(rng), yaw(rng)};
    const auto e = euler_extract(matrix_to_axis_angle(euler_to_matrix(a)));
    EXPECT_FALSE(e.degenerate);
    EXPECT_NEAR(e.angles.yaw, a.yaw, 1e-9);
    EXPECT_NEAR(e.angles.pitch, a.pitch, 1e-9);
    EXPECT_NEAR(e.angles.roll, a.roll, 1e-9);
    EXPECT_LE((euler_to_matrix(e.angles) - euler_to_matrix(a)).norm(), 1e-9);
  }
}

TEST(Euler, GimbalLockIsFlaggedWithZeroRoll) {
  const EulerAngles a{0.4, kPi / 2, 0.3};
  const auto e = euler_from_matrix(euler_to_matrix(a));
  EXPECT_TRUE(e.degenerate);
  EXPECT_EQ(e.angles.roll, 0.0);
  EXPECT_LE((euler_to_matrix(e.angles) - euler_to_matrix(a)).norm(), 1e-9);
}

TEST(Rotation, AxisAngleRoundTrip) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const Mat3 r = axis_angle_to_matrix(random_rotvec(rng, kPi - 1e-3));
    EXPECT_LE((axis_angle_to_matrix(matrix_to_axis_angle(r)) - r).norm(), 1e-10);
  }
  const Mat3 half = axis_angle_to_matrix(Vec3(0.0, 0.0, kPi));
  EXPECT_LE((axis_angle_to_matrix(matrix_to_axis_angle(half)) - half).norm(), 1e-10);
}

}  // namespace
}  // namespace fnevr::face3d
