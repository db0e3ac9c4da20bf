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
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fnevr/pose_edit.hpp"
#include "test_util.hpp"

namespace fnevr::pose_edit {
namespace {

constexpr double kPi = std::numbers::pi;

KeypointSet random_keypoints(std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  KeypointSet kp;
  for (std::size_t i = 0; i < k; ++i) {
    kp.points.emplace_back(u(rng), u(rng));
    Mat2 j;
    j << 1.0 + 0.2 * u(rng), 0.2 * u(rng), 0.2 * u(rng), 1.0 + 0.2 * u(rng);
    kp.jacobians.push_back(j);
  }
  return kp;
}

TEST(EulerToMatrix, ZeroIsIdentity) {
  EXPECT_EQ(euler_to_matrix({0.0, 0.0, 0.0}), Mat3::Identity());
}

TEST(EulerToMatrix, QuarterYaw) {
  Mat3 expect;
  expect << 0, 0, 1, 0, 1, 0, -1, 0, 0;
  EXPECT_LE((euler_to_matrix({kPi / 2, 0.0, 0.0}) - expect).norm(), 1e-15);
}

TEST(EulerToMatrix, ConventionIsRollPitchYawProduct) {
  const EulerAngles a{0.3, -0.7, 1.1};
  EXPECT_LE((euler_to_matrix(a) - rot_z(a.roll) * rot_x(a.pitch) * rot_y(a.yaw)).norm(), 1e-15);
}

TEST(EulerToMatrix, ProducesRotations) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int trial = 0; trial < 200; ++trial) {
    const Mat3 r = euler_to_matrix({u(rng), u(rng), u(rng)});
    EXPECT_LE((r.transpose() * r - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(EditorParams, WidthsFollowKeypointCount) {
  std::mt19937_64 rng(2);
  const auto p = EditorMlpParams::random(10, rng);
  EXPECT_EQ(p.mlp.in(), 9u + 20u + 40u);
  EXPECT_EQ(p.mlp.hidden(), 128u);
  EXPECT_EQ(p.mlp.out(), 60u);
  EXPECT_EQ(p.keypoints(), 10u);
  EditorMlpParams bad{nn::MlpParams::zeros(10, 4, 6)};
  EXPECT_THROW(bad.validate(), ShapeError);
}

TEST(EditorInput, LayoutIsMatrixThenPointsThenJacobians) {
  std::mt19937_64 rng(3);
  const auto kp = random_keypoints(2, rng);
  const Mat3 r = euler_to_matrix({0.1, 0.2, 0.3});
  const Tensor x = editor_input(r, kp);
  ASSERT_EQ(x.size(), input_width(2));
  EXPECT_EQ(x[1], r(0, 1));
  EXPECT_EQ(x[3], r(1, 0));
  EXPECT_EQ(x[9], kp.points[0].x());
  EXPECT_EQ(x[12], kp.points[1].y());
  EXPECT_EQ(x[13], kp.jacobians[0](0, 0));
  EXPECT_EQ(x[15], kp.jacobians[0](1, 0));
  EXPECT_EQ(x[20], kp.jacobians[1](1, 1));
}

TEST(EditKeypoints, ConstantNetworkIgnoresAngles) {
  std::mt19937_64 rng(4);
  const std::size_t k = 3;
  auto p = EditorMlpParams::random(k, rng, 16);
  for (Tensor* t : p.mlp.parts()) t->fill(0.0);
  for (std::size_t i = 0; i < p.mlp.b2.size(); ++i) p.mlp.b2[i] = 0.1 * static_cast<double>(i);
  const auto src = random_keypoints(k, rng);
  const EditResult a = edit_keypoints({0.3, 0.1, -0.2}, src, p);
  const EditResult b = edit_keypoints({-1.0, 0.5, 0.9}, src, p);
  ASSERT_EQ(a.values.size(), k);
  ASSERT_EQ(a.jacobians.size(), k);
  EXPECT_EQ(encode_edit(a), encode_edit(b));
  EXPECT_EQ(encode_edit(a), p.mlp.b2);
  EXPECT_DOUBLE_EQ(a.values[1].x(), 0.2);
  EXPECT_DOUBLE_EQ(a.values[1].y(), 0.3);
  EXPECT_DOUBLE_EQ(a.jacobians[0](1, 0), 0.1 * (2 * k + 2));
}

TEST(EditKeypoints, RejectsKeypointCountMismatch) {
  std::mt19937_64 rng(5);
  const auto p = EditorMlpParams::random(3, rng, 8);
  EXPECT_THROW(edit_keypoints({0, 0, 0}, random_keypoints(2, rng), p), ShapeError);
}

TEST(EditKeypoints, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  const std::size_t k = 2;
  const auto p = EditorMlpParams::random(k, rng, 10);
  const auto src = random_keypoints(k, rng);
  const EulerAngles ang{0.4, -0.2, 0.1};
  const Tensor cot = testing::randn({1, output_width(k)}, rng);
  const auto fw = edit_keypoints_forward(ang, src, p);
  const auto g = edit_keypoints_backward(p, fw, cot);
  const Tensor num = finite_diff_grad(
      [&](const Tensor& x) {
        auto q = p;
        unflatten_all(x, q.mlp.parts());
        return encode_edit(edit_keypoints(ang, src, q)).dot(cot.reshaped({output_width(k)}));
      },
      flatten_all(p.mlp.parts()));
  EXPECT_TRUE(compare_gradients(flatten_all(g.params.parts()), num).passed);
  // Input gradient through the flattened layout.
  const Tensor num_in = finite_diff_grad(
      [&](const Tensor& x) {
        return nn::mlp_forward(p.mlp, x.reshaped({1, x.size()}), 1).out.dot(cot);
      },
      fw.input);
  EXPECT_TRUE(compare_gradients(g.input.reshaped({fw.input.size()}), num_in).passed);
}

TEST(EditorLoss, DefaultsAndExactMatch) {
  EXPECT_EQ(kLambdaValue, 1.0);
  EXPECT_EQ(kLambdaJacobian, 0.5);
  std::mt19937_64 rng(7);
  const auto t = random_keypoints(4, rng);
  const EditResult pred{t.points, t.jacobians};
  const auto l = editor_loss(t, pred);
  EXPECT_EQ(l.loss, 0.0);
  for (double g : l.grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(EditorLoss, UnitValueOffsetGivesUnitLoss) {
  std::mt19937_64 rng(8);
  const auto t = random_keypoints(5, rng);
  EditResult pred{t.points, t.jacobians};
  for (auto& v : pred.values) v += Vec2(1.0, 1.0);
  const auto l = editor_loss(t, pred, 1.0, 0.5);
  EXPECT_NEAR(l.loss, 1.0, 1e-15);
  EXPECT_NEAR(l.value_term, 1.0, 1e-15);
  EXPECT_EQ(l.jacobian_term, 0.0);
}

TEST(EditorLoss, NonNegativeAndLipschitzInValues) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto t = random_keypoints(3, rng);
    const auto a = random_keypoints(3, rng), b = random_keypoints(3, rng);
    const EditResult pa{a.points, a.jacobians};
    EditResult pb{b.points, a.jacobians};
    const double la = editor_loss(t, pa).loss, lb = editor_loss(t, pb).loss;
    EXPECT_GE(la, 0.0);
    double mean_abs = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      mean_abs += (a.points[i] - b.points[i]).cwiseAbs().sum() / 6.0;
    EXPECT_LE(std::abs(la - lb), kLambdaValue * mean_abs + 1e-15);
  }
}

TEST(EditorLoss, SubgradientMatchesFiniteDifferencesAwayFromTies) {
  std::mt19937_64 rng(10);
  const auto t = random_keypoints(3, rng), q = random_keypoints(3, rng);
  const Tensor x = encode_targets(q);
  const auto l = editor_loss(t, decode_edit(x.data(), 3));
  const Tensor num = finite_diff_grad(
      [&](const Tensor& y) { return editor_loss(t, decode_edit(y.data(), 3)).loss; }, x);
  EXPECT_TRUE(compare_gradients(l.grad, num).passed);
}

TEST(EditorLoss, ShapeMismatch) {
  std::mt19937_64 rng(11);
  const auto t = random_keypoints(3, rng), q = random_keypoints(2, rng);
  EXPECT_THROW(editor_loss(t, EditResult{q.points, q.jacobians}), ShapeError);
}

}  // namespace
}  // namespace fnevr::pose_edit
