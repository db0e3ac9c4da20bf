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
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "fnevr/optim.hpp"
#include "test_util.hpp"

namespace fnevr::optim {
namespace {

ObjectiveValue bowl(const Tensor& x) {
  return {x.dot(x), 2.0 * x, {{"bowl", x.dot(x)}}};
}

TEST(TotalLoss, SumsEnabledComponents) {
  LossReport r;
  EXPECT_EQ(total_loss(r).total, 0.0);
  r.set(Component::kMatching, 0.1);
  EXPECT_NEAR(total_loss(r).total, 0.1, 1e-12);
  r.set(Component::kRender, 0.2);
  r.set(Component::kMatching, 0.3);
  EXPECT_NEAR(total_loss(r).total, 0.5, 1e-12);
  r.set(Component::kGan, 7.0, false);
  EXPECT_NEAR(total_loss(r).total, 0.5, 1e-12);
  r.set(Component::kEquivariance, std::nan(""), false);
  EXPECT_NO_THROW(total_loss(r));
  r.set(Component::kEquivariance, std::nan(""), true);
  EXPECT_THROW(total_loss(r), DomainError);
}

TEST(TotalLoss, ComponentNames) {
  EXPECT_EQ(kComponentNames[static_cast<std::size_t>(Component::kMatching)], "L_sigma");
  EXPECT_EQ(kComponentNames[static_cast<std::size_t>(Component::kEditor)], "L_editor");
}

TEST(Adam, DefaultHyperparameters) {
  const AdamConfig c;
  EXPECT_EQ(c.lr, 2e-4);
  EXPECT_EQ(c.beta1, 0.5);
  EXPECT_EQ(c.beta2, 0.9);
  EXPECT_EQ(c.eps, 1e-8);
}

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
  Tensor x({3}, {1.0, -2.0, 3.0});
  const Tensor before = x;
  AdamState s;
  adam_step(x, Tensor({3}), s);
  EXPECT_EQ(x, before);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  std::mt19937_64 rng(1);
  Tensor x = testing::randn({20}, rng);
  // Magnitudes well above eps, random signs.
  Tensor g = testing::uniform({20}, rng, 0.05, 2.0);
  for (std::size_t i = 0; i < g.size(); i += 2) g[i] = -g[i];
  const Tensor before = x;
  AdamState s;
  adam_step(x, g, s);
  const double lr = s.config.lr;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double sign = g[i] > 0 ? 1.0 : -1.0;
    EXPECT_NEAR(x[i] - before[i], -lr * sign, lr * 1e-6);
  }
}

TEST(Adam, ConstantGradientKeepsDescending) {
  Tensor x({1}, {1.0});
  AdamState s;
  double prev = x[0];
  for (int i = 0; i < 2; ++i) {
    adam_step(x, Tensor({1}, {1.0}), s);  // d|x|/dx at x > 0
    EXPECT_LT(x[0], prev);
    prev = x[0];
  }
}

TEST(Adam, RejectsBadGradients) {
  Tensor x({2});
  AdamState s;
  EXPECT_THROW(adam_step(x, Tensor({3}), s), ShapeError);
  EXPECT_THROW(adam_step(x, Tensor({2}, {1.0, std::nan("")}), s), DomainError);
}

TEST(Adam, FlatteningOrderInvariant) {
  std::mt19937_64 rng(2);
  const Tensor a = testing::randn({5}, rng), b = testing::randn({3}, rng);
  const Tensor ga = testing::randn({5}, rng), gb = testing::randn({3}, rng);
  Tensor ab = flatten_all(std::vector<const Tensor*>{&a, &b});
  Tensor ba = flatten_all(std::vector<const Tensor*>{&b, &a});
  AdamState s1, s2;
  adam_step(ab, flatten_all(std::vector<const Tensor*>{&ga, &gb}), s1);
  adam_step(ba, flatten_all(std::vector<const Tensor*>{&gb, &ga}), s2);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(ab[i], ba[3 + i]);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(ab[5 + i], ba[i]);
}

TEST(Fit, QuadraticBowlConverges) {
  FitConfig c;
  c.steps = 200;
  c.adam.lr = 1e-2;
  const Tensor init({4}, {0.5, -0.3, 0.2, 0.4});
  const auto r = fit(bowl, init, c);
  ASSERT_EQ(r.trace.size(), 200u);
  EXPECT_EQ(r.trace[0].loss, init.dot(init));
  EXPECT_LT(r.params.dot(r.params), 1e-3 * init.dot(init));
  EXPECT_TRUE(r.spot.passed);
}

TEST(Fit, SmoothConvexTraceNonIncreasingAfterWarmup) {
  FitConfig c;
  c.steps = 100;
  c.adam.lr = 1e-3;
  c.adam.beta1 = 0.9;
  c.adam.beta2 = 0.999;
  const auto r = fit(bowl, Tensor({3}, {1.0, -2.0, 0.5}), c);
  for (std::size_t i = 6; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i].loss, r.trace[i - 1].loss);
}

TEST(Fit, ZeroStepsLeaveParams) {
  const Tensor init({2}, {1.0, 2.0});
  FitConfig c;
  c.steps = 0;
  const auto r = fit(bowl, init, c);
  EXPECT_EQ(r.params, init);
  EXPECT_TRUE(r.trace.empty());
}

TEST(Fit, DeterministicGivenSeed) {
  FitConfig c;
  c.steps = 20;
  const auto a = fit(bowl, Tensor({2}, {1.0, 2.0}), c);
  const auto b = fit(bowl, Tensor({2}, {1.0, 2.0}), c);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.spot.numeric, b.spot.numeric);
}

TEST(Fit, WrongGradientFailsSpotCheck) {
  auto bad = [](const Tensor& x) { return ObjectiveValue{x.dot(x), 3.0 * x, {}}; };
  FitConfig c;
  c.steps = 5;
  EXPECT_THROW(fit(bad, Tensor({2}, {1.0, 2.0}), c), DomainError);
}

TEST(Fit, NonFiniteLossAbortsWithStep) {
  int calls = 0;
  auto blowup = [&](const Tensor& x) {
    ++calls;
    const double l = calls > 6 ? std::nan("") : x.dot(x);
    return ObjectiveValue{l, 2.0 * x, {}};
  };
  FitConfig c;
  c.steps = 10;
  try {
    fit(blowup, Tensor({1}, {1.0}), c);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("step 4"), std::string::npos) << e.what();
  }
}

TEST(TraceCsv, HeaderAndRows) {
  FitConfig c;
  c.steps = 3;
  const auto r = fit(bowl, Tensor({1}, {1.0}), c);
  const auto path = std::filesystem::temp_directory_path() / "fnevr_trace.csv";
  write_trace_csv(r.trace, path);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "step,loss,component:bowl");
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 4), "0,1,");
  std::size_t rows = 1;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 3u);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace fnevr::optim
