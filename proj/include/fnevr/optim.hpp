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

// Loss assembly over the named training components and a deterministic
// Adam trainer over flat parameter vectors.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fnevr/numgrid.hpp"

namespace fnevr::optim {

enum class Component : std::size_t { kPerceptual, kGan, kEquivariance, kRender, kMatching, kEditor };
inline constexpr std::size_t kComponentCount = 6;
inline constexpr std::array<std::string_view, kComponentCount> kComponentNames = {
    "L_P", "L_G", "L_E", "L_R", "L_sigma", "L_editor"};

struct LossReport {
  struct Entry {
    double value = 0.0;
    bool enabled = false;
  };
  std::array<Entry, kComponentCount> components{};
  double total = 0.0;

  Entry& operator[](Component c) { return components[static_cast<std::size_t>(c)]; }
  const Entry& operator[](Component c) const { return components[static_cast<std::size_t>(c)]; }

  void set(Component c, double value, bool enabled = true) { (*this)[c] = {value, enabled}; }
};

// Unweighted sum of enabled components. L_G and L_E are supplied from
// outside (their networks are not part of this library).
inline LossReport total_loss(LossReport report) {
  double total = 0.0;
  for (std::size_t i = 0; i < kComponentCount; ++i) {
    const auto& e = report.components[i];
    if (!e.enabled) continue;
    if (!std::isfinite(e.value)) {
      raise<DomainError>("total_loss: component ", kComponentNames[i], " is non-finite");
    }
    total += e.value;
  }
  report.total = total;
  return report;
}

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  Tensor m;
  Tensor v;

  explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
};

// One bias-corrected Adam update, in place.
inline void adam_step(Tensor& params, const Tensor& grads, AdamState& s) {
  Tensor::require_same_shape(params, grads, "adam_step");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      raise<DomainError>("adam_step: non-finite gradient at flat index ", i);
    }
  }
  if (s.m.empty()) {
    s.m = Tensor::zeros_like(params);
    s.v = Tensor::zeros_like(params);
  } else {
    Tensor::require_same_shape(params, s.m, "adam_step moments");
  }
  ++s.step;
  const auto& c = s.config;
  const double t = static_cast<double>(s.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * g;
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = s.m[i] / bc1;
    const double vhat = s.v[i] / bc2;
    params[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

struct ObjectiveValue {
  double loss = 0.0;
  Tensor grad;
  std::vector<std::pair<std::string, double>> components;
};

using Objective = std::function<ObjectiveValue(const Tensor& params)>;

struct FitConfig {
  AdamConfig adam;
  std::size_t steps = 200;
  std::uint64_t seed = 0;
  bool spot_check = true;
  double spot_eps = 1e-5;
  double spot_rtol = 1e-4;
  double spot_atol = 1e-7;
};

struct TraceEntry {
  std::size_t step = 0;
  double loss = 0.0;
  std::vector<std::pair<std::string, double>> components;
};

struct SpotCheck {
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = true;
};

struct FitResult {
  std::vector<TraceEntry> trace;
  Tensor params;
  SpotCheck spot;
};

// Directional finite difference of the objective along a random unit vector.
inline SpotCheck directional_check(const Objective& f, const Tensor& x, const Tensor& grad,
                                   std::uint64_t seed, double eps, double rtol, double atol) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor dir = Tensor::zeros_like(x);
  for (double& d : dir.values()) d = n01(rng);
  dir *= 1.0 / std::sqrt(dir.dot(dir));
  Tensor xp = x, xm = x;
  xp.axpy(eps, dir);
  xm.axpy(-eps, dir);
  const double fp = f(xp).loss, fm = f(xm).loss;
  SpotCheck s;
  s.analytic = grad.dot(dir);
  s.numeric = (fp - fm) / (2.0 * eps);
  const double scale = std::max(std::abs(s.analytic), std::abs(s.numeric));
  s.passed = std::abs(s.analytic - s.numeric) <= std::max(atol, rtol * scale);
  return s;
}

// Runs `steps` Adam updates. trace[i] holds the objective at the parameters
// before update i.
inline FitResult fit(const Objective& objective, Tensor init, const FitConfig& cfg) {
  FitResult result;
  result.params = std::move(init);
  if (cfg.steps == 0) return result;
  AdamState state(cfg.adam);
  result.trace.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    ObjectiveValue v = objective(result.params);
    if (!std::isfinite(v.loss)) {
      raise<DomainError>("fit: non-finite loss at step ", step);
    }
    Tensor::require_same_shape(result.params, v.grad, "fit gradient");
    if (step == 0 && cfg.spot_check) {
      result.spot = directional_check(objective, result.params, v.grad, cfg.seed, cfg.spot_eps,
                                      cfg.spot_rtol, cfg.spot_atol);
      if (!result.spot.passed) {
        raise<DomainError>("fit: gradient spot-check failed at init (analytic ",
                           result.spot.analytic, ", finite difference ", result.spot.numeric,
                           ")");
      }
    }
    result.trace.push_back({step, v.loss, std::move(v.components)});
    adam_step(result.params, v.grad, state);
  }
  return result;
}

// CSV with columns step,loss,component:<name>... taken from the first entry.
inline void write_trace_csv(const std::vector<TraceEntry>& trace,
                            const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) raise<IoError>("cannot write ", path.string());
  os << "step,loss";
  if (!trace.empty()) {
    for (const auto& [name, _] : trace.front().components) os << ",component:" << name;
  }
  os << '\n' << std::setprecision(17);
  for (const auto& e : trace) {
    os << e.step << ',' << e.loss;
    for (const auto& [_, v] : e.components) os << ',' << v;
    os << '\n';
  }
}

}  // namespace fnevr::optim
