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

// Reconstruction metrics on H x W x C images with values in [0, 1].

#include <algorithm>
#include <cmath>
#include <vector>

#include "fnevr/tensor.hpp"

namespace fnevr::harness {

inline constexpr double kPsnrCapDb = 100.0;

namespace impl {

inline void check_pair(const Tensor& a, const Tensor& b, const char* what) {
  Tensor::require_same_shape(a, b, what);
  require_rank(a, 3, what);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] >= 0.0 && a[i] <= 1.0) || !(b[i] >= 0.0 && b[i] <= 1.0)) {
      raise<DomainError>(what, ": value outside [0,1] at flat index ", i);
    }
  }
}

}  // namespace impl

inline double metric_l1(const Tensor& a, const Tensor& b) {
  impl::check_pair(a, b, "metric_l1");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double metric_mse(const Tensor& a, const Tensor& b) {
  impl::check_pair(a, b, "metric_mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

// 10 log10(1 / MSE), capped for near-identical images.
inline double metric_psnr(const Tensor& a, const Tensor& b) {
  const double mse = metric_mse(a, b);
  if (mse < 1e-10) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

// Mean SSIM over all valid 11x11 Gaussian (sigma 1.5) windows and channels.
// Images smaller than the window use the largest odd window that fits.
inline double metric_ssim(const Tensor& a, const Tensor& b) {
  impl::check_pair(a, b, "metric_ssim");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03, sigma = 1.5;
  const std::size_t h = a.dim(0), w = a.dim(1), ch = a.dim(2);
  std::size_t win = std::min<std::size_t>({11, h, w});
  if (win % 2 == 0) --win;
  std::vector<double> g(win);
  const double half = static_cast<double>(win / 2);
  double gs = 0.0;
  for (std::size_t i = 0; i < win; ++i) {
    const double d = static_cast<double>(i) - half;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    gs += g[i];
  }
  for (double& v : g) v /= gs;

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < ch; ++k) {
    for (std::size_t r = 0; r + win <= h; ++r) {
      for (std::size_t c = 0; c + win <= w; ++c) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (std::size_t i = 0; i < win; ++i) {
          for (std::size_t j = 0; j < win; ++j) {
            const double wt = g[i] * g[j];
            const double x = a.at(r + i, c + j, k), y = b.at(r + i, c + j, k);
            mx += wt * x;
            my += wt * y;
            xx += wt * x * x;
            yy += wt * y * y;
            xy += wt * x * y;
          }
        }
        const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                 ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace fnevr::harness
