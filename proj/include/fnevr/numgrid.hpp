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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "fnevr/tensor.hpp"

namespace fnevr {

// H x W x 2 grid of normalized (x, y) coordinates in [-1, 1]^2, x to the
// right and y downward, corner aligned.
class CoordGrid {
 public:
  explicit CoordGrid(Tensor coords) : coords_(std::move(coords)) {
    if (coords_.rank() != 3 || coords_.dim(2) != 2) {
      raise<ShapeError>("CoordGrid must be HxWx2, got ",
                        detail::dims_str(coords_.dims()));
    }
  }

  static CoordGrid identity(std::size_t height, std::size_t width) {
    if (height < 2 || width < 2) {
      raise<ShapeError>("identity grid needs H, W >= 2, got ", height, "x",
                        width);
    }
    Tensor t({height, width, 2});
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        t.at(r, c, 0) = -1.0 + 2.0 * static_cast<double>(c) /
                                   static_cast<double>(width - 1);
        t.at(r, c, 1) = -1.0 + 2.0 * static_cast<double>(r) /
                                   static_cast<double>(height - 1);
      }
    }
    return CoordGrid(std::move(t));
  }

  std::size_t height() const { return coords_.dim(0); }
  std::size_t width() const { return coords_.dim(1); }
  double x(std::size_t r, std::size_t c) const { return coords_.at(r, c, 0); }
  double y(std::size_t r, std::size_t c) const { return coords_.at(r, c, 1); }
  const Tensor& tensor() const noexcept { return coords_; }

 private:
  Tensor coords_;
};

namespace detail {

// Normalized coordinate -> (base cell, fraction) along an axis of length n,
// border-clamped. Coordinates within a few ulps of a grid line snap to it so
// identity sampling is exact.
struct AxisSample {
  std::size_t i0;
  std::size_t i1;
  double frac;
  bool clamped;
};

inline AxisSample axis_sample(double coord, std::size_t n) {
  if (n == 1) return {0, 0, 0.0, true};
  const double last = static_cast<double>(n - 1);
  double u = (coord + 1.0) * 0.5 * last;
  bool clamped = false;
  if (u <= 0.0) {
    u = 0.0;
    clamped = true;
  } else if (u >= last) {
    u = last;
    clamped = true;
  }
  const double nearest = std::round(u);
  if (std::abs(u - nearest) <= 1e-12 * (1.0 + last)) u = nearest;
  auto i0 = static_cast<std::size_t>(std::floor(u));
  if (i0 >= n - 1) i0 = n - 2;
  return {i0, i0 + 1, u - static_cast<double>(i0), clamped};
}

}  // namespace detail

// Bilinear sampling of an H x W x C feature map at normalized coordinates
// with border padding.
inline Tensor grid_sample_2d(const Tensor& feature, const CoordGrid& coords) {
  require_rank(feature, 3, "grid_sample_2d feature");
  const std::size_t fh = feature.dim(0), fw = feature.dim(1),
                    ch = feature.dim(2);
  const std::size_t oh = coords.height(), ow = coords.width();
  Tensor out({oh, ow, ch});
  const double* f = feature.data();
  double* o = out.data();
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      const double x = coords.x(r, c), y = coords.y(r, c);
      if (!std::isfinite(x) || !std::isfinite(y)) {
        raise<DomainError>("grid_sample_2d: non-finite coordinate at (", r,
                           ",", c, ")");
      }
      const auto sx = detail::axis_sample(x, fw);
      const auto sy = detail::axis_sample(y, fh);
      const double w00 = (1.0 - sx.frac) * (1.0 - sy.frac);
      const double w01 = sx.frac * (1.0 - sy.frac);
      const double w10 = (1.0 - sx.frac) * sy.frac;
      const double w11 = sx.frac * sy.frac;
      const double* p00 = f + (sy.i0 * fw + sx.i0) * ch;
      const double* p01 = f + (sy.i0 * fw + sx.i1) * ch;
      const double* p10 = f + (sy.i1 * fw + sx.i0) * ch;
      const double* p11 = f + (sy.i1 * fw + sx.i1) * ch;
      double* dst = o + (r * ow + c) * ch;
      for (std::size_t k = 0; k < ch; ++k) {
        dst[k] = w00 * p00[k] + w01 * p01[k] + w10 * p10[k] + w11 * p11[k];
      }
    }
  }
  return out;
}

struct GridSampleGrads {
  Tensor feature;  // H x W x C
  Tensor coords;   // H' x W' x 2
};

// Vector-Jacobian product of grid_sample_2d. Coordinate gradients vanish on
// clamped axes.
inline GridSampleGrads grid_sample_2d_backward(const Tensor& feature,
                                               const CoordGrid& coords,
                                               const Tensor& grad_out) {
  require_rank(feature, 3, "grid_sample_2d_backward feature");
  const std::size_t fh = feature.dim(0), fw = feature.dim(1),
                    ch = feature.dim(2);
  const std::size_t oh = coords.height(), ow = coords.width();
  if (grad_out.dims() != Dims{oh, ow, ch}) {
    raise<ShapeError>("grid_sample_2d_backward: grad_out is ",
                      detail::dims_str(grad_out.dims()), ", expected ",
                      detail::dims_str({oh, ow, ch}));
  }
  GridSampleGrads g{Tensor::zeros_like(feature), Tensor({oh, ow, 2})};
  const double* f = feature.data();
  double* gf = g.feature.data();
  const double sx_scale = 0.5 * static_cast<double>(fw - 1);
  const double sy_scale = 0.5 * static_cast<double>(fh - 1);
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      const auto sx = detail::axis_sample(coords.x(r, c), fw);
      const auto sy = detail::axis_sample(coords.y(r, c), fh);
      const double w00 = (1.0 - sx.frac) * (1.0 - sy.frac);
      const double w01 = sx.frac * (1.0 - sy.frac);
      const double w10 = (1.0 - sx.frac) * sy.frac;
      const double w11 = sx.frac * sy.frac;
      const std::size_t o00 = (sy.i0 * fw + sx.i0) * ch;
      const std::size_t o01 = (sy.i0 * fw + sx.i1) * ch;
      const std::size_t o10 = (sy.i1 * fw + sx.i0) * ch;
      const std::size_t o11 = (sy.i1 * fw + sx.i1) * ch;
      const double* go = grad_out.data() + (r * ow + c) * ch;
      double dx = 0.0, dy = 0.0;
      for (std::size_t k = 0; k < ch; ++k) {
        gf[o00 + k] += w00 * go[k];
        gf[o01 + k] += w01 * go[k];
        gf[o10 + k] += w10 * go[k];
        gf[o11 + k] += w11 * go[k];
        dx += go[k] * ((1.0 - sy.frac) * (f[o01 + k] - f[o00 + k]) +
                       sy.frac * (f[o11 + k] - f[o10 + k]));
        dy += go[k] * ((1.0 - sx.frac) * (f[o10 + k] - f[o00 + k]) +
                       sx.frac * (f[o11 + k] - f[o01 + k]));
      }
      g.coords.at(r, c, 0) = sx.clamped ? 0.0 : dx * sx_scale;
      g.coords.at(r, c, 1) = sy.clamped ? 0.0 : dy * sy_scale;
    }
  }
  return g;
}

inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor softplus(const Tensor& x) {
  require_finite(x, "softplus");
  Tensor out = x;
  for (double& v : out.values()) v = softplus(v);
  return out;
}

// Numerically stable softmax along `axis`.
inline Tensor softmax_channel(const Tensor& x, std::size_t axis) {
  require_finite(x, "softmax_channel");
  if (axis >= x.rank()) {
    raise<ShapeError>("softmax_channel: axis ", axis, " out of range for ",
                      detail::dims_str(x.dims()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= x.dim(a);
  for (std::size_t a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);
  const std::size_t n = x.dim(axis);
  Tensor out = Tensor::zeros_like(x);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = x[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, x[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= z;
    }
  }
  return out;
}

using ScalarFn = std::function<double(const Tensor&)>;

// Central differences of a scalar function, one coordinate at a time.
inline Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x,
                               double eps = 1e-5) {
  if (!(eps > 0.0)) raise<DomainError>("finite_diff_grad: eps must be > 0");
  Tensor grad = Tensor::zeros_like(x);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = f(probe);
    probe[i] = orig - eps;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      raise<DomainError>("finite_diff_grad: non-finite evaluation when "
                         "perturbing flat index ",
                         i);
    }
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

struct GradCheck {
  bool passed = true;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Elementwise |a - n| <= max(atol, rtol * max(|a|, |n|)).
inline GradCheck compare_gradients(const Tensor& analytic,
                                   const Tensor& numeric, double rtol = 1e-4,
                                   double atol = 1e-7) {
  Tensor::require_same_shape(analytic, numeric, "compare_gradients");
  GradCheck r;
  double worst_ratio = -1.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double err = std::abs(a - n);
    const double scale = std::max(std::abs(a), std::abs(n));
    const double allowed = std::max(atol, rtol * scale);
    r.max_abs_err = std::max(r.max_abs_err, err);
    if (scale > 0.0) r.max_rel_err = std::max(r.max_rel_err, err / scale);
    const double ratio = err / allowed;
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      r.worst_index = i;
    }
    if (err > allowed) r.passed = false;
    ++r.checked;
  }
  return r;
}

// Runs fn(begin, end) over [0, n) split across `threads` workers. Work items
// must write disjoint outputs.
inline void parallel_for(std::size_t n, unsigned threads,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  if (threads <= 1 || n < 2) {
    fn(0, n);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = n * w / workers, e = n * (w + 1) / workers;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace fnevr
