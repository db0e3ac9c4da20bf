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

// One-stage vs two-stage ray-sampling benchmark. The one-stage path runs the
// per-voxel MLP once over D fixed bins. The two-stage path is a miniature of
// hierarchical volume sampling: a coarse MLP over D/2 bins, inverse-transform
// re-sampling of D fine depths from the coarse weights, a fine MLP pass over
// the re-sampled features, then compositing.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fnevr/fvr.hpp"

namespace fnevr::harness {

struct BenchConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  fvr::FvrConfig fvr;
  std::size_t trials = 20;
  unsigned threads = 1;
  std::uint64_t seed = 0;
};

struct StrategyTiming {
  double median_ns_per_frame = 0.0;
  std::size_t mlp_evals_per_pixel = 0;
  std::size_t networks = 0;
};

struct BenchReport {
  StrategyTiming one_stage;
  StrategyTiming two_stage;
  double throughput_ratio = 0.0;  // one-stage frames/s over two-stage frames/s
  double max_output_gap = 0.0;    // sanity: both paths yield finite outputs of equal shape
};

// Depths in [0, 1] for `fine` samples drawn by inverting the piecewise
// constant density given by `weights` over equal coarse intervals, at the
// deterministic quantiles (j + 0.5) / fine.
inline std::vector<double> inverse_transform_depths(std::span<const double> weights,
                                                    std::size_t fine) {
  const std::size_t n = weights.size();
  if (n == 0 || fine == 0) raise<ShapeError>("inverse_transform_depths: empty input");
  std::vector<double> pdf(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pdf[i] = std::max(weights[i], 0.0) + 1e-5;
    total += pdf[i];
  }
  for (double& p : pdf) p /= total;
  std::vector<double> out(fine);
  std::size_t bin = 0;
  double cdf_lo = 0.0;
  for (std::size_t j = 0; j < fine; ++j) {
    const double u = (static_cast<double>(j) + 0.5) / static_cast<double>(fine);
    while (bin + 1 < n && cdf_lo + pdf[bin] < u) {
      cdf_lo += pdf[bin];
      ++bin;
    }
    const double frac = std::clamp((u - cdf_lo) / pdf[bin], 0.0, 1.0);
    out[j] = (static_cast<double>(bin) + frac) / static_cast<double>(n);
  }
  return out;
}

namespace impl {

// Averages pairs of adjacent depth bins (D -> D/2).
inline fvr::FeatureVolume coarsen_depth(const fvr::FeatureVolume& v) {
  const std::size_t h = v.height(), w = v.width(), d = v.depth(), c = v.channels();
  const std::size_t dc = d / 2;
  Tensor out({h, w, dc, c});
  const Tensor& t = v.tensor();
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t j = 0; j < dc; ++j)
      for (std::size_t k = 0; k < c; ++k)
        out[(p * dc + j) * c + k] =
            0.5 * (t[(p * d + 2 * j) * c + k] + t[(p * d + 2 * j + 1) * c + k]);
  return fvr::FeatureVolume(std::move(out));
}

// Linear interpolation of per-bin features at arbitrary depths; bin j's
// feature lives at depth (j + 0.5) / D.
inline void resample_ray(const double* ray, std::size_t d, std::size_t c,
                         std::span<const double> depths, double* dst) {
  for (std::size_t s = 0; s < depths.size(); ++s) {
    const double q = std::clamp(depths[s] * static_cast<double>(d) - 0.5, 0.0,
                                static_cast<double>(d - 1));
    const auto j0 = static_cast<std::size_t>(std::floor(q));
    const std::size_t j1 = std::min(j0 + 1, d - 1);
    const double f = q - static_cast<double>(j0);
    for (std::size_t k = 0; k < c; ++k) {
      dst[s * c + k] = (1.0 - f) * ray[j0 * c + k] + f * ray[j1 * c + k];
    }
  }
}

}  // namespace impl

struct TwoStageResult {
  Tensor color;
  Tensor fine_depths;  // H x W x D
};

inline Tensor one_stage_render(const fvr::FeatureVolume& fs, const fvr::FeatureVolume& fc,
                               const fvr::RaySampleMlpParams& mlp, unsigned threads = 1) {
  return fvr::composite(fvr::ray_sample(fs, fc, mlp, threads)).color;
}

inline TwoStageResult two_stage_render(const fvr::FeatureVolume& fs, const fvr::FeatureVolume& fc,
                                       const fvr::RaySampleMlpParams& coarse,
                                       const fvr::RaySampleMlpParams& fine,
                                       unsigned threads = 1) {
  const std::size_t h = fs.height(), w = fs.width(), d = fs.depth();
  if (d < 2 || d % 2 != 0) raise<ShapeError>("two-stage sampling needs an even depth, got ", d);
  const auto coarse_sample = fvr::ray_sample(impl::coarsen_depth(fs), impl::coarsen_depth(fc),
                                             coarse, threads);
  const auto coarse_comp = fvr::composite(coarse_sample);
  const std::size_t dc = d / 2, ns = fs.channels(), nc = fc.channels();
  Tensor rs({h, w, d, ns}), rc({h, w, d, nc});
  TwoStageResult out;
  out.fine_depths = Tensor({h, w, d});
  for (std::size_t p = 0; p < h * w; ++p) {
    const auto depths = inverse_transform_depths(
        std::span<const double>(coarse_comp.alpha.data() + p * dc, dc), d);
    std::copy(depths.begin(), depths.end(), out.fine_depths.data() + p * d);
    impl::resample_ray(fs.tensor().data() + p * d * ns, d, ns, depths, rs.data() + p * d * ns);
    impl::resample_ray(fc.tensor().data() + p * d * nc, d, nc, depths, rc.data() + p * d * nc);
  }
  out.color = fvr::composite(fvr::ray_sample(fvr::FeatureVolume(std::move(rs)),
                                             fvr::FeatureVolume(std::move(rc)), fine, threads))
                  .color;
  return out;
}

inline BenchReport bench_sampling(const BenchConfig& cfg) {
  if (cfg.trials < 10) raise<DomainError>("bench_sampling: trials must be >= 10, got ", cfg.trials);
  const auto& f = cfg.fvr;
  std::mt19937_64 rng(cfg.seed);
  Tensor s({cfg.height, cfg.width, f.depth, f.n_sigma}), c({cfg.height, cfg.width, f.depth, f.n_color});
  nn::fill_normal(s, 1.0, rng);
  nn::fill_normal(c, 1.0, rng);
  const fvr::FeatureVolume fs(std::move(s)), fc(std::move(c));
  const auto one = fvr::RaySampleMlpParams::random(f, rng);
  const auto coarse = fvr::RaySampleMlpParams::random(f, rng);
  const auto fine = fvr::RaySampleMlpParams::random(f, rng);

  using clock = std::chrono::steady_clock;
  auto time_it = [&](auto&& fn) {
    std::vector<double> ns;
    ns.reserve(cfg.trials);
    fn();  // warm-up
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      const auto t0 = clock::now();
      fn();
      const auto t1 = clock::now();
      ns.push_back(static_cast<double>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    }
    std::nth_element(ns.begin(), ns.begin() + static_cast<std::ptrdiff_t>(ns.size() / 2), ns.end());
    return ns[ns.size() / 2];
  };
  Tensor out1, out2;
  BenchReport r;
  r.one_stage.median_ns_per_frame = time_it([&] { out1 = one_stage_render(fs, fc, one, cfg.threads); });
  r.two_stage.median_ns_per_frame =
      time_it([&] { out2 = two_stage_render(fs, fc, coarse, fine, cfg.threads).color; });
  if (r.one_stage.median_ns_per_frame <= 0.0 || r.two_stage.median_ns_per_frame <= 0.0) {
    raise<DomainError>("bench_sampling: timer resolution insufficient, increase the problem size");
  }
  r.one_stage.mlp_evals_per_pixel = f.depth;
  r.one_stage.networks = 1;
  r.two_stage.mlp_evals_per_pixel = f.depth / 2 + f.depth;
  r.two_stage.networks = 2;
  r.throughput_ratio = r.two_stage.median_ns_per_frame / r.one_stage.median_ns_per_frame;
  r.max_output_gap = max_abs_diff(out1, out2);
  return r;
}

}  // namespace fnevr::harness
