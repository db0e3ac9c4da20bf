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

// Small dense building blocks with hand-written backward passes: a one
// hidden layer ReLU MLP applied row-wise and a same-padded 2D convolution
// over H x W x C maps.

#include <array>
#include <cmath>
#include <cstddef>
#include <random>

#include <Eigen/Dense>

#include "fnevr/tensor.hpp"

namespace fnevr::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;
using MapConstVec = Eigen::Map<const Eigen::VectorXd>;

inline MapConstMat as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return MapConstMat(t.data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}
inline MapMat as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MapMat(t.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

inline void fill_normal(Tensor& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
}

// in -> hidden (ReLU) -> out.
struct MlpParams {
  Tensor w1;  // in x hidden
  Tensor b1;  // hidden
  Tensor w2;  // hidden x out
  Tensor b2;  // out

  std::size_t in() const { return w1.dim(0); }
  std::size_t hidden() const { return w1.dim(1); }
  std::size_t out() const { return w2.dim(1); }

  static MlpParams zeros(std::size_t in, std::size_t hidden, std::size_t out) {
    return {Tensor({in, hidden}), Tensor({hidden}), Tensor({hidden, out}),
            Tensor({out})};
  }

  // He-normal first layer, scaled-down Glorot second layer, zero biases.
  static MlpParams random(std::size_t in, std::size_t hidden, std::size_t out,
                          std::mt19937_64& rng, double out_gain = 1.0) {
    MlpParams p = zeros(in, hidden, out);
    fill_normal(p.w1, std::sqrt(2.0 / static_cast<double>(in)), rng);
    fill_normal(p.w2,
                out_gain * std::sqrt(1.0 / static_cast<double>(hidden)), rng);
    return p;
  }

  void validate() const {
    require_rank(w1, 2, "mlp w1");
    require_rank(w2, 2, "mlp w2");
    if (b1.dims() != Dims{w1.dim(1)} || w2.dim(0) != w1.dim(1) ||
        b2.dims() != Dims{w2.dim(1)}) {
      raise<ShapeError>("inconsistent MLP widths: w1 ",
                        detail::dims_str(w1.dims()), " b1 ",
                        detail::dims_str(b1.dims()), " w2 ",
                        detail::dims_str(w2.dims()), " b2 ",
                        detail::dims_str(b2.dims()));
    }
  }

  std::array<const Tensor*, 4> parts() const { return {&w1, &b1, &w2, &b2}; }
  std::array<Tensor*, 4> parts() { return {&w1, &b1, &w2, &b2}; }
};

struct MlpForward {
  Tensor hidden;  // N x hidden, post-ReLU
  Tensor out;     // N x out
};

// x is N x in (any tensor whose size is N * in). Coefficient-wise products
// keep each row's result independent of N, so row blocks can run in parallel.
inline MlpForward mlp_forward(const MlpParams& p, const Tensor& x, std::size_t rows) {
  p.validate();
  if (x.size() != rows * p.in()) {
    raise<ShapeError>("mlp_forward: input has ", x.size(), " entries, expected ",
                      rows, "x", p.in());
  }
  MlpForward f{Tensor({rows, p.hidden()}), Tensor({rows, p.out()})};
  auto h = as_matrix(f.hidden, rows, p.hidden());
  h.noalias() = as_matrix(x, rows, p.in()).lazyProduct(as_matrix(p.w1, p.in(), p.hidden()));
  h.rowwise() += MapConstVec(p.b1.data(), static_cast<Eigen::Index>(p.hidden())).transpose();
  h = h.cwiseMax(0.0);
  auto o = as_matrix(f.out, rows, p.out());
  o.noalias() = h.lazyProduct(as_matrix(p.w2, p.hidden(), p.out()));
  o.rowwise() += MapConstVec(p.b2.data(), static_cast<Eigen::Index>(p.out())).transpose();
  return f;
}

struct MlpGrads {
  MlpParams params;
  Tensor input;  // N x in
};

inline MlpGrads mlp_backward(const MlpParams& p, const Tensor& x, std::size_t rows,
                             const MlpForward& fwd, const Tensor& grad_out) {
  if (grad_out.size() != rows * p.out()) {
    raise<ShapeError>("mlp_backward: grad_out has ", grad_out.size(),
                      " entries, expected ", rows, "x", p.out());
  }
  MlpGrads g{MlpParams::zeros(p.in(), p.hidden(), p.out()), Tensor({rows, p.in()})};
  const auto go = as_matrix(grad_out, rows, p.out());
  const auto h = as_matrix(fwd.hidden, rows, p.hidden());
  as_matrix(g.params.w2, p.hidden(), p.out()).noalias() = h.transpose() * go;
  Eigen::Map<Eigen::VectorXd>(g.params.b2.data(), static_cast<Eigen::Index>(p.out())) =
      go.colwise().sum().transpose();
  RowMat gh = go * as_matrix(p.w2, p.hidden(), p.out()).transpose();
  gh = gh.cwiseProduct((h.array() > 0.0).cast<double>().matrix());
  as_matrix(g.params.w1, p.in(), p.hidden()).noalias() =
      as_matrix(x, rows, p.in()).transpose() * gh;
  Eigen::Map<Eigen::VectorXd>(g.params.b1.data(), static_cast<Eigen::Index>(p.hidden())) =
      gh.colwise().sum().transpose();
  as_matrix(g.input, rows, p.in()).noalias() =
      gh * as_matrix(p.w1, p.in(), p.hidden()).transpose();
  return g;
}

// Same-padded (zero) stride-1 convolution, kernel k x k x Cin x Cout.
struct ConvParams {
  Tensor kernel;
  Tensor bias;

  std::size_t ksize() const { return kernel.dim(0); }
  std::size_t in() const { return kernel.dim(2); }
  std::size_t out() const { return kernel.dim(3); }

  static ConvParams zeros(std::size_t k, std::size_t in, std::size_t out) {
    return {Tensor({k, k, in, out}), Tensor({out})};
  }
  static ConvParams random(std::size_t k, std::size_t in, std::size_t out,
                           std::mt19937_64& rng, double gain = std::sqrt(2.0)) {
    ConvParams p = zeros(k, in, out);
    fill_normal(p.kernel, gain / std::sqrt(static_cast<double>(k * k * in)), rng);
    return p;
  }

  void validate() const {
    require_rank(kernel, 4, "conv kernel");
    if (kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0) {
      raise<ShapeError>("conv kernel must be square with odd size, got ",
                        detail::dims_str(kernel.dims()));
    }
    if (bias.dims() != Dims{kernel.dim(3)}) {
      raise<ShapeError>("conv bias ", detail::dims_str(bias.dims()),
                        " does not match kernel ", detail::dims_str(kernel.dims()));
    }
  }

  std::array<const Tensor*, 2> parts() const { return {&kernel, &bias}; }
  std::array<Tensor*, 2> parts() { return {&kernel, &bias}; }
};

namespace impl {

inline RowMat im2col(const Tensor& x, std::size_t k) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  RowMat cols = RowMat::Zero(static_cast<Eigen::Index>(h * w),
                             static_cast<Eigen::Index>(k * k * c));
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t q = 0; q < w; ++q) {
      double* row = cols.data() + (r * w + q) * k * k * c;
      for (std::size_t dy = 0; dy < k; ++dy) {
        const auto yy = static_cast<std::ptrdiff_t>(r + dy) - half;
        if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t dx = 0; dx < k; ++dx) {
          const auto xx = static_cast<std::ptrdiff_t>(q + dx) - half;
          if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* src = x.data() + (static_cast<std::size_t>(yy) * w +
                                          static_cast<std::size_t>(xx)) * c;
          std::copy_n(src, c, row + (dy * k + dx) * c);
        }
      }
    }
  }
  return cols;
}

inline void col2im_add(const RowMat& cols, std::size_t k, Tensor& dx) {
  const std::size_t h = dx.dim(0), w = dx.dim(1), c = dx.dim(2);
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t q = 0; q < w; ++q) {
      const double* row = cols.data() + (r * w + q) * k * k * c;
      for (std::size_t dy = 0; dy < k; ++dy) {
        const auto yy = static_cast<std::ptrdiff_t>(r + dy) - half;
        if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t ddx = 0; ddx < k; ++ddx) {
          const auto xx = static_cast<std::ptrdiff_t>(q + ddx) - half;
          if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          double* dst = dx.data() + (static_cast<std::size_t>(yy) * w +
                                     static_cast<std::size_t>(xx)) * c;
          const double* src = row + (dy * k + ddx) * c;
          for (std::size_t i = 0; i < c; ++i) dst[i] += src[i];
        }
      }
    }
  }
}

}  // namespace impl

inline Tensor conv2d(const ConvParams& p, const Tensor& x) {
  p.validate();
  require_rank(x, 3, "conv2d input");
  if (x.dim(2) != p.in()) {
    raise<ShapeError>("conv2d: input has ", x.dim(2), " channels, kernel expects ",
                      p.in());
  }
  const std::size_t h = x.dim(0), w = x.dim(1), k = p.ksize();
  Tensor y({h, w, p.out()});
  const RowMat cols = impl::im2col(x, k);
  auto ym = as_matrix(y, h * w, p.out());
  ym.noalias() = cols * as_matrix(p.kernel, k * k * p.in(), p.out());
  ym.rowwise() += MapConstVec(p.bias.data(), static_cast<Eigen::Index>(p.out())).transpose();
  return y;
}

struct ConvGrads {
  ConvParams params;
  Tensor input;
};

inline ConvGrads conv2d_backward(const ConvParams& p, const Tensor& x,
                                 const Tensor& grad_out) {
  const std::size_t h = x.dim(0), w = x.dim(1), k = p.ksize();
  if (grad_out.dims() != Dims{h, w, p.out()}) {
    raise<ShapeError>("conv2d_backward: grad_out ", fnevr::detail::dims_str(grad_out.dims()),
                      " does not match output ", fnevr::detail::dims_str({h, w, p.out()}));
  }
  ConvGrads g{ConvParams::zeros(k, p.in(), p.out()), Tensor::zeros_like(x)};
  const RowMat cols = impl::im2col(x, k);
  const auto go = as_matrix(grad_out, h * w, p.out());
  as_matrix(g.params.kernel, k * k * p.in(), p.out()).noalias() = cols.transpose() * go;
  Eigen::Map<Eigen::VectorXd>(g.params.bias.data(), static_cast<Eigen::Index>(p.out())) =
      go.colwise().sum().transpose();
  const RowMat dcols = go * as_matrix(p.kernel, k * k * p.in(), p.out()).transpose();
  impl::col2im_add(dcols, k, g.input);
  return g;
}

}  // namespace fnevr::nn
