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

// Face volume rendering: lift warped 2D features into shape/color volumes,
// Gaussian mesh heatmap supervision, the per-voxel ray-sampling MLP,
// emission-absorption compositing along orthogonal rays, and the render loss
// on the intermediate image. Every differentiable stage has a hand-written
// backward pass.

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "fnevr/face3d.hpp"
#include "fnevr/nn.hpp"
#include "fnevr/numgrid.hpp"

namespace fnevr::fvr {

inline constexpr std::size_t kShapeChannels = 16;
inline constexpr double kMatchAlpha1 = 10.0;
inline constexpr double kMatchAlpha2 = 0.9;
inline constexpr double kHeatmapSigma = 0.01;

struct FvrConfig {
  std::size_t depth = 16;
  std::size_t n_sigma = kShapeChannels;
  std::size_t n_color = 8;
  std::size_t m_color = 32;
  std::size_t hidden = 64;
  std::size_t head_hidden = 16;
  std::size_t kernel = 3;
};

// H x W x D x C grid; depth bin j covers normalized depth [j/D, (j+1)/D).
class FeatureVolume {
 public:
  FeatureVolume() = default;
  explicit FeatureVolume(Tensor data) : data_(std::move(data)) {
    require_rank(data_, 4, "FeatureVolume");
  }

  std::size_t height() const { return data_.dim(0); }
  std::size_t width() const { return data_.dim(1); }
  std::size_t depth() const { return data_.dim(2); }
  std::size_t channels() const { return data_.dim(3); }
  std::size_t voxels() const { return height() * width() * depth(); }
  const Tensor& tensor() const noexcept { return data_; }
  Tensor& tensor() noexcept { return data_; }

 private:
  Tensor data_;
};

struct RenderSample {
  Tensor p_sigma;  // H x W x D x 1, nonnegative integrated density per bin
  Tensor p_color;  // H x W x D x M_color

  void validate() const {
    require_rank(p_sigma, 4, "RenderSample p_sigma");
    require_rank(p_color, 4, "RenderSample p_color");
    if (p_sigma.dim(3) != 1 || p_sigma.dim(0) != p_color.dim(0) ||
        p_sigma.dim(1) != p_color.dim(1) || p_sigma.dim(2) != p_color.dim(2)) {
      raise<ShapeError>("RenderSample: p_sigma ", detail::dims_str(p_sigma.dims()),
                        " and p_color ", detail::dims_str(p_color.dims()),
                        " disagree");
    }
    for (std::size_t i = 0; i < p_sigma.size(); ++i) {
      if (!(p_sigma[i] >= 0.0) || !std::isfinite(p_sigma[i])) {
        raise<DomainError>("RenderSample: p_sigma must be finite and >= 0, got ",
                           p_sigma[i], " at flat index ", i);
      }
    }
  }
};

// ---------------------------------------------------------------- lifting

using ConvStack = std::vector<nn::ConvParams>;

struct LiftNetParams {
  ConvStack shape;              // C_in -> D * N_sigma
  ConvStack color;              // C_in -> D * N_color
  Tensor heatmap_logits;        // N_down; softmax gives the heatmap weights
  std::size_t depth = 16;
  std::size_t n_sigma = kShapeChannels;
  std::size_t n_color = 8;

  // One k x k conv per lift (plus optional hidden layers of width `hidden`),
  // scaled so that lifted features start with O(1) magnitude.
  static LiftNetParams random(std::size_t c_in, const FvrConfig& cfg,
                              std::size_t n_down, std::mt19937_64& rng,
                              std::size_t hidden_layers = 0,
                              std::size_t hidden_width = 32) {
    LiftNetParams p;
    p.depth = cfg.depth;
    p.n_sigma = cfg.n_sigma;
    p.n_color = cfg.n_color;
    auto build = [&](std::size_t out) {
      ConvStack s;
      std::size_t in = c_in;
      for (std::size_t l = 0; l < hidden_layers; ++l) {
        s.push_back(nn::ConvParams::random(cfg.kernel, in, hidden_width, rng));
        in = hidden_width;
      }
      s.push_back(nn::ConvParams::random(cfg.kernel, in, out, rng, 1.0));
      return s;
    };
    p.shape = build(cfg.depth * cfg.n_sigma);
    p.color = build(cfg.depth * cfg.n_color);
    p.heatmap_logits = Tensor({std::max<std::size_t>(n_down, 1)});
    return p;
  }

  std::vector<const Tensor*> parts() const {
    std::vector<const Tensor*> out;
    for (const auto& l : shape) out.insert(out.end(), {&l.kernel, &l.bias});
    for (const auto& l : color) out.insert(out.end(), {&l.kernel, &l.bias});
    out.push_back(&heatmap_logits);
    return out;
  }
  std::vector<Tensor*> parts() {
    std::vector<Tensor*> out;
    for (auto& l : shape) out.insert(out.end(), {&l.kernel, &l.bias});
    for (auto& l : color) out.insert(out.end(), {&l.kernel, &l.bias});
    out.push_back(&heatmap_logits);
    return out;
  }

  LiftNetParams zeros_like() const {
    LiftNetParams z = *this;
    for (Tensor* t : z.parts()) t->fill(0.0);
    return z;
  }
};

namespace impl {

inline std::vector<Tensor> conv_stack_forward(const ConvStack& stack, const Tensor& x) {
  if (stack.empty()) raise<ShapeError>("conv stack has no layers");
  std::vector<Tensor> acts;
  acts.reserve(stack.size() + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < stack.size(); ++l) {
    Tensor y = nn::conv2d(stack[l], acts.back());
    if (l + 1 < stack.size()) {
      for (double& v : y.values()) v = std::max(v, 0.0);
    }
    acts.push_back(std::move(y));
  }
  return acts;
}

// Accumulates parameter gradients into `grads` and returns the input gradient.
inline Tensor conv_stack_backward(const ConvStack& stack, const std::vector<Tensor>& acts,
                                  Tensor grad, ConvStack& grads) {
  for (std::size_t l = stack.size(); l-- > 0;) {
    if (l + 1 < stack.size()) {
      const Tensor& y = acts[l + 1];
      for (std::size_t i = 0; i < grad.size(); ++i) {
        if (y[i] <= 0.0) grad[i] = 0.0;
      }
    }
    auto g = nn::conv2d_backward(stack[l], acts[l], grad);
    grads[l].kernel += g.params.kernel;
    grads[l].bias += g.params.bias;
    grad = std::move(g.input);
  }
  return grad;
}

inline FeatureVolume lift(const ConvStack& stack, const Tensor& fw, std::size_t depth,
                          std::size_t channels) {
  require_rank(fw, 3, "lift input");
  Tensor y = conv_stack_forward(stack, fw).back();
  if (y.dim(2) != depth * channels) {
    raise<ShapeError>("lift: network emits ", y.dim(2), " channels, expected D*C = ",
                      depth, "*", channels);
  }
  return FeatureVolume(y.reshaped({fw.dim(0), fw.dim(1), depth, channels}));
}

}  // namespace impl

inline FeatureVolume lift_shape(const Tensor& fw, const LiftNetParams& p) {
  return impl::lift(p.shape, fw, p.depth, p.n_sigma);
}

inline FeatureVolume lift_color(const Tensor& fw, const LiftNetParams& p) {
  return impl::lift(p.color, fw, p.depth, p.n_color);
}

struct LiftGrads {
  LiftNetParams params;
  Tensor input;
};

// Backward through both lifts given gradients on F_sigma and F_color; either
// gradient may be empty (default-constructed) to skip that branch.
inline LiftGrads lift_backward(const Tensor& fw, const LiftNetParams& p,
                               const Tensor& grad_sigma, const Tensor& grad_color) {
  LiftGrads g{p.zeros_like(), Tensor::zeros_like(fw)};
  const std::size_t h = fw.dim(0), w = fw.dim(1);
  if (!grad_sigma.empty()) {
    const auto acts = impl::conv_stack_forward(p.shape, fw);
    g.input += impl::conv_stack_backward(
        p.shape, acts, grad_sigma.reshaped({h, w, p.depth * p.n_sigma}), g.params.shape);
  }
  if (!grad_color.empty()) {
    const auto acts = impl::conv_stack_forward(p.color, fw);
    g.input += impl::conv_stack_backward(
        p.color, acts, grad_color.reshaped({h, w, p.depth * p.n_color}), g.params.color);
  }
  return g;
}

// ---------------------------------------------------------------- mesh heatmaps

struct Lattice {
  std::size_t height;
  std::size_t width;
  std::size_t depth;

  double x(std::size_t c) const {
    return -1.0 + 2.0 * static_cast<double>(c) / static_cast<double>(width - 1);
  }
  double y(std::size_t r) const {
    return -1.0 + 2.0 * static_cast<double>(r) / static_cast<double>(height - 1);
  }
  double z(std::size_t j) const {
    return (static_cast<double>(j) + 0.5) / static_cast<double>(depth);
  }
};

// exp(-|x - v|^2 / (2 sigma)) on the lattice; sigma acts as a variance.
inline Tensor mesh_heatmap(const Vec3& vertex, const Lattice& lat,
                           double sigma = kHeatmapSigma) {
  if (!(sigma > 0.0)) raise<DomainError>("mesh_heatmap: sigma must be > 0");
  if (lat.height < 2 || lat.width < 2 || lat.depth < 1) {
    raise<ShapeError>("mesh_heatmap: lattice must be at least 2x2x1");
  }
  Tensor out({lat.height, lat.width, lat.depth, 1});
  double* o = out.data();
  for (std::size_t r = 0; r < lat.height; ++r) {
    const double dy = lat.y(r) - vertex.y();
    for (std::size_t c = 0; c < lat.width; ++c) {
      const double dx = lat.x(c) - vertex.x();
      for (std::size_t j = 0; j < lat.depth; ++j) {
        const double dz = lat.z(j) - vertex.z();
        *o++ = std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * sigma));
      }
    }
  }
  return out;
}

inline std::vector<Tensor> mesh_heatmaps(const face3d::VertexSet& v, const Lattice& lat,
                                         double sigma = kHeatmapSigma) {
  std::vector<Tensor> maps;
  maps.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) maps.push_back(mesh_heatmap(v.vertex(i), lat, sigma));
  return maps;
}

inline Tensor softmax_weights(const Tensor& logits) {
  return softmax_channel(logits, 0);
}

// sum_i softmax(raw)_i F_m,i
inline FeatureVolume mesh_feature(std::span<const Tensor> heatmaps, const Tensor& raw_weights) {
  if (heatmaps.empty()) raise<ShapeError>("mesh_feature: no heatmaps");
  if (raw_weights.size() != heatmaps.size()) {
    raise<ShapeError>("mesh_feature: ", heatmaps.size(), " heatmaps but ",
                      raw_weights.size(), " weights");
  }
  const Tensor w = softmax_weights(raw_weights);
  Tensor out = Tensor::zeros_like(heatmaps[0]);
  for (std::size_t i = 0; i < heatmaps.size(); ++i) out.axpy(w[i], heatmaps[i]);
  return FeatureVolume(std::move(out));
}

// Gradient on the raw (pre-softmax) weights given dL/dF_m.
inline Tensor mesh_feature_backward(std::span<const Tensor> heatmaps,
                                    const Tensor& raw_weights, const Tensor& grad_out) {
  const Tensor w = softmax_weights(raw_weights);
  std::vector<double> dw(heatmaps.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < heatmaps.size(); ++i) {
    dw[i] = heatmaps[i].dot(grad_out);
    mean += w[i] * dw[i];
  }
  Tensor g = Tensor::zeros_like(raw_weights);
  for (std::size_t i = 0; i < heatmaps.size(); ++i) g[i] = w[i] * (dw[i] - mean);
  return g;
}

// ---------------------------------------------------------------- matching loss

struct MatchingLoss {
  double loss = 0.0;
  double inner = 0.0;   // <normalized channel-mean of F_sigma, normalized F_m>
  Tensor grad_sigma;    // same shape as F_sigma
  Tensor grad_mesh;     // same shape as F_m
};

// exp(-alpha1 <F_sigma, F_m>) - alpha2, where F_sigma is first averaged over
// its channels and both volumes are scaled to unit L2 norm.
inline MatchingLoss matching_loss(const FeatureVolume& f_sigma, const FeatureVolume& f_mesh,
                                  double alpha1 = kMatchAlpha1, double alpha2 = kMatchAlpha2) {
  if (f_mesh.channels() != 1 || f_sigma.height() != f_mesh.height() ||
      f_sigma.width() != f_mesh.width() || f_sigma.depth() != f_mesh.depth()) {
    raise<ShapeError>("matching_loss: F_sigma ", detail::dims_str(f_sigma.tensor().dims()),
                      " vs F_m ", detail::dims_str(f_mesh.tensor().dims()));
  }
  const std::size_t nv = f_sigma.voxels(), nc = f_sigma.channels();
  const Tensor& fs = f_sigma.tensor();
  const Tensor& fm = f_mesh.tensor();
  std::vector<double> a(nv, 0.0);
  for (std::size_t v = 0; v < nv; ++v) {
    double s = 0.0;
    for (std::size_t c = 0; c < nc; ++c) s += fs[v * nc + c];
    a[v] = s / static_cast<double>(nc);
  }
  double na = 0.0, nm = 0.0, dot = 0.0;
  for (std::size_t v = 0; v < nv; ++v) {
    na += a[v] * a[v];
    nm += fm[v] * fm[v];
    dot += a[v] * fm[v];
  }
  na = std::sqrt(na);
  nm = std::sqrt(nm);
  if (!(na > 0.0) || !(nm > 0.0)) {
    raise<DomainError>("matching_loss: zero-norm operand (|F_sigma| = ", na,
                       ", |F_m| = ", nm, ")");
  }
  MatchingLoss out;
  out.inner = dot / (na * nm);
  const double e = std::exp(-alpha1 * out.inner);
  out.loss = e - alpha2;
  const double dl_ds = -alpha1 * e;
  out.grad_sigma = Tensor::zeros_like(fs);
  out.grad_mesh = Tensor::zeros_like(fm);
  for (std::size_t v = 0; v < nv; ++v) {
    const double ahat = a[v] / na, mhat = fm[v] / nm;
    const double ga = dl_ds * (mhat - out.inner * ahat) / na;
    out.grad_mesh[v] = dl_ds * (ahat - out.inner * mhat) / nm;
    const double gc = ga / static_cast<double>(nc);
    for (std::size_t c = 0; c < nc; ++c) out.grad_sigma[v * nc + c] = gc;
  }
  return out;
}

// ---------------------------------------------------------------- ray sampling

// Per-voxel MLP over [F_sigma, F_color] -> (density logit, M_color colors).
struct RaySampleMlpParams {
  nn::MlpParams mlp;

  static RaySampleMlpParams random(const FvrConfig& cfg, std::mt19937_64& rng) {
    return {nn::MlpParams::random(cfg.n_sigma + cfg.n_color, cfg.hidden, 1 + cfg.m_color, rng)};
  }
  std::size_t in() const { return mlp.in(); }
  std::size_t m_color() const { return mlp.out() - 1; }
};

struct RaySampleForward {
  RenderSample sample;
  Tensor inputs;   // voxels x (N_sigma + N_color)
  nn::MlpForward mlp;
};

namespace impl {

inline void check_ray_inputs(const FeatureVolume& fs, const FeatureVolume& fc,
                             const RaySampleMlpParams& p) {
  if (fs.height() != fc.height() || fs.width() != fc.width() || fs.depth() != fc.depth()) {
    raise<ShapeError>("ray_sample: F_sigma ", detail::dims_str(fs.tensor().dims()),
                      " and F_color ", detail::dims_str(fc.tensor().dims()),
                      " differ spatially");
  }
  if (fs.channels() + fc.channels() != p.in()) {
    raise<ShapeError>("ray_sample: MLP expects ", p.in(), " inputs, volumes provide ",
                      fs.channels(), " + ", fc.channels());
  }
  if (p.mlp.out() < 2) raise<ShapeError>("ray_sample: MLP must emit density + color");
}

inline Tensor concat_voxel_features(const FeatureVolume& fs, const FeatureVolume& fc) {
  const std::size_t nv = fs.voxels(), ns = fs.channels(), nc = fc.channels();
  Tensor x({nv, ns + nc});
  for (std::size_t v = 0; v < nv; ++v) {
    std::copy_n(fs.tensor().data() + v * ns, ns, x.data() + v * (ns + nc));
    std::copy_n(fc.tensor().data() + v * nc, nc, x.data() + v * (ns + nc) + ns);
  }
  return x;
}

inline RenderSample split_outputs(const Tensor& out, std::size_t h, std::size_t w,
                                  std::size_t d, std::size_t m) {
  RenderSample s{Tensor({h, w, d, 1}), Tensor({h, w, d, m})};
  const std::size_t nv = h * w * d;
  for (std::size_t v = 0; v < nv; ++v) {
    const double* o = out.data() + v * (m + 1);
    s.p_sigma[v] = softplus(o[0]);
    std::copy_n(o + 1, m, s.p_color.data() + v * m);
  }
  return s;
}

}  // namespace impl

inline RaySampleForward ray_sample_forward(const FeatureVolume& f_sigma,
                                           const FeatureVolume& f_color,
                                           const RaySampleMlpParams& p) {
  impl::check_ray_inputs(f_sigma, f_color, p);
  RaySampleForward f;
  f.inputs = impl::concat_voxel_features(f_sigma, f_color);
  f.mlp = nn::mlp_forward(p.mlp, f.inputs, f_sigma.voxels());
  f.sample = impl::split_outputs(f.mlp.out, f_sigma.height(), f_sigma.width(),
                                   f_sigma.depth(), p.m_color());
  return f;
}

// Forward only; `threads` > 1 splits voxels into independent row blocks.
inline RenderSample ray_sample(const FeatureVolume& f_sigma, const FeatureVolume& f_color,
                               const RaySampleMlpParams& p, unsigned threads = 1) {
  if (threads <= 1) return ray_sample_forward(f_sigma, f_color, p).sample;
  impl::check_ray_inputs(f_sigma, f_color, p);
  const Tensor x = impl::concat_voxel_features(f_sigma, f_color);
  const std::size_t nv = f_sigma.voxels(), in = p.in(), out_w = p.mlp.out();
  Tensor out({nv, out_w});
  parallel_for(nv, threads, [&](std::size_t b, std::size_t e) {
    Tensor xb({e - b, in}, std::vector<double>(x.data() + b * in, x.data() + e * in));
    const auto fw = nn::mlp_forward(p.mlp, xb, e - b);
    std::copy_n(fw.out.data(), fw.out.size(), out.data() + b * out_w);
  });
  return impl::split_outputs(out, f_sigma.height(), f_sigma.width(), f_sigma.depth(),
                               p.m_color());
}

struct RaySampleGrads {
  RaySampleMlpParams params;
  Tensor f_sigma;
  Tensor f_color;
};

inline RaySampleGrads ray_sample_backward(const FeatureVolume& f_sigma,
                                          const FeatureVolume& f_color,
                                          const RaySampleMlpParams& p,
                                          const RaySampleForward& fwd,
                                          const Tensor& grad_p_sigma,
                                          const Tensor& grad_p_color) {
  Tensor::require_same_shape(fwd.sample.p_sigma, grad_p_sigma, "ray_sample_backward p_sigma");
  Tensor::require_same_shape(fwd.sample.p_color, grad_p_color, "ray_sample_backward p_color");
  const std::size_t nv = f_sigma.voxels(), m = p.m_color(), ns = f_sigma.channels(),
                    nc = f_color.channels();
  Tensor g_out({nv, m + 1});
  for (std::size_t v = 0; v < nv; ++v) {
    g_out[v * (m + 1)] = grad_p_sigma[v] * sigmoid(fwd.mlp.out[v * (m + 1)]);
    std::copy_n(grad_p_color.data() + v * m, m, g_out.data() + v * (m + 1) + 1);
  }
  auto g = nn::mlp_backward(p.mlp, fwd.inputs, nv, fwd.mlp, g_out);
  RaySampleGrads out{{std::move(g.params)}, Tensor::zeros_like(f_sigma.tensor()),
                     Tensor::zeros_like(f_color.tensor())};
  for (std::size_t v = 0; v < nv; ++v) {
    std::copy_n(g.input.data() + v * (ns + nc), ns, out.f_sigma.data() + v * ns);
    std::copy_n(g.input.data() + v * (ns + nc) + ns, nc, out.f_color.data() + v * nc);
  }
  return out;
}

// ---------------------------------------------------------------- compositing

struct CompositeResult {
  Tensor color;    // H x W x M_color
  Tensor alpha;    // H x W x D, tau_j (1 - exp(-p_sigma_j))
  Tensor opacity;  // H x W x 1, sum_j alpha_j
};

// Front-to-back emission-absorption along each pixel's ray:
// F_r = sum_j tau_j (1 - exp(-p_sigma_j)) p_color_j, tau_j = exp(-sum_{k<j} p_sigma_k).
inline CompositeResult composite(const RenderSample& s) {
  s.validate();
  const std::size_t h = s.p_sigma.dim(0), w = s.p_sigma.dim(1), d = s.p_sigma.dim(2),
                    m = s.p_color.dim(3);
  CompositeResult r{Tensor({h, w, m}), Tensor({h, w, d}), Tensor({h, w, 1})};
  const double* ps = s.p_sigma.data();
  const double* pc = s.p_color.data();
  for (std::size_t px = 0; px < h * w; ++px) {
    double* out = r.color.data() + px * m;
    double neg_depth = 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double sigma = ps[px * d + j];
      const double a = std::exp(neg_depth) * (1.0 - std::exp(-sigma));
      const double* c = pc + (px * d + j) * m;
      for (std::size_t k = 0; k < m; ++k) out[k] += a * c[k];
      r.alpha[px * d + j] = a;
      total += a;
      neg_depth += -sigma;
    }
    r.opacity[px] = total;
  }
  return r;
}

struct CompositeGrads {
  Tensor p_sigma;
  Tensor p_color;
};

// d alpha_j / d p_k = tau_{j+1} for k = j and -alpha_j for k < j.
inline CompositeGrads composite_backward(const RenderSample& s, const Tensor& grad_color) {
  s.validate();
  const std::size_t h = s.p_sigma.dim(0), w = s.p_sigma.dim(1), d = s.p_sigma.dim(2),
                    m = s.p_color.dim(3);
  if (grad_color.dims() != Dims{h, w, m}) {
    raise<ShapeError>("composite_backward: grad ", detail::dims_str(grad_color.dims()),
                      " expected ", detail::dims_str({h, w, m}));
  }
  CompositeGrads g{Tensor::zeros_like(s.p_sigma), Tensor::zeros_like(s.p_color)};
  std::vector<double> alpha(d), tau_next(d), proj(d);
  for (std::size_t px = 0; px < h * w; ++px) {
    const double* go = grad_color.data() + px * m;
    double neg_depth = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double sigma = s.p_sigma[px * d + j];
      const double tau = std::exp(neg_depth);
      alpha[j] = tau * (1.0 - std::exp(-sigma));
      neg_depth += -sigma;
      tau_next[j] = std::exp(neg_depth);
      const double* c = s.p_color.data() + (px * d + j) * m;
      double* gc = g.p_color.data() + (px * d + j) * m;
      double dot = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        gc[k] = alpha[j] * go[k];
        dot += go[k] * c[k];
      }
      proj[j] = dot;
    }
    double behind = 0.0;  // sum_{j > k} alpha_j proj_j
    for (std::size_t k = d; k-- > 0;) {
      g.p_sigma[px * d + k] = tau_next[k] * proj[k] - behind;
      behind += alpha[k] * proj[k];
    }
  }
  return g;
}

// ---------------------------------------------------------------- render loss

// Two-layer conv head mapping F_r (M_color channels) to a 3-channel image.
struct RenderHeadParams {
  nn::ConvParams conv1;
  nn::ConvParams conv2;

  static RenderHeadParams random(const FvrConfig& cfg, std::mt19937_64& rng) {
    return {nn::ConvParams::random(cfg.kernel, cfg.m_color, cfg.head_hidden, rng),
            nn::ConvParams::random(cfg.kernel, cfg.head_hidden, 3, rng, 1.0)};
  }
  std::vector<const Tensor*> parts() const {
    return {&conv1.kernel, &conv1.bias, &conv2.kernel, &conv2.bias};
  }
  std::vector<Tensor*> parts() { return {&conv1.kernel, &conv1.bias, &conv2.kernel, &conv2.bias}; }
};

struct RenderHeadForward {
  Tensor hidden;  // post-ReLU
  Tensor image;
};

inline RenderHeadForward render_head_forward(const RenderHeadParams& p, const Tensor& f_r) {
  RenderHeadForward f;
  f.hidden = nn::conv2d(p.conv1, f_r);
  for (double& v : f.hidden.values()) v = std::max(v, 0.0);
  f.image = nn::conv2d(p.conv2, f.hidden);
  return f;
}

struct RenderHeadGrads {
  RenderHeadParams params;
  Tensor input;
};

inline RenderHeadGrads render_head_backward(const RenderHeadParams& p, const Tensor& f_r,
                                            const RenderHeadForward& fwd,
                                            const Tensor& grad_image) {
  auto g2 = nn::conv2d_backward(p.conv2, fwd.hidden, grad_image);
  Tensor gh = std::move(g2.input);
  for (std::size_t i = 0; i < gh.size(); ++i) {
    if (fwd.hidden[i] <= 0.0) gh[i] = 0.0;
  }
  auto g1 = nn::conv2d_backward(p.conv1, f_r, gh);
  return {{std::move(g1.params), std::move(g2.params)}, std::move(g1.input)};
}

struct DistanceResult {
  double value = 0.0;
  Tensor grad;  // d value / d prediction
};

// Pluggable image distance used by the render and perceptual losses.
using FeatureDistance = std::function<DistanceResult(const Tensor& pred, const Tensor& target)>;

namespace impl {

inline Tensor mean_pool2(const Tensor& x) {
  const std::size_t h = x.dim(0) / 2, w = x.dim(1) / 2, c = x.dim(2);
  Tensor out({h, w, c});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t q = 0; q < w; ++q)
      for (std::size_t k = 0; k < c; ++k)
        out.at(r, q, k) = 0.25 * (x.at(2 * r, 2 * q, k) + x.at(2 * r, 2 * q + 1, k) +
                                  x.at(2 * r + 1, 2 * q, k) + x.at(2 * r + 1, 2 * q + 1, k));
  return out;
}

inline Tensor mean_pool2_backward(const Tensor& g, const Dims& input_dims) {
  Tensor out(input_dims);
  for (std::size_t r = 0; r < g.dim(0); ++r)
    for (std::size_t q = 0; q < g.dim(1); ++q)
      for (std::size_t k = 0; k < g.dim(2); ++k) {
        const double v = 0.25 * g.at(r, q, k);
        out.at(2 * r, 2 * q, k) += v;
        out.at(2 * r, 2 * q + 1, k) += v;
        out.at(2 * r + 1, 2 * q, k) += v;
        out.at(2 * r + 1, 2 * q + 1, k) += v;
      }
  return out;
}

}  // namespace impl

// Sum over `levels` 2x2 mean-pool pyramid levels of the mean absolute error.
// Odd trailing rows/columns are dropped when pooling.
inline FeatureDistance pyramid_l1(std::size_t levels = 3) {
  return [levels](const Tensor& pred, const Tensor& target) {
    Tensor::require_same_shape(pred, target, "pyramid_l1");
    require_rank(pred, 3, "pyramid_l1 image");
    const std::size_t need = std::size_t{1} << (levels - 1);
    if (pred.dim(0) < need || pred.dim(1) < need) {
      raise<ShapeError>("pyramid_l1: ", levels, " levels need images of at least ", need,
                        "x", need, ", got ", pred.dim(0), "x", pred.dim(1));
    }
    std::vector<Tensor> diffs;
    diffs.push_back(pred - target);
    for (std::size_t l = 1; l < levels; ++l) diffs.push_back(impl::mean_pool2(diffs.back()));
    DistanceResult r;
    Tensor grad;
    for (std::size_t l = levels; l-- > 0;) {
      const Tensor& d = diffs[l];
      const double n = static_cast<double>(d.size());
      Tensor g = Tensor::zeros_like(d);
      for (std::size_t i = 0; i < d.size(); ++i) {
        r.value += std::abs(d[i]) / n;
        g[i] = (d[i] > 0.0 ? 1.0 : (d[i] < 0.0 ? -1.0 : 0.0)) / n;
      }
      if (!grad.empty()) g += impl::mean_pool2_backward(grad, d.dims());
      grad = std::move(g);
    }
    r.grad = std::move(grad);
    return r;
  };
}

struct RenderLoss {
  double loss = 0.0;
  Tensor image;          // I_m
  Tensor grad_f_r;
  RenderHeadParams grad_head;
};

inline RenderLoss render_loss(const Tensor& f_r, const Tensor& target,
                              const RenderHeadParams& head,
                              const FeatureDistance& distance = pyramid_l1()) {
  require_rank(f_r, 3, "render_loss F_r");
  require_rank(target, 3, "render_loss target");
  auto fwd = render_head_forward(head, f_r);
  if (fwd.image.dims() != target.dims()) {
    raise<ShapeError>("render_loss: intermediate image ", detail::dims_str(fwd.image.dims()),
                      " does not match target ", detail::dims_str(target.dims()));
  }
  auto dist = distance(fwd.image, target);
  auto g = render_head_backward(head, f_r, fwd, dist.grad);
  return {dist.value, std::move(fwd.image), std::move(g.input), std::move(g.params)};
}

}  // namespace fnevr::fvr
