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
#include <initializer_list>
#include <numeric>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "fnevr/error.hpp"

namespace fnevr {

using Dims = std::vector<std::size_t>;

// Dense row-major array of doubles. Extents are all positive and the
// payload length always equals their product.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Dims dims, double fill = 0.0) : dims_(std::move(dims)) {
    validate_dims(dims_);
    data_.assign(count(dims_), fill);
  }

  Tensor(Dims dims, std::vector<double> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    validate_dims(dims_);
    if (data_.size() != count(dims_)) {
      raise<ShapeError>("tensor payload has ", data_.size(),
                        " entries but dims ", detail::dims_str(dims_),
                        " require ", count(dims_));
    }
  }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.dims()); }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= dims_.size()) {
      raise<ShapeError>("axis ", axis, " out of range for rank ", dims_.size());
    }
    return dims_[axis];
  }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  template <typename... Idx>
  double& at(Idx... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... Idx>
  double at(Idx... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != dims_.size()) {
      raise<ShapeError>("index of rank ", idx.size(), " into tensor ",
                        detail::dims_str(dims_));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
      if (i >= dims_[axis]) {
        raise<ShapeError>("index ", i, " out of range on axis ", axis,
                          " of tensor ", detail::dims_str(dims_));
      }
      off = off * dims_[axis] + i;
      ++axis;
    }
    return off;
  }

  // Same payload, new extents with the same element count.
  Tensor reshaped(Dims dims) const {
    return Tensor(std::move(dims), data_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(*this, o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same_shape(*this, o, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  // this += a * o
  void axpy(double a, const Tensor& o) {
    require_same_shape(*this, o, "axpy");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * o.data_[i];
  }

  double sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }

  double dot(const Tensor& o) const {
    require_same_shape(*this, o, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) s += data_[i] * o.data_[i];
    return s;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

  static void require_same_shape(const Tensor& a, const Tensor& b,
                                 std::string_view where) {
    if (a.dims_ != b.dims_) {
      raise<ShapeError>(where, ": shape mismatch ", detail::dims_str(a.dims_),
                        " vs ", detail::dims_str(b.dims_));
    }
  }

 private:
  static std::size_t count(const Dims& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           std::multiplies<>());
  }
  static void validate_dims(const Dims& dims) {
    for (std::size_t d : dims) {
      if (d == 0) {
        raise<ShapeError>("tensor extents must be positive, got ",
                          detail::dims_str(dims));
      }
    }
  }

  Dims dims_;
  std::vector<double> data_;
};

inline Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
inline Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
inline Tensor operator*(Tensor a, double s) { return a *= s; }
inline Tensor operator*(double s, Tensor a) { return a *= s; }

inline void require_rank(const Tensor& t, std::size_t rank,
                         std::string_view what) {
  if (t.rank() != rank) {
    raise<ShapeError>(what, ": expected rank ", rank, ", got ",
                      detail::dims_str(t.dims()));
  }
}

inline void require_finite(const Tensor& t, std::string_view what) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) {
      raise<DomainError>(what, ": non-finite entry at flat index ", i);
    }
  }
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  Tensor::require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

// Concatenate tensors into one flat vector and split it back; used to hand
// parameter groups to the optimizer.
template <typename Parts>
Tensor flatten_all(const Parts& parts) {
  std::vector<double> flat;
  for (const Tensor* t : parts) {
    flat.insert(flat.end(), t->storage().begin(), t->storage().end());
  }
  if (flat.empty()) raise<ShapeError>("flatten_all: no entries");
  const std::size_t n = flat.size();
  return Tensor({n}, std::move(flat));
}

template <typename Parts>
void unflatten_all(const Tensor& flat, const Parts& parts) {
  std::size_t total = 0;
  for (const Tensor* t : parts) total += t->size();
  if (total != flat.size()) {
    raise<ShapeError>("unflatten_all: flat vector has ", flat.size(),
                      " entries, parameter groups need ", total);
  }
  std::size_t off = 0;
  for (Tensor* t : parts) {
    std::copy_n(flat.data() + off, t->size(), t->data());
    off += t->size();
  }
}

}  // namespace fnevr
