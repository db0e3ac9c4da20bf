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

#include <random>

#include "fnevr/nn.hpp"
#include "fnevr/tensor.hpp"

namespace fnevr::testing {

inline Tensor randn(const Dims& dims, std::mt19937_64& rng, double stddev = 1.0) {
  Tensor t(dims);
  nn::fill_normal(t, stddev, rng);
  return t;
}

inline Tensor uniform(const Dims& dims, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(dims);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

}  // namespace fnevr::testing
