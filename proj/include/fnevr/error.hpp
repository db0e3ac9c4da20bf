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

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fnevr {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Inputs that are well-shaped but numerically invalid (NaN, singular
// Jacobians, masks that are not normalized, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void append(std::ostringstream&) {}

template <typename T, typename... Rest>
void append(std::ostringstream& oss, const T& head, const Rest&... rest) {
  oss << head;
  append(oss, rest...);
}

template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream oss;
  append(oss, args...);
  return oss.str();
}

inline std::string dims_str(const std::vector<std::size_t>& dims) {
  std::ostringstream oss;
  oss << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) oss << 'x';
    oss << dims[i];
  }
  oss << ']';
  return oss.str();
}

}  // namespace detail

template <typename E = Error, typename... Args>
[[noreturn]] void raise(const Args&... args) {
  throw E(detail::concat(args...));
}

}  // namespace fnevr
