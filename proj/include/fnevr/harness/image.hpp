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

// Binary PPM (P6, maxval 255) image I/O for H x W x 3 tensors in [0, 1].

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fnevr/tensor.hpp"

namespace fnevr::harness {

inline unsigned char quantize_channel(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Values the image takes after a save/load round trip.
inline Tensor quantize(const Tensor& img) {
  Tensor out = img;
  for (double& v : out.values()) v = quantize_channel(v) / 255.0;
  return out;
}

// First three channels of an H x W x C map (C >= 3).
inline Tensor rgb_channels(const Tensor& f) {
  require_rank(f, 3, "rgb_channels");
  if (f.dim(2) < 3) raise<ShapeError>("rgb_channels: need >= 3 channels, got ", f.dim(2));
  Tensor out({f.dim(0), f.dim(1), 3});
  for (std::size_t p = 0; p < f.dim(0) * f.dim(1); ++p)
    for (std::size_t k = 0; k < 3; ++k) out[p * 3 + k] = f[p * f.dim(2) + k];
  return out;
}

inline void save_ppm(const Tensor& img, const std::filesystem::path& path) {
  require_rank(img, 3, "save_ppm");
  if (img.dim(2) != 3) raise<ShapeError>("save_ppm: image must have 3 channels");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise<IoError>("cannot write ", path.string());
  os << "P6\n" << img.dim(1) << ' ' << img.dim(0) << "\n255\n";
  std::vector<unsigned char> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = quantize_channel(img[i]);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) raise<IoError>("write failed for ", path.string());
}

inline Tensor load_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise<IoError>("cannot open ", path.string());
  auto token = [&]() {
    std::string t;
    char ch;
    while (is.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(is, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  if (token() != "P6") raise<IoError>(path.string(), ": not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    raise<IoError>(path.string(), ": malformed PPM header");
  }
  if (maxval != 255 || w == 0 || h == 0) {
    raise<IoError>(path.string(), ": only 8-bit PPM with positive size is supported");
  }
  std::vector<unsigned char> bytes(w * h * 3);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (is.gcount() != static_cast<std::streamsize>(bytes.size())) {
    raise<IoError>(path.string(), ": truncated pixel data");
  }
  Tensor img({h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) img[i] = bytes[i] / 255.0;
  return img;
}

}  // namespace fnevr::harness
