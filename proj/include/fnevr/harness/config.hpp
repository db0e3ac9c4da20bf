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

// Shared run configuration for the CLI. A JSON config file supplies any
// subset of the keys; command-line flags override it.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fnevr/error.hpp"
#include "fnevr/fvr.hpp"
#include "fnevr/harness/scene.hpp"

namespace fnevr::harness {

struct RunConfig {
  std::size_t H = 32;
  std::size_t W = 32;
  std::size_t C = 8;
  std::size_t K = motion2d::kDefaultKeypoints;
  std::size_t D = 16;
  std::size_t n_sigma = fvr::kShapeChannels;
  std::size_t n_color = 8;
  std::size_t m_color = 32;
  std::size_t hidden = 64;
  std::uint64_t seed = 0;

  SceneConfig scene() const {
    SceneConfig s;
    s.height = H;
    s.width = W;
    s.channels = C;
    s.keypoints = K;
    s.depth = D;
    return s;
  }

  fvr::FvrConfig fvr() const {
    fvr::FvrConfig f;
    f.depth = D;
    f.n_sigma = n_sigma;
    f.n_color = n_color;
    f.m_color = m_color;
    f.hidden = hidden;
    return f;
  }
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  return {{"H", c.H},           {"W", c.W},             {"C", c.C},
          {"K", c.K},           {"D", c.D},             {"n_sigma", c.n_sigma},
          {"n_color", c.n_color}, {"m_color", c.m_color}, {"hidden", c.hidden},
          {"seed", c.seed}};
}

// Keys absent from `j` keep the values already in `base`.
inline RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {}) {
  if (!j.is_object()) raise<IoError>("config: expected a JSON object");
  auto read = [&](const std::string& key, auto& field) {
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) {
      raise<IoError>("config: '", key, "' must be a non-negative integer");
    }
    field = v.get<std::remove_reference_t<decltype(field)>>();
  };
  for (const auto& [key, _] : j.items()) {
    if (key == "H") read(key, base.H);
    else if (key == "W") read(key, base.W);
    else if (key == "C") read(key, base.C);
    else if (key == "K") read(key, base.K);
    else if (key == "D") read(key, base.D);
    else if (key == "n_sigma") read(key, base.n_sigma);
    else if (key == "n_color") read(key, base.n_color);
    else if (key == "m_color") read(key, base.m_color);
    else if (key == "hidden") read(key, base.hidden);
    else if (key == "seed") read(key, base.seed);
    else raise<IoError>("config: unknown key '", key, "'");
  }
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) raise<IoError>("cannot read config ", path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    raise<IoError>("config ", path.string(), ": ", e.what());
  }
  return config_from_json(j);
}

}  // namespace fnevr::harness
