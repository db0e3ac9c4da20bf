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

// FNVT tensor files: "FNVT", u32 rank, rank x u32 extents, then the
// row-major float64 payload. Everything little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "fnevr/tensor.hpp"

namespace fnevr::fnvt {

inline constexpr std::array<char, 4> kMagic = {'F', 'N', 'V', 'T'};

namespace detail {

template <typename U>
void put_le(std::vector<unsigned char>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
  }
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(p[i]) << (8 * i);
  }
  return v;
}

}  // namespace detail

inline std::vector<unsigned char> encode(const Tensor& t) {
  std::vector<unsigned char> out;
  out.reserve(8 + 4 * t.rank() + 8 * t.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.dims()) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  for (double v : t.values()) {
    detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline Tensor decode(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8 ||
      std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    raise<IoError>("not an FNVT stream (bad magic)");
  }
  const auto rank = detail::get_le<std::uint32_t>(bytes.data() + 4);
  const std::size_t header = 8 + 4 * static_cast<std::size_t>(rank);
  if (rank == 0 || bytes.size() < header) {
    raise<IoError>("truncated FNVT header (rank ", rank, ")");
  }
  Dims dims(rank);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    dims[i] = detail::get_le<std::uint32_t>(bytes.data() + 8 + 4 * i);
    count *= dims[i];
  }
  if (bytes.size() != header + 8 * count) {
    raise<IoError>("FNVT payload size ", bytes.size() - header,
                   " does not match extents ", fnevr::detail::dims_str(dims));
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<double>(
        detail::get_le<std::uint64_t>(bytes.data() + header + 8 * i));
  }
  return Tensor(std::move(dims), std::move(data));
}

inline void save(const Tensor& t, const std::filesystem::path& path) {
  const auto bytes = encode(t);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise<IoError>("cannot open ", path.string(), " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) raise<IoError>("write failed for ", path.string());
}

inline Tensor load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise<IoError>("cannot open ", path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const IoError& e) {
    raise<IoError>(path.string(), ": ", e.what());
  }
}

}  // namespace fnevr::fnvt
