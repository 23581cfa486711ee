// Copyright 2026 The phonseg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "phonseg/numcore/ptns.hpp"

#include <bit>
#include <cstring>

#include "phonseg/error.hpp"
#include "phonseg/io.hpp"

namespace phonseg::num {

namespace {

constexpr char kMagic[6] = {'P', 'T', 'N', 'S', '1', '\0'};

static_assert(std::endian::native == std::endian::little,
              "PTNS1 encoder assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("PTNS1: truncated file");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string encode_ptns(const Tensor& t) {
  std::uint64_t count = 1;
  for (auto d : t.dims) count *= d;
  if (count != t.data.size()) throw DimensionError("PTNS1: dims do not match payload size");
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put<std::uint64_t>(out, d);
  out.reserve(out.size() + t.data.size() * 8);
  if (t.dtype == Dtype::kF32) {
    for (double v : t.data) put<float>(out, static_cast<float>(v));
  } else {
    for (double v : t.data) put<double>(out, v);
  }
  return out;
}

Tensor decode_ptns(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("PTNS1: bad magic");
  }
  std::size_t pos = sizeof(kMagic);
  Tensor t;
  const auto tag = take<std::uint8_t>(bytes, pos);
  if (tag > 1) throw IoError("PTNS1: unknown dtype tag " + std::to_string(tag));
  t.dtype = static_cast<Dtype>(tag);
  const auto rank = take<std::uint32_t>(bytes, pos);
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    t.dims.push_back(take<std::uint64_t>(bytes, pos));
    count *= t.dims.back();
  }
  const std::size_t width = t.dtype == Dtype::kF32 ? 4 : 8;
  if (bytes.size() - pos != count * width) throw IoError("PTNS1: payload size mismatch");
  t.data.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    t.data[i] = t.dtype == Dtype::kF32 ? static_cast<double>(take<float>(bytes, pos))
                                       : take<double>(bytes, pos);
  }
  return t;
}

std::string encode_matrix(const Matrix& m, Dtype dtype) {
  Tensor t;
  t.dtype = dtype;
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.assign(m.data(), m.data() + m.size());
  return encode_ptns(t);
}

Matrix decode_matrix(const std::string& bytes) {
  Tensor t = decode_ptns(bytes);
  Eigen::Index rows = 1;
  Eigen::Index cols = 1;
  if (t.dims.size() == 1) {
    cols = static_cast<Eigen::Index>(t.dims[0]);
  } else if (t.dims.size() == 2) {
    rows = static_cast<Eigen::Index>(t.dims[0]);
    cols = static_cast<Eigen::Index>(t.dims[1]);
  } else if (!t.dims.empty()) {
    throw DimensionError("PTNS1: rank " + std::to_string(t.dims.size()) + " is not a matrix");
  }
  Matrix m(rows, cols);
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

void save_matrix(const std::filesystem::path& path, const Matrix& m, Dtype dtype) {
  io::write_bytes(path, encode_matrix(m, dtype));
}

Matrix load_matrix(const std::filesystem::path& path) { return decode_matrix(io::read_bytes(path)); }

}  // namespace phonseg::num
