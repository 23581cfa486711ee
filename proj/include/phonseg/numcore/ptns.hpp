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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phonseg/numcore/matrix.hpp"

namespace phonseg::num {

// PTNS1 tensor file:
//   "PTNS1\0" | u8 dtype (0 = f32, 1 = f64) | u32 LE rank | rank x u64 LE dims
//   | row-major little-endian payload
enum class Dtype : std::uint8_t { kF32 = 0, kF64 = 1 };

struct Tensor {
  Dtype dtype = Dtype::kF64;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

std::string encode_ptns(const Tensor& t);
Tensor decode_ptns(const std::string& bytes);

// Matrices are stored as rank-2 tensors. Rank 0 and rank 1 files load as a
// single row.
std::string encode_matrix(const Matrix& m, Dtype dtype = Dtype::kF64);
Matrix decode_matrix(const std::string& bytes);

void save_matrix(const std::filesystem::path& path, const Matrix& m, Dtype dtype = Dtype::kF64);
Matrix load_matrix(const std::filesystem::path& path);

}  // namespace phonseg::num
