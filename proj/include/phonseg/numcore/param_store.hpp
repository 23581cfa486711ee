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
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "phonseg/numcore/matrix.hpp"
#include "phonseg/numcore/rng.hpp"

namespace phonseg::num {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named trainable parameters plus Adam state. Backed by std::map, so
/// Parameter addresses stay valid for the store's lifetime (including moves).
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter& create(const std::string& name, Matrix init);
  /// Uniform Glorot init with limit sqrt(6 / (rows + cols)).
  Parameter& glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng);
  Parameter& zeros(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t num_elements() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  void scale_grad(double factor);
  double grad_norm() const;
  /// Rescales gradients so their global L2 norm is at most max_norm.
  void clip_grad_norm(double max_norm);

  /// One Adam update with bias correction, then zeroes gradients. Throws
  /// TrainingError naming the first parameter with a non-finite gradient.
  void adam_step(const AdamOptions& opt);
  std::int64_t step() const { return step_; }

  /// Deep copy of values (no gradients or moments).
  std::map<std::string, Matrix> snapshot() const;
  void restore(const std::map<std::string, Matrix>& values);
  /// Copies values of same-named parameters from another store.
  void copy_values_from(const ParamStore& other);

  /// Checkpoint directory: one PTNS1 file per parameter plus manifest.json
  /// (name -> file, shape; step counter; caller-provided metadata).
  void save(const std::filesystem::path& dir, const nlohmann::json& metadata = {}) const;
  /// Loads values into already-created parameters; shapes must agree.
  /// Returns the stored metadata.
  nlohmann::json load(const std::filesystem::path& dir);
  /// Metadata of a checkpoint without loading any tensors.
  static nlohmann::json read_metadata(const std::filesystem::path& dir);

  /// FNV-1a over names and raw value bytes; equal iff bit-identical.
  std::uint64_t fingerprint() const;

 private:
  std::map<std::string, Parameter> params_;
  std::int64_t step_ = 0;
};

}  // namespace phonseg::num
