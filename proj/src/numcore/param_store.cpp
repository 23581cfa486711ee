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

#include "phonseg/numcore/param_store.hpp"

#include <cmath>

#include "phonseg/error.hpp"
#include "phonseg/hash.hpp"
#include "phonseg/io.hpp"
#include "phonseg/numcore/ptns.hpp"

namespace phonseg::num {

Parameter& ParamStore::create(const std::string& name, Matrix init) {
  if (params_.count(name) != 0) throw ConfigError("duplicate parameter name: " + name);
  Parameter p;
  p.name = name;
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.adam_m = Matrix::Zero(init.rows(), init.cols());
  p.adam_v = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                              Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return create(name, std::move(m));
}

Parameter& ParamStore::zeros(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  return create(name, Matrix::Zero(rows, cols));
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::num_elements() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.setZero();
}

void ParamStore::scale_grad(double factor) {
  for (auto& [_, p] : params_) p.grad *= factor;
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [_, p] : params_) s += p.grad.squaredNorm();
  return std::sqrt(s);
}

void ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (std::isfinite(norm) && norm > max_norm && norm > 0.0) scale_grad(max_norm / norm);
}

void ParamStore::adam_step(const AdamOptions& opt) {
  for (const auto& [name, p] : params_) {
    if (!p.grad.allFinite()) throw TrainingError("non-finite gradient in parameter " + name);
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (auto& [_, p] : params_) {
    p.adam_m = opt.beta1 * p.adam_m + (1.0 - opt.beta1) * p.grad;
    p.adam_v = opt.beta2 * p.adam_v + (1.0 - opt.beta2) * p.grad.cwiseProduct(p.grad);
    if (opt.lr != 0.0) {
      p.value.array() -=
          opt.lr * (p.adam_m.array() / c1) / ((p.adam_v.array() / c2).sqrt() + opt.eps);
    }
    p.grad.setZero();
  }
}

std::map<std::string, Matrix> ParamStore::snapshot() const {
  std::map<std::string, Matrix> out;
  for (const auto& [name, p] : params_) out.emplace(name, p.value);
  return out;
}

void ParamStore::restore(const std::map<std::string, Matrix>& values) {
  for (auto& [name, p] : params_) {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("snapshot lacks parameter " + name);
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols()) {
      throw DimensionError("snapshot shape mismatch for " + name);
    }
    p.value = it->second;
  }
}

void ParamStore::copy_values_from(const ParamStore& other) {
  for (auto& [name, p] : params_) {
    const Parameter& src = other.at(name);
    if (src.value.rows() != p.value.rows() || src.value.cols() != p.value.cols()) {
      throw DimensionError("copy_values_from: shape mismatch for " + name);
    }
    p.value = src.value;
  }
}

void ParamStore::save(const std::filesystem::path& dir, const nlohmann::json& metadata) const {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "phonseg-checkpoint/1";
  manifest["step"] = step_;
  manifest["metadata"] = metadata;
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [name, p] : params_) {
    const std::string file = name + ".ptns";
    save_matrix(dir / file, p.value);
    entries[name] = {{"file", file}, {"shape", {p.value.rows(), p.value.cols()}}};
  }
  manifest["params"] = entries;
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

namespace {

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  if (!manifest.is_object() || manifest.value("format", "") != "phonseg-checkpoint/1") {
    throw IoError("not a phonseg checkpoint: " + dir.string());
  }
  return manifest;
}

}  // namespace

nlohmann::json ParamStore::read_metadata(const std::filesystem::path& dir) {
  return read_manifest(dir).value("metadata", nlohmann::json::object());
}

nlohmann::json ParamStore::load(const std::filesystem::path& dir) {
  const nlohmann::json manifest = read_manifest(dir);
  const auto& entries = manifest.at("params");
  for (auto& [name, p] : params_) {
    if (!entries.contains(name)) throw IoError("checkpoint lacks parameter " + name);
    Matrix m = load_matrix(dir / entries[name].at("file").get<std::string>());
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw DimensionError("checkpoint shape mismatch for " + name + ": " + shape_str(m) +
                           " vs " + shape_str(p.value));
    }
    p.value = std::move(m);
  }
  step_ = manifest.value("step", std::int64_t{0});
  return manifest.value("metadata", nlohmann::json::object());
}

std::uint64_t ParamStore::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, p] : params_) {
    h = fnv1a(name, h);
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(p.value.data()),
                               static_cast<std::size_t>(p.value.size()) * sizeof(double)),
              h);
  }
  return h;
}

}  // namespace phonseg::num
