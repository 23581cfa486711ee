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

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "phonseg/error.hpp"
#include "phonseg/numcore/matrix.hpp"

namespace phonseg {

using json = nlohmann::json;

json matrix_to_json(const num::Matrix& m);
num::Matrix matrix_from_json(const json& j);

/// Reads optional fields from a JSON object and rejects any key that was
/// never asked for. Call finish() after the last get().
class StrictObject {
 public:
  StrictObject(const json& j, std::string context);

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  const std::string& context() const { return context_; }

  void finish() const;

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace phonseg
