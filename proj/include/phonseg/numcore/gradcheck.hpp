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
#include <functional>
#include <string>
#include <vector>

#include "phonseg/numcore/param_store.hpp"
#include "phonseg/numcore/tape.hpp"

namespace phonseg::num {

// Central finite-difference checks. Relative error is norm-wise:
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-10).

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // input index or parameter name with the largest error
  std::size_t entries_checked = 0;
};

double relative_error(const Matrix& analytic, const Matrix& numeric);

/// f must build a 1x1 result from the supplied input Vars and be
/// deterministic across calls.
using InputFn = std::function<Var(Tape&, const std::vector<Var>&)>;
GradCheckReport check_gradients(const InputFn& f, const std::vector<Matrix>& inputs,
                                double h = 1e-5);

/// Checks dL/dparam for every parameter of the store. When
/// max_entries_per_param > 0 a seeded random subset of entries is probed.
using LossFn = std::function<Var(Tape&)>;
GradCheckReport check_param_gradients(ParamStore& store, const LossFn& loss, double h = 1e-5,
                                      std::size_t max_entries_per_param = 0,
                                      std::uint64_t seed = 7);

}  // namespace phonseg::num
