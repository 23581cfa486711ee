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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phonseg/numcore/rng.hpp"

namespace phonseg {

/// Per-epoch record of one training job. val_metric is whatever selects the
/// retained checkpoint (lower is better).
struct TrainReport {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
  std::string val_metric_name;
  std::vector<double> val_metric;
  int best_epoch = -1;
  double best_val = 0.0;
  std::int64_t steps = 0;

  nlohmann::json to_json() const;
};

/// Seeded Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_order(std::size_t n, num::Rng& rng);

}  // namespace phonseg
