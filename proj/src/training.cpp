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

#include "phonseg/training.hpp"

#include <numeric>

namespace phonseg {

nlohmann::json TrainReport::to_json() const {
  return {{"initial_loss", initial_loss}, {"epoch_loss", epoch_loss},
          {"val_metric_name", val_metric_name}, {"val_metric", val_metric},
          {"best_epoch", best_epoch}, {"best_val", best_val}, {"steps", steps}};
}

std::vector<std::size_t> shuffled_order(std::size_t n, num::Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace phonseg
