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

#include <span>
#include <string>
#include <vector>

namespace phonseg::metrics {

/// Unit-cost Levenshtein distance.
int edit_distance(std::span<const int> a, std::span<const int> b);

/// edit_distance / |ref|. Throws UndefinedRateError for an empty reference.
double error_rate(std::span<const int> hyp, std::span<const int> ref);

struct RateAccumulator {
  long edits = 0;
  long ref_length = 0;

  void add(std::span<const int> hyp, std::span<const int> ref);
  /// Micro-average: total edits over total reference length.
  double rate() const;
};

struct LengthPair {
  long l_rep = 0;  // extracted representation count
  long l_ipa = 0;  // reference phoneme count
};

/// Mean absolute length difference. Throws UndefinedRateError when empty.
double length_difference(std::span<const LengthPair> pairs);

/// Mean relative length mismatch, in percent. Throws UndefinedRateError
/// when empty or when any l_ipa is 0.
double length_mismatch_rate(std::span<const LengthPair> pairs);

struct MetricRow {
  std::string utterance_id;
  std::string metric;
  double value = 0.0;
};

/// utterance_id,metric,value with the given rows in order.
std::string metric_rows_csv(std::span<const MetricRow> rows);

}  // namespace phonseg::metrics
