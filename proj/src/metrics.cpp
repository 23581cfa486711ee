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

#include "phonseg/metrics.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>

#include "phonseg/error.hpp"
#include "phonseg/io.hpp"

namespace phonseg::metrics {

int edit_distance(std::span<const int> a, std::span<const int> b) {
  std::vector<int> row(b.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double error_rate(std::span<const int> hyp, std::span<const int> ref) {
  if (ref.empty()) throw UndefinedRateError("error rate of an empty reference is undefined");
  return static_cast<double>(edit_distance(hyp, ref)) / static_cast<double>(ref.size());
}

void RateAccumulator::add(std::span<const int> hyp, std::span<const int> ref) {
  edits += edit_distance(hyp, ref);
  ref_length += static_cast<long>(ref.size());
}

double RateAccumulator::rate() const {
  if (ref_length == 0) throw UndefinedRateError("error rate over empty references is undefined");
  return static_cast<double>(edits) / static_cast<double>(ref_length);
}

double length_difference(std::span<const LengthPair> pairs) {
  if (pairs.empty()) throw UndefinedRateError("LD over zero utterances is undefined");
  long total = 0;
  for (const auto& p : pairs) total += std::labs(p.l_rep - p.l_ipa);
  return static_cast<double>(total) / static_cast<double>(pairs.size());
}

double length_mismatch_rate(std::span<const LengthPair> pairs) {
  if (pairs.empty()) throw UndefinedRateError("LMR over zero utterances is undefined");
  double total = 0.0;
  for (const auto& p : pairs) {
    if (p.l_ipa <= 0) throw UndefinedRateError("LMR needs a nonzero phoneme count");
    total += static_cast<double>(std::labs(p.l_rep - p.l_ipa)) / static_cast<double>(p.l_ipa);
  }
  return 100.0 * total / static_cast<double>(pairs.size());
}

std::string metric_rows_csv(std::span<const MetricRow> rows) {
  std::string out = "utterance_id,metric,value\n";
  for (const auto& r : rows) out += r.utterance_id + "," + r.metric + "," + io::format_double(r.value) + "\n";
  return out;
}

}  // namespace phonseg::metrics
