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
#include <vector>

#include "phonseg/numcore/matrix.hpp"
#include "phonseg/numcore/tape.hpp"

namespace phonseg::ctc {

using num::Matrix;

/// Phoneme ids in [0, K); never contains the blank.
using LabelSeq = std::vector<int>;

/// Blank is always the last posterior column.
inline int blank_id(const Matrix& grid) { return static_cast<int>(grid.cols()) - 1; }

/// Fewest frames that can emit `target`: one per label plus one blank
/// between each pair of equal neighbours.
int min_frames(const LabelSeq& target);

/// -log p(target | logits) by log-space forward-backward over the
/// blank-augmented label sequence. logits: T x (K+1), softmax taken per row.
/// The gradient flows to `logits`. Throws InfeasibleTargetError when T is
/// below min_frames(target).
num::Var ctc_loss(num::Var logits, const LabelSeq& target);

/// Forward recursion only, on a log-posterior grid.
double ctc_neg_log_likelihood(const Matrix& log_probs, const LabelSeq& target);

/// Exhaustive oracle: sums the probability of every frame path that
/// collapses to `target`. Requires (K+1)^T <= 1e7 (OracleSizeError).
/// Returns +inf when no path has nonzero probability.
double brute_force_ctc(const Matrix& log_probs, const LabelSeq& target);

/// Per-frame argmax; ties go to the lowest index.
std::vector<int> frame_argmax(const Matrix& grid);

/// Merges adjacent repeats, then drops blanks.
LabelSeq collapse(std::span<const int> frame_labels, int blank);

LabelSeq greedy_decode(const Matrix& log_posteriors);

/// Throws DataError unless every row log-sum-exps to 0 within tol.
void check_posterior_grid(const Matrix& log_probs, double tol = 1e-5);

}  // namespace phonseg::ctc
