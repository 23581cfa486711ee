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
#include <utility>
#include <vector>

#include "phonseg/numcore/rng.hpp"
#include "phonseg/numcore/tape.hpp"

namespace phonseg::num {

// Differentiable ops. There is no implicit broadcasting: every shape
// mismatch throws DimensionError. add_row is the one explicit row-broadcast.

Var matmul(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);

enum class Elementwise { kTanh, kSigmoid, kRelu, kAdd, kMul, kSub };
/// Dispatching form: unary ops take one input, binary ops two.
Var elementwise(Elementwise op, std::span<const Var> inputs);

/// a (n x m) + row (1 x m) added to every row.
Var add_row(Var a, Var row);

Var softmax_rows(Var x);
/// Max-subtracted, so finite inputs never yield -inf.
Var log_softmax_rows(Var x);

Var transpose(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);

/// 1x1 results.
Var sum(Var a);
Var mean(Var a);
Var mse(Var prediction, Var target);
Var l1(Var prediction, Var target);
/// Mean binary cross entropy of sigmoid(logits) against 0/1 targets.
Var bce_with_logits(Var logits, const Matrix& targets);

/// Row t of the result concatenates rows t-pad .. t+pad of `a`
/// (kernel = 2*pad+1), zero outside the sequence. Output has a.rows() rows.
Var im2col(Var a, int kernel);

Var gather_rows(Var table, std::span<const int> ids);

/// Inverted dropout; `rate` is the drop probability.
Var dropout(Var a, double rate, Rng& rng);

/// Fused LSTM gate nonlinearity. gates: 1 x 4H in order (input, forget,
/// cell, output); c: 1 x H. Returns {h', c'}.
std::pair<Var, Var> lstm_cell(Var gates, Var c);

}  // namespace phonseg::num
