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

#include <string>

#include "phonseg/numcore/ops.hpp"
#include "phonseg/numcore/param_store.hpp"

namespace phonseg::num {

/// y = x W + b, W: in x out, b: 1 x out.
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Linear create(ParamStore& store, const std::string& name, int in, int out, Rng& rng);
  Var operator()(Tape& t, Var x) const;
  int in_dim() const { return static_cast<int>(weight->value.rows()); }
  int out_dim() const { return static_cast<int>(weight->value.cols()); }
};

/// Same-padded 1-D convolution over the rows (time axis) of a T x in
/// sequence. Weight layout: (kernel * in) x out, matching im2col.
struct Conv1d {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  int kernel = 1;

  static Conv1d create(ParamStore& store, const std::string& name, int in, int out, int kernel,
                       Rng& rng);
  Var operator()(Tape& t, Var seq) const;
};

/// Gate order: input, forget, cell, output. Forget bias starts at 1.
struct LstmParams {
  Parameter* w_input = nullptr;   // in x 4H
  Parameter* w_hidden = nullptr;  // H x 4H
  Parameter* bias = nullptr;      // 1 x 4H
  int hidden = 0;

  static LstmParams create(ParamStore& store, const std::string& name, int in, int hidden, Rng& rng);
};

struct LstmState {
  Var h;
  Var c;
};

LstmState zero_state(Tape& t, int hidden);

/// One step on a single 1 x in input row.
LstmState lstm_step(Tape& t, Var x, const LstmState& prev, const LstmParams& p);

/// Runs the recurrence over all rows of seq (T x in); returns T x H.
Var lstm_sequence(Tape& t, Var seq, const LstmParams& p, bool reverse);

struct BiLstm {
  LstmParams forward;
  LstmParams backward;

  static BiLstm create(ParamStore& store, const std::string& name, int in, int hidden, Rng& rng);
  /// T x in -> T x 2H (forward states then backward states).
  Var operator()(Tape& t, Var seq) const;
  int out_dim() const { return 2 * forward.hidden; }
};

Var bidirectional_lstm(Tape& t, Var seq, const BiLstm& p);

}  // namespace phonseg::num
