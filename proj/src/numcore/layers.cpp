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

#include "phonseg/numcore/layers.hpp"

#include <vector>

#include "phonseg/error.hpp"

namespace phonseg::num {

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  Linear l;
  l.weight = &store.glorot(name + ".w", in, out, rng);
  l.bias = &store.zeros(name + ".b", 1, out);
  return l;
}

Var Linear::operator()(Tape& t, Var x) const {
  if (x.cols() != weight->value.rows()) {
    throw DimensionError("linear " + weight->name + ": input has " + std::to_string(x.cols()) +
                         " cols, expected " + std::to_string(weight->value.rows()));
  }
  return add_row(matmul(x, t.param(*weight)), t.param(*bias));
}

Conv1d Conv1d::create(ParamStore& store, const std::string& name, int in, int out, int kernel,
                      Rng& rng) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("conv kernel must be odd: " + name);
  Conv1d c;
  c.kernel = kernel;
  // Glorot over the receptive field: fan_in = kernel * in.
  c.weight = &store.glorot(name + ".w", static_cast<Eigen::Index>(kernel) * in, out, rng);
  c.bias = &store.zeros(name + ".b", 1, out);
  return c;
}

Var Conv1d::operator()(Tape& t, Var seq) const {
  if (seq.cols() * kernel != weight->value.rows()) {
    throw DimensionError("conv1d " + weight->name + ": input width " + std::to_string(seq.cols()) +
                         " does not match kernel layout");
  }
  return add_row(matmul(im2col(seq, kernel), t.param(*weight)), t.param(*bias));
}

LstmParams LstmParams::create(ParamStore& store, const std::string& name, int in, int hidden,
                              Rng& rng) {
  LstmParams p;
  p.hidden = hidden;
  p.w_input = &store.glorot(name + ".wx", in, 4 * hidden, rng);
  p.w_hidden = &store.glorot(name + ".wh", hidden, 4 * hidden, rng);
  Matrix b = Matrix::Zero(1, 4 * hidden);
  b.middleCols(hidden, hidden).setOnes();
  p.bias = &store.create(name + ".b", std::move(b));
  return p;
}

LstmState zero_state(Tape& t, int hidden) {
  return {t.constant(Matrix::Zero(1, hidden)), t.constant(Matrix::Zero(1, hidden))};
}

LstmState lstm_step(Tape& t, Var x, const LstmState& prev, const LstmParams& p) {
  if (x.rows() != 1 || x.cols() != p.w_input->value.rows()) {
    throw DimensionError("lstm_step " + p.w_input->name + ": input " + shape_str(x.value()));
  }
  if (prev.h.cols() != p.hidden || prev.c.cols() != p.hidden) {
    throw DimensionError("lstm_step " + p.w_input->name + ": state width mismatch");
  }
  Var gates = add(add_row(matmul(x, t.param(*p.w_input)), t.param(*p.bias)),
                  matmul(prev.h, t.param(*p.w_hidden)));
  auto [h, c] = lstm_cell(gates, prev.c);
  return {h, c};
}

Var lstm_sequence(Tape& t, Var seq, const LstmParams& p, bool reverse) {
  if (seq.cols() != p.w_input->value.rows()) {
    throw DimensionError("lstm_sequence " + p.w_input->name + ": input " + shape_str(seq.value()));
  }
  const auto T = seq.rows();
  if (T == 0) throw DimensionError("lstm_sequence: empty sequence");
  // Input projections for all steps in one product.
  Var gx = add_row(matmul(seq, t.param(*p.w_input)), t.param(*p.bias));
  Var wh = t.param(*p.w_hidden);
  LstmState s = zero_state(t, p.hidden);
  std::vector<Var> hs(static_cast<std::size_t>(T));
  for (Eigen::Index k = 0; k < T; ++k) {
    const Eigen::Index step = reverse ? T - 1 - k : k;
    Var gates = add(slice_rows(gx, step, 1), matmul(s.h, wh));
    auto [h, c] = lstm_cell(gates, s.c);
    s = {h, c};
    hs[static_cast<std::size_t>(step)] = h;
  }
  return concat_rows(hs);
}

BiLstm BiLstm::create(ParamStore& store, const std::string& name, int in, int hidden, Rng& rng) {
  BiLstm b;
  b.forward = LstmParams::create(store, name + ".fwd", in, hidden, rng);
  b.backward = LstmParams::create(store, name + ".bwd", in, hidden, rng);
  return b;
}

Var BiLstm::operator()(Tape& t, Var seq) const {
  Var f = lstm_sequence(t, seq, forward, false);
  Var b = lstm_sequence(t, seq, backward, true);
  const Var parts[] = {f, b};
  return concat_cols(parts);
}

Var bidirectional_lstm(Tape& t, Var seq, const BiLstm& p) { return p(t, seq); }

}  // namespace phonseg::num
