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

#include "phonseg/numcore/ops.hpp"

#include <cmath>
#include <string>

#include "phonseg/error.hpp"

namespace phonseg::num {

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw DimensionError("op on an unbound Var");
  return *a.tape();
}

void same_tape(Var a, Var b, const char* op) {
  if (a.tape() != b.tape()) throw DimensionError(std::string(op) + ": operands on different tapes");
}

void same_shape(Var a, Var b, const char* op) {
  same_tape(a, b, op);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                         shape_str(b.value()));
  }
}

bool rg(Var a) { return a.tape()->requires_grad(a); }
bool rg(Var a, Var b) { return rg(a) || rg(b); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_str(a.value()) + " x " + shape_str(b.value()));
  }
  Tape& t = tape_of(a);
  Matrix v = a.value() * b.value();
  return t.emit("matmul", std::move(v), rg(a, b), [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  Matrix v = a.value() + b.value();
  return tape_of(a).emit("add", std::move(v), rg(a, b), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  Matrix v = a.value() - b.value();
  return tape_of(a).emit("sub", std::move(v), rg(a, b), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  Matrix v = a.value().cwiseProduct(b.value());
  return tape_of(a).emit("mul", std::move(v), rg(a, b), [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var scale(Var a, double factor) {
  Matrix v = a.value() * factor;
  return tape_of(a).emit("scale", std::move(v), rg(a),
                         [a, factor](Tape& t, const Matrix& g) { t.accumulate(a, g * factor); });
}

Var tanh(Var a) {
  Matrix v = a.value().array().tanh().matrix();
  Matrix y = v;
  return tape_of(a).emit("tanh", std::move(v), rg(a), [a, y = std::move(y)](Tape& t, const Matrix& g) {
    t.accumulate(a, (g.array() * (1.0 - y.array() * y.array())).matrix());
  });
}

Var sigmoid(Var a) {
  Matrix v = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  Matrix y = v;
  return tape_of(a).emit("sigmoid", std::move(v), rg(a), [a, y = std::move(y)](Tape& t, const Matrix& g) {
    t.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var relu(Var a) {
  Matrix v = a.value().cwiseMax(0.0);
  return tape_of(a).emit("relu", std::move(v), rg(a), [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (t.value(a).array() > 0.0).select(g, 0.0).matrix());
  });
}

Var elementwise(Elementwise op, std::span<const Var> inputs) {
  const bool binary = op == Elementwise::kAdd || op == Elementwise::kMul || op == Elementwise::kSub;
  if (inputs.size() != (binary ? 2u : 1u)) {
    throw DimensionError("elementwise: wrong operand count " + std::to_string(inputs.size()));
  }
  switch (op) {
    case Elementwise::kTanh: return tanh(inputs[0]);
    case Elementwise::kSigmoid: return sigmoid(inputs[0]);
    case Elementwise::kRelu: return relu(inputs[0]);
    case Elementwise::kAdd: return add(inputs[0], inputs[1]);
    case Elementwise::kMul: return mul(inputs[0], inputs[1]);
    case Elementwise::kSub: return sub(inputs[0], inputs[1]);
  }
  throw DimensionError("elementwise: unknown op");
}

Var add_row(Var a, Var row) {
  same_tape(a, row, "add_row");
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: " + shape_str(a.value()) + " + " + shape_str(row.value()));
  }
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return tape_of(a).emit("add_row", std::move(v), rg(a, row), [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var softmax_rows(Var x) {
  Matrix y = x.value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  Matrix out_val = y;
  return tape_of(x).emit("softmax_rows", std::move(out_val), rg(x),
                         [x, y = std::move(y)](Tape& t, const Matrix& g) {
                           Matrix gx = g.cwiseProduct(y);
                           const Eigen::VectorXd dots = gx.rowwise().sum();
                           gx -= (y.array().colwise() * dots.array()).matrix();
                           t.accumulate(x, gx);
                         });
}

Var log_softmax_rows(Var x) {
  Matrix y = x.value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
  Matrix out_val = y;
  return tape_of(x).emit("log_softmax_rows", std::move(out_val), rg(x),
                         [x, y = std::move(y)](Tape& t, const Matrix& g) {
                           const Eigen::VectorXd sums = g.rowwise().sum();
                           Matrix gx = g - (y.array().exp().colwise() * sums.array()).matrix();
                           t.accumulate(x, gx);
                         });
}

Var transpose(Var a) {
  Matrix v = a.value().transpose();
  return tape_of(a).emit("transpose", std::move(v), rg(a),
                         [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool need = false;
  for (const Var& p : parts) {
    same_tape(parts[0], p, "concat_cols");
    if (p.rows() != rows) throw DimensionError("concat_cols: row count mismatch");
    cols += p.cols();
    need = need || rg(p);
  }
  Matrix v(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return tape_of(parts[0]).emit("concat_cols", std::move(v), need,
                                [ps = std::move(ps)](Tape& t, const Matrix& g) {
                                  Eigen::Index c = 0;
                                  for (const Var& p : ps) {
                                    const auto w = t.value(p).cols();
                                    t.accumulate(p, g.middleCols(c, w));
                                    c += w;
                                  }
                                });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool need = false;
  for (const Var& p : parts) {
    same_tape(parts[0], p, "concat_rows");
    if (p.cols() != cols) throw DimensionError("concat_rows: column count mismatch");
    rows += p.rows();
    need = need || rg(p);
  }
  Matrix v(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return tape_of(parts[0]).emit("concat_rows", std::move(v), need,
                                [ps = std::move(ps)](Tape& t, const Matrix& g) {
                                  Eigen::Index r = 0;
                                  for (const Var& p : ps) {
                                    const auto h = t.value(p).rows();
                                    t.accumulate(p, g.middleRows(r, h));
                                    r += h;
                                  }
                                });
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of " + shape_str(a.value()));
  }
  Matrix v = a.value().middleRows(begin, count);
  return tape_of(a).emit("slice_rows", std::move(v), rg(a),
                         [a, begin](Tape& t, const Matrix& g) { t.accumulate_block(a, begin, 0, g); });
}

Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of " + shape_str(a.value()));
  }
  Matrix v = a.value().middleCols(begin, count);
  return tape_of(a).emit("slice_cols", std::move(v), rg(a),
                         [a, begin](Tape& t, const Matrix& g) { t.accumulate_block(a, 0, begin, g); });
}

Var sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return tape_of(a).emit("sum", std::move(v), rg(a), [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw DimensionError("mean: empty operand");
  return scale(sum(a), 1.0 / n);
}

Var mse(Var prediction, Var target) {
  same_shape(prediction, target, "mse");
  const auto n = static_cast<double>(prediction.value().size());
  if (n == 0) throw DimensionError("mse: empty operands");
  Matrix diff = prediction.value() - target.value();
  Matrix v(1, 1);
  v(0, 0) = diff.squaredNorm() / n;
  return tape_of(prediction)
      .emit("mse", std::move(v), rg(prediction, target),
            [prediction, target, diff = std::move(diff), n](Tape& t, const Matrix& g) {
              const double s = 2.0 * g(0, 0) / n;
              t.accumulate(prediction, diff * s);
              t.accumulate(target, diff * -s);
            });
}

Var l1(Var prediction, Var target) {
  same_shape(prediction, target, "l1");
  const auto n = static_cast<double>(prediction.value().size());
  if (n == 0) throw DimensionError("l1: empty operands");
  Matrix diff = prediction.value() - target.value();
  Matrix v(1, 1);
  v(0, 0) = diff.cwiseAbs().sum() / n;
  Matrix sign = diff.unaryExpr([](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); });
  return tape_of(prediction)
      .emit("l1", std::move(v), rg(prediction, target),
            [prediction, target, sign = std::move(sign), n](Tape& t, const Matrix& g) {
              const double s = g(0, 0) / n;
              t.accumulate(prediction, sign * s);
              t.accumulate(target, sign * -s);
            });
}

Var bce_with_logits(Var logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw DimensionError("bce_with_logits: shape mismatch");
  }
  const auto n = static_cast<double>(targets.size());
  if (n == 0) throw DimensionError("bce_with_logits: empty operands");
  const Matrix& x = logits.value();
  double total = 0.0;
  Matrix dx(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x.data()[i];
    const double zi = targets.data()[i];
    total += std::max(xi, 0.0) - xi * zi + std::log1p(std::exp(-std::abs(xi)));
    dx.data()[i] = stable_sigmoid(xi) - zi;
  }
  Matrix v(1, 1);
  v(0, 0) = total / n;
  return tape_of(logits).emit("bce_with_logits", std::move(v), rg(logits),
                              [logits, dx = std::move(dx), n](Tape& t, const Matrix& g) {
                                t.accumulate(logits, dx * (g(0, 0) / n));
                              });
}

Var im2col(Var a, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw DimensionError("im2col: kernel must be odd and >= 1");
  const Matrix& x = a.value();
  const Eigen::Index T = x.rows();
  const Eigen::Index C = x.cols();
  const int pad = kernel / 2;
  Matrix v = Matrix::Zero(T, C * kernel);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = t - pad + k;
      if (src >= 0 && src < T) v.block(t, k * C, 1, C) = x.row(src);
    }
  }
  return tape_of(a).emit("im2col", std::move(v), rg(a), [a, kernel, pad](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    Matrix gx = Matrix::Zero(x.rows(), x.cols());
    const Eigen::Index T = x.rows();
    const Eigen::Index C = x.cols();
    for (Eigen::Index r = 0; r < T; ++r) {
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = r - pad + k;
        if (src >= 0 && src < T) gx.row(src) += g.block(r, k * C, 1, C);
      }
    }
    t.accumulate(a, gx);
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tab = table.value();
  Matrix v(static_cast<Eigen::Index>(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tab.rows()) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " out of range");
    }
    v.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return tape_of(table).emit("gather_rows", std::move(v), rg(table),
                             [table, idx = std::move(idx)](Tape& t, const Matrix& g) {
                               Matrix gt = Matrix::Zero(t.value(table).rows(), t.value(table).cols());
                               for (std::size_t i = 0; i < idx.size(); ++i) {
                                 gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                               }
                               t.accumulate(table, gt);
                             });
}

Var dropout(Var a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw DimensionError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return a;
  const double keep = 1.0 / (1.0 - rate);
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() < rate ? 0.0 : keep;
  }
  Matrix v = a.value().cwiseProduct(mask);
  return tape_of(a).emit("dropout", std::move(v), rg(a),
                         [a, mask = std::move(mask)](Tape& t, const Matrix& g) {
                           t.accumulate(a, g.cwiseProduct(mask));
                         });
}

std::pair<Var, Var> lstm_cell(Var gates, Var c) {
  same_tape(gates, c, "lstm_cell");
  const Eigen::Index H = c.cols();
  if (gates.cols() != 4 * H || gates.rows() != c.rows()) {
    throw DimensionError("lstm_cell: gates " + shape_str(gates.value()) + " vs state " +
                         shape_str(c.value()));
  }
  const Eigen::Index n = c.rows();
  const Matrix& z = gates.value();
  Matrix acts(n, 4 * H);  // i, f, g, o after nonlinearity
  Matrix out(n, 2 * H);   // h', c'
  Matrix tanh_c(n, H);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index j = 0; j < H; ++j) {
      const double i = stable_sigmoid(z(r, j));
      const double f = stable_sigmoid(z(r, H + j));
      const double g = std::tanh(z(r, 2 * H + j));
      const double o = stable_sigmoid(z(r, 3 * H + j));
      const double cn = f * c.value()(r, j) + i * g;
      const double tc = std::tanh(cn);
      acts(r, j) = i;
      acts(r, H + j) = f;
      acts(r, 2 * H + j) = g;
      acts(r, 3 * H + j) = o;
      tanh_c(r, j) = tc;
      out(r, j) = o * tc;
      out(r, H + j) = cn;
    }
  }
  Tape& t = tape_of(c);
  Var fused = t.emit(
      "lstm_cell", std::move(out), rg(gates, c),
      [gates, c, H, acts = std::move(acts), tanh_c = std::move(tanh_c)](Tape& t, const Matrix& g) {
        const Eigen::Index n = acts.rows();
        const Matrix& c_prev = t.value(c);
        Matrix dz(n, 4 * H);
        Matrix dc_prev(n, H);
        for (Eigen::Index r = 0; r < n; ++r) {
          for (Eigen::Index j = 0; j < H; ++j) {
            const double i = acts(r, j), f = acts(r, H + j), gg = acts(r, 2 * H + j),
                         o = acts(r, 3 * H + j), tc = tanh_c(r, j);
            const double dh = g(r, j);
            const double dc = g(r, H + j) + dh * o * (1.0 - tc * tc);
            dz(r, j) = dc * gg * i * (1.0 - i);
            dz(r, H + j) = dc * c_prev(r, j) * f * (1.0 - f);
            dz(r, 2 * H + j) = dc * i * (1.0 - gg * gg);
            dz(r, 3 * H + j) = dh * tc * o * (1.0 - o);
            dc_prev(r, j) = dc * f;
          }
        }
        t.accumulate(gates, dz);
        t.accumulate(c, dc_prev);
      });
  return {slice_cols(fused, 0, H), slice_cols(fused, H, H)};
}

}  // namespace phonseg::num
