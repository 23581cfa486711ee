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

#include "phonseg/ctc.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "phonseg/error.hpp"

namespace phonseg::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void check_labels(const LabelSeq& target, Eigen::Index cols) {
  const int K = static_cast<int>(cols) - 1;
  if (K < 1) throw DimensionError("CTC grid needs at least one label column plus blank");
  for (int l : target) {
    if (l < 0 || l >= K) throw DimensionError("CTC target label " + std::to_string(l) + " outside [0, K)");
  }
}

std::vector<int> extend(const LabelSeq& target, int blank) {
  std::vector<int> ext;
  ext.reserve(2 * target.size() + 1);
  ext.push_back(blank);
  for (int l : target) {
    ext.push_back(l);
    ext.push_back(blank);
  }
  return ext;
}

Matrix log_softmax(const Matrix& x) {
  Matrix y = x;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    const double lse = m + std::log((y.row(r).array() - m).exp().sum());
    y.row(r).array() -= lse;
  }
  return y;
}

// alpha(t, s): log prob of all prefixes ending at extended state s at frame t,
// including the emission at t.
Matrix forward(const Matrix& lp, const std::vector<int>& ext) {
  const Eigen::Index T = lp.rows();
  const auto S = static_cast<Eigen::Index>(ext.size());
  const int blank = blank_id(lp);
  Matrix alpha = Matrix::Constant(T, S, kNegInf);
  alpha(0, 0) = lp(0, ext[0]);
  if (S > 1) alpha(0, 1) = lp(0, ext[1]);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kNegInf ? kNegInf : a + lp(t, ext[s]);
    }
  }
  return alpha;
}

// beta(t, s): log prob of all suffixes starting at state s at frame t,
// including the emission at t.
Matrix backward(const Matrix& lp, const std::vector<int>& ext) {
  const Eigen::Index T = lp.rows();
  const auto S = static_cast<Eigen::Index>(ext.size());
  const int blank = blank_id(lp);
  Matrix beta = Matrix::Constant(T, S, kNegInf);
  beta(T - 1, S - 1) = lp(T - 1, ext[S - 1]);
  if (S > 1) beta(T - 1, S - 2) = lp(T - 1, ext[S - 2]);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double b = beta(t + 1, s);
      if (s + 1 < S) b = log_add(b, beta(t + 1, s + 1));
      if (s + 2 < S && ext[s] != blank && ext[s] != ext[s + 2]) b = log_add(b, beta(t + 1, s + 2));
      beta(t, s) = b == kNegInf ? kNegInf : b + lp(t, ext[s]);
    }
  }
  return beta;
}

double total_log_prob(const Matrix& alpha) {
  const Eigen::Index T = alpha.rows();
  const Eigen::Index S = alpha.cols();
  double lp = alpha(T - 1, S - 1);
  if (S > 1) lp = log_add(lp, alpha(T - 1, S - 2));
  return lp;
}

void check_feasible(const Matrix& grid, const LabelSeq& target) {
  if (grid.rows() < 1) throw DimensionError("CTC grid has no frames");
  check_labels(target, grid.cols());
  const int need = min_frames(target);
  if (grid.rows() < need) {
    throw InfeasibleTargetError("target needs " + std::to_string(need) + " frames, grid has " +
                                std::to_string(grid.rows()));
  }
}

}  // namespace

int min_frames(const LabelSeq& target) {
  int n = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++n;
  }
  return n;
}

double ctc_neg_log_likelihood(const Matrix& log_probs, const LabelSeq& target) {
  check_feasible(log_probs, target);
  const auto ext = extend(target, blank_id(log_probs));
  return -total_log_prob(forward(log_probs, ext));
}

num::Var ctc_loss(num::Var logits, const LabelSeq& target) {
  const Matrix& x = logits.value();
  check_feasible(x, target);
  const Matrix lp = log_softmax(x);
  const auto ext = extend(target, blank_id(lp));
  const Matrix alpha = forward(lp, ext);
  const double log_p = total_log_prob(alpha);
  if (log_p == kNegInf) throw InfeasibleTargetError("target has zero probability under the grid");

  Matrix value(1, 1);
  value(0, 0) = -log_p;
  num::Tape& tape = *logits.tape();
  if (!tape.requires_grad(logits)) return tape.emit("ctc_loss", std::move(value), false, nullptr);

  // d(-log p)/d logit(t,k) = softmax(t,k) - sum_{s: ext[s]=k} alpha*beta/y / p.
  const Matrix beta = backward(lp, ext);
  Matrix grad = lp.array().exp().matrix();
  for (Eigen::Index t = 0; t < lp.rows(); ++t) {
    for (std::size_t s = 0; s < ext.size(); ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      const double a = alpha(t, si);
      const double b = beta(t, si);
      if (a == kNegInf || b == kNegInf) continue;
      grad(t, ext[s]) -= std::exp(a + b - lp(t, ext[s]) - log_p);
    }
  }
  return tape.emit("ctc_loss", std::move(value), true,
                   [logits, grad = std::move(grad)](num::Tape& t, const Matrix& g) {
                     t.accumulate(logits, grad * g(0, 0));
                   });
}

double brute_force_ctc(const Matrix& log_probs, const LabelSeq& target) {
  check_labels(target, log_probs.cols());
  const Eigen::Index T = log_probs.rows();
  const auto C = static_cast<double>(log_probs.cols());
  if (T < 1) throw DimensionError("CTC grid has no frames");
  if (static_cast<double>(T) * std::log(C) > std::log(1e7) + 1e-12) {
    throw OracleSizeError("brute-force CTC state space exceeds 1e7 paths");
  }
  const int blank = blank_id(log_probs);
  const int classes = static_cast<int>(log_probs.cols());
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  double total = kNegInf;
  while (true) {
    if (collapse(path, blank) == target) {
      double lp = 0.0;
      for (Eigen::Index t = 0; t < T; ++t) lp += log_probs(t, path[static_cast<std::size_t>(t)]);
      total = log_add(total, lp);
    }
    Eigen::Index pos = 0;
    while (pos < T && ++path[static_cast<std::size_t>(pos)] == classes) {
      path[static_cast<std::size_t>(pos)] = 0;
      ++pos;
    }
    if (pos == T) break;
  }
  return -total;
}

std::vector<int> frame_argmax(const Matrix& grid) {
  std::vector<int> out(static_cast<std::size_t>(grid.rows()));
  for (Eigen::Index t = 0; t < grid.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < grid.cols(); ++k) {
      if (grid(t, k) > grid(t, best)) best = k;
    }
    out[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  return out;
}

LabelSeq collapse(std::span<const int> frame_labels, int blank) {
  LabelSeq out;
  int prev = -1;
  for (int l : frame_labels) {
    if (l != prev && l != blank) out.push_back(l);
    prev = l;
  }
  return out;
}

LabelSeq greedy_decode(const Matrix& log_posteriors) {
  return collapse(frame_argmax(log_posteriors), blank_id(log_posteriors));
}

void check_posterior_grid(const Matrix& log_probs, double tol) {
  for (Eigen::Index t = 0; t < log_probs.rows(); ++t) {
    const double m = log_probs.row(t).maxCoeff();
    const double lse = m + std::log((log_probs.row(t).array() - m).exp().sum());
    if (std::abs(lse) > tol) {
      throw DataError("posterior row " + std::to_string(t) + " is not normalized");
    }
  }
}

}  // namespace phonseg::ctc
