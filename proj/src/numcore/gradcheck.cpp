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

#include "phonseg/numcore/gradcheck.hpp"

#include <algorithm>
#include <numeric>

#include "phonseg/numcore/rng.hpp"

namespace phonseg::num {

double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double denom = std::max({analytic.norm(), numeric.norm(), 1e-10});
  return (analytic - numeric).norm() / denom;
}

namespace {

double eval_inputs(const InputFn& f, const std::vector<Matrix>& inputs) {
  Tape t(false);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& m : inputs) vars.push_back(t.constant(m));
  return f(t, vars).scalar();
}

}  // namespace

GradCheckReport check_gradients(const InputFn& f, const std::vector<Matrix>& inputs, double h) {
  std::vector<Matrix> analytic;
  {
    Tape t;
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(t.variable(m));
    Var out = f(t, vars);
    t.backward(out);
    for (const auto& v : vars) analytic.push_back(t.grad(v));
  }
  GradCheckReport report;
  std::vector<Matrix> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix numeric(inputs[k].rows(), inputs[k].cols());
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double orig = probe[k].data()[i];
      probe[k].data()[i] = orig + h;
      const double up = eval_inputs(f, probe);
      probe[k].data()[i] = orig - h;
      const double down = eval_inputs(f, probe);
      probe[k].data()[i] = orig;
      numeric.data()[i] = (up - down) / (2.0 * h);
      ++report.entries_checked;
    }
    const double err = relative_error(analytic[k], numeric);
    if (err > report.max_rel_error || report.worst.empty()) {
      report.max_rel_error = std::max(report.max_rel_error, err);
      report.worst = "input " + std::to_string(k);
    }
  }
  return report;
}

GradCheckReport check_param_gradients(ParamStore& store, const LossFn& loss, double h,
                                      std::size_t max_entries_per_param, std::uint64_t seed) {
  store.zero_grad();
  {
    Tape t;
    Var out = loss(t);
    t.backward(out);
  }
  auto eval = [&] {
    Tape t(false);
    return loss(t).scalar();
  };
  Rng rng(seed);
  GradCheckReport report;
  for (auto& [name, p] : store) {
    const auto n = static_cast<std::size_t>(p.value.size());
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (max_entries_per_param > 0 && n > max_entries_per_param) {
      for (std::size_t i = 0; i < max_entries_per_param; ++i) {
        std::swap(idx[i], idx[i + rng.below(n - i)]);
      }
      idx.resize(max_entries_per_param);
    }
    Matrix a(1, static_cast<Eigen::Index>(idx.size()));
    Matrix num(1, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      double& w = p.value.data()[idx[j]];
      const double orig = w;
      w = orig + h;
      const double up = eval();
      w = orig - h;
      const double down = eval();
      w = orig;
      a(0, static_cast<Eigen::Index>(j)) = p.grad.data()[idx[j]];
      num(0, static_cast<Eigen::Index>(j)) = (up - down) / (2.0 * h);
      ++report.entries_checked;
    }
    const double err = relative_error(a, num);
    if (err > report.max_rel_error || report.worst.empty()) {
      report.max_rel_error = std::max(report.max_rel_error, err);
      report.worst = name;
    }
  }
  store.zero_grad();
  return report;
}

}  // namespace phonseg::num
