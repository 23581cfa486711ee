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

#include <cmath>
#include <filesystem>

#include "gtest/gtest.h"
#include "phonseg/error.hpp"
#include "phonseg/numcore/gradcheck.hpp"
#include "phonseg/numcore/layers.hpp"
#include "phonseg/numcore/ops.hpp"
#include "phonseg/numcore/param_store.hpp"
#include "phonseg/numcore/ptns.hpp"
#include "phonseg/numcore/rng.hpp"

namespace phonseg::num {
namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Weighted sum so every output entry carries a distinct gradient.
Var weighted_sum(Tape& t, Var x, std::uint64_t seed = 99) {
  Rng rng(seed);
  Var w = t.constant(random_matrix(x.rows(), x.cols(), rng));
  return sum(mul(x, w));
}

constexpr double kTol = 1e-4;

TEST(Matmul, IdentityTimesMatrix) {
  Tape t;
  Matrix m(2, 2);
  m << 1.5, -2, 3, 0.25;
  Var out = matmul(t.constant(Matrix::Identity(2, 2)), t.constant(m));
  EXPECT_EQ(out.value(), m);
}

TEST(Matmul, HandArithmetic) {
  Tape t;
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  Var out = matmul(t.constant(a), t.constant(Matrix::Ones(2, 1)));
  EXPECT_DOUBLE_EQ(out.value()(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(out.value()(1, 0), 7.0);
}

TEST(Matmul, ShapeMismatchThrows) {
  Tape t;
  EXPECT_THROW(matmul(t.constant(Matrix::Ones(2, 3)), t.constant(Matrix::Ones(2, 3))),
               DimensionError);
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  Rng rng(1);
  auto r = check_gradients([](Tape&, const std::vector<Var>& in) { return sum(matmul(in[0], in[1])); },
                           {random_matrix(3, 4, rng), random_matrix(4, 2, rng)});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Elementwise, SigmoidAtZeroIsHalf) {
  Tape t;
  EXPECT_DOUBLE_EQ(sigmoid(t.constant(Matrix::Zero(1, 1))).scalar(), 0.5);
}

TEST(Elementwise, TanhGradientAtZeroIsOne) {
  Tape t;
  Var x = t.variable(Matrix::Zero(1, 1));
  t.backward(tanh(x));
  EXPECT_DOUBLE_EQ(t.grad(x)(0, 0), 1.0);
}

TEST(Elementwise, EveryOpPassesFiniteDifferenceCheck) {
  const Elementwise ops[] = {Elementwise::kTanh, Elementwise::kSigmoid, Elementwise::kRelu,
                             Elementwise::kAdd,  Elementwise::kMul,     Elementwise::kSub};
  for (auto op : ops) {
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
      Rng rng(100 + trial);
      const bool binary = op == Elementwise::kAdd || op == Elementwise::kMul || op == Elementwise::kSub;
      std::vector<Matrix> inputs = {random_matrix(3, 4, rng)};
      if (binary) inputs.push_back(random_matrix(3, 4, rng));
      auto r = check_gradients(
          [op](Tape& t, const std::vector<Var>& in) { return weighted_sum(t, elementwise(op, in)); },
          inputs);
      EXPECT_LT(r.max_rel_error, kTol) << "op " << static_cast<int>(op) << " " << r.worst;
    }
  }
}

TEST(Elementwise, BinaryShapeMismatchThrows) {
  Tape t;
  Var a = t.constant(Matrix::Ones(2, 2));
  Var b = t.constant(Matrix::Ones(2, 3));
  EXPECT_THROW(add(a, b), DimensionError);
  EXPECT_THROW(mul(a, b), DimensionError);
  EXPECT_THROW(sub(a, b), DimensionError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Tape t;
  Var x = t.variable(Matrix::Constant(1, 1, 0.7));
  t.backward(add(x, x));
  EXPECT_DOUBLE_EQ(t.grad(x)(0, 0), 2.0);
}

TEST(Softmax, UniformRow) {
  Tape t;
  Var y = softmax_rows(t.constant(Matrix::Zero(1, 3)));
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(y.value()(0, j), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsStayFinite) {
  Tape t;
  Matrix x(1, 2);
  x << 1000, 0;
  Var y = softmax_rows(t.constant(x));
  EXPECT_NEAR(y.value()(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(y.value()(0, 1), 0.0, 1e-12);
  Var ly = log_softmax_rows(t.constant(x));
  EXPECT_TRUE(ly.value().allFinite());
  EXPECT_NEAR(ly.value()(0, 1), -1000.0, 1e-9);
}

TEST(Softmax, RowsSumToOneOnRandomInputs) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    Var y = softmax_rows(t.constant(random_matrix(4, 7, rng, -30, 30)));
    for (Eigen::Index r = 0; r < 4; ++r) EXPECT_NEAR(y.value().row(r).sum(), 1.0, 1e-6);
  }
}

TEST(Softmax, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  auto r1 = check_gradients(
      [](Tape& t, const std::vector<Var>& in) { return weighted_sum(t, softmax_rows(in[0])); },
      {random_matrix(3, 5, rng)});
  EXPECT_LT(r1.max_rel_error, kTol);
  auto r2 = check_gradients(
      [](Tape& t, const std::vector<Var>& in) { return weighted_sum(t, log_softmax_rows(in[0])); },
      {random_matrix(3, 5, rng)});
  EXPECT_LT(r2.max_rel_error, kTol);
}

TEST(StructuralOps, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  auto check = [&](const InputFn& f, std::vector<Matrix> in) {
    auto r = check_gradients(f, in);
    EXPECT_LT(r.max_rel_error, kTol) << r.worst;
  };
  check([](Tape& t, const std::vector<Var>& in) { return weighted_sum(t, transpose(in[0])); },
        {random_matrix(2, 3, rng)});
  check([](Tape& t, const std::vector<Var>& in) { return weighted_sum(t, concat_cols(in)); },
        {random_matrix(2, 3, rng), random_matrix(2, 1, rng)});
  check([](Tape& t, const std::vector<Var>& in) { return weighted_sum(t, concat_rows(in)); },
        {random_matrix(2, 3, rng), random_matrix(1, 3, rng)});
  check([](Tape& t, const std::vector<Var>& in) { return weighted_sum(t, slice_rows(in[0], 1, 2)); },
        {random_matrix(4, 3, rng)});
  check([](Tape& t, const std::vector<Var>& in) { return weighted_sum(t, slice_cols(in[0], 1, 2)); },
        {random_matrix(3, 4, rng)});
  check([](Tape& t, const std::vector<Var>& in) { return weighted_sum(t, add_row(in[0], in[1])); },
        {random_matrix(3, 4, rng), random_matrix(1, 4, rng)});
  check([](Tape& t, const std::vector<Var>& in) { return weighted_sum(t, scale(in[0], -1.7)); },
        {random_matrix(3, 4, rng)});
  check([](Tape& t, const std::vector<Var>& in) { return weighted_sum(t, im2col(in[0], 3)); },
        {random_matrix(5, 2, rng)});
  check([](Tape&, const std::vector<Var>& in) { return mean(in[0]); }, {random_matrix(3, 4, rng)});
  check([](Tape&, const std::vector<Var>& in) { return mse(in[0], in[1]); },
        {random_matrix(3, 4, rng), random_matrix(3, 4, rng)});
  check([](Tape&, const std::vector<Var>& in) { return l1(in[0], in[1]); },
        {random_matrix(3, 4, rng), random_matrix(3, 4, rng)});
  Matrix z = Matrix::Zero(2, 3);
  z(0, 1) = 1;
  z(1, 2) = 1;
  check([z](Tape&, const std::vector<Var>& in) { return bce_with_logits(in[0], z); },
        {random_matrix(2, 3, rng)});
  const int ids[] = {2, 0, 2};
  check([&ids](Tape& t, const std::vector<Var>& in) { return weighted_sum(t, gather_rows(in[0], ids)); },
        {random_matrix(3, 2, rng)});
  check(
      [](Tape& t, const std::vector<Var>& in) {
        auto [h, c] = lstm_cell(in[0], in[1]);
        const Var parts[] = {h, c};
        return weighted_sum(t, concat_cols(parts));
      },
      {random_matrix(2, 8, rng), random_matrix(2, 2, rng)});
  // Dropout with a fixed-seed mask is a linear map.
  check(
      [](Tape& t, const std::vector<Var>& in) {
        Rng mask_rng(3);
        return weighted_sum(t, dropout(in[0], 0.5, mask_rng));
      },
      {random_matrix(3, 4, rng)});
}

TEST(Losses, BceZeroForConfidentCorrectLogits) {
  Tape t;
  Matrix logits(1, 2);
  logits << 40, -40;
  Matrix z(1, 2);
  z << 1, 0;
  EXPECT_LT(bce_with_logits(t.constant(logits), z).scalar(), 1e-15);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamStore store;
  Rng rng(1);
  store.glorot("w", 3, 3, rng);
  const auto before = store.fingerprint();
  store.zero_grad();
  store.adam_step({});
  EXPECT_EQ(store.fingerprint(), before);
}

TEST(Adam, OneStepOnSquareDecreasesMagnitude) {
  ParamStore store;
  auto& w = store.create("w", Matrix::Ones(1, 1));
  Tape t;
  Var x = t.param(w);
  t.backward(sum(mul(x, x)));
  store.adam_step({.lr = 0.1});
  EXPECT_LT(std::abs(w.value(0, 0)), 1.0);
}

TEST(Adam, NanGradientNamesParameter) {
  ParamStore store;
  store.create("alpha", Matrix::Ones(1, 1));
  store.at("alpha").grad(0, 0) = std::nan("");
  try {
    store.adam_step({});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos);
  }
}

TEST(Adam, LeastSquaresReachesClosedFormOptimum) {
  // Oracle: normal-equation solution via QR.
  Rng rng(11);
  const Matrix A = random_matrix(20, 3, rng);
  const Matrix b = random_matrix(20, 1, rng);
  const Eigen::MatrixXd Ad = A;
  const Eigen::VectorXd x_star = Ad.colPivHouseholderQr().solve(Eigen::VectorXd(b.col(0)));
  const double optimum = (Ad * x_star - Eigen::VectorXd(b.col(0))).squaredNorm() / 20.0;

  ParamStore store;
  auto& x = store.zeros("x", 3, 1);
  double loss = 0.0;
  for (int step = 0; step < 200; ++step) {
    Tape t;
    Var l = mse(matmul(t.constant(A), t.param(x)), t.constant(b));
    loss = l.scalar();
    t.backward(l);
    store.adam_step({.lr = 0.05});
  }
  EXPECT_LT(loss - optimum, 1e-3);
}

TEST(Adam, IdenticalSeedsGiveBitIdenticalTrajectories) {
  auto run = [](std::uint64_t seed) {
    ParamStore store;
    Rng rng(seed);
    auto lin = Linear::create(store, "lin", 4, 2, rng);
    Rng data(seed + 1);
    const Matrix x = random_matrix(8, 4, data);
    const Matrix y = random_matrix(8, 2, data);
    std::vector<std::uint64_t> fps;
    for (int i = 0; i < 20; ++i) {
      Tape t;
      Var l = mse(lin(t, t.constant(x)), t.constant(y));
      t.backward(l);
      store.adam_step({});
      fps.push_back(store.fingerprint());
    }
    return fps;
  };
  EXPECT_EQ(run(42), run(42));
  EXPECT_NE(run(42), run(43));
}

TEST(Lstm, ZeroEverythingGivesZeroHidden) {
  ParamStore store;
  Rng rng(2);
  auto p = LstmParams::create(store, "lstm", 3, 4, rng);
  p.bias->value.setZero();
  Tape t;
  auto s = lstm_step(t, t.constant(Matrix::Zero(1, 3)), zero_state(t, 4), p);
  EXPECT_TRUE(s.h.value().isZero(0.0));
}

TEST(Lstm, ThreeStepGradientCheck) {
  ParamStore store;
  Rng rng(3);
  auto p = LstmParams::create(store, "lstm", 2, 3, rng);
  const Matrix seq = random_matrix(3, 2, rng);
  auto r = check_param_gradients(store, [&](Tape& t) {
    return weighted_sum(t, lstm_sequence(t, t.constant(seq), p, false));
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
  auto rin = check_gradients(
      [&](Tape& t, const std::vector<Var>& in) {
        LstmState s = zero_state(t, 3);
        for (int k = 0; k < 3; ++k) s = lstm_step(t, slice_rows(in[0], k, 1), s, p);
        return weighted_sum(t, s.h);
      },
      {seq});
  EXPECT_LT(rin.max_rel_error, kTol);
}

TEST(Lstm, BidirectionalGradientCheck) {
  ParamStore store;
  Rng rng(4);
  auto bi = BiLstm::create(store, "bi", 2, 3, rng);
  const Matrix seq = random_matrix(4, 2, rng);
  auto r = check_param_gradients(store, [&](Tape& t) {
    return weighted_sum(t, bidirectional_lstm(t, t.constant(seq), bi));
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Conv1d, DeltaKernelReproducesInput) {
  ParamStore store;
  Rng rng(5);
  auto conv = Conv1d::create(store, "conv", 3, 3, 3, rng);
  conv.weight->value.setZero();
  // Centre tap (k = 1) is the identity.
  conv.weight->value.block(3, 0, 3, 3) = Matrix::Identity(3, 3);
  Tape t;
  const Matrix x = random_matrix(6, 3, rng);
  EXPECT_TRUE(conv(t, t.constant(x)).value().isApprox(x, 1e-15));
}

TEST(Conv1d, GradientCheck) {
  ParamStore store;
  Rng rng(6);
  auto conv = Conv1d::create(store, "conv", 2, 3, 5, rng);
  const Matrix x = random_matrix(4, 2, rng);
  auto r = check_param_gradients(store, [&](Tape& t) { return weighted_sum(t, conv(t, t.constant(x))); });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Ptns, HeaderLayoutIsBitExact) {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const std::string bytes = encode_matrix(m, Dtype::kF32);
  ASSERT_EQ(bytes.size(), 6u + 1 + 4 + 2 * 8 + 6 * 4);
  EXPECT_EQ(bytes.substr(0, 6), std::string("PTNS1\0", 6));
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 0u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 2u);  // rank, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 2u);  // dim 0
  EXPECT_EQ(static_cast<unsigned char>(bytes[19]), 3u);  // dim 1
  float first;
  std::memcpy(&first, bytes.data() + 27, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(Ptns, RandomRoundTripsAreExact) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = random_matrix(1 + static_cast<Eigen::Index>(rng.below(5)),
                                   1 + static_cast<Eigen::Index>(rng.below(5)), rng, -1e6, 1e6);
    EXPECT_EQ(decode_matrix(encode_matrix(m)), m);
    const Matrix f = decode_matrix(encode_matrix(m, Dtype::kF32));
    EXPECT_EQ(f, m.cast<float>().cast<double>());
  }
}

TEST(Ptns, CorruptInputRejected) {
  EXPECT_THROW(decode_matrix("NOTPTNS"), IoError);
  std::string bytes = encode_matrix(Matrix::Ones(2, 2));
  bytes.pop_back();
  EXPECT_THROW(decode_matrix(bytes), IoError);
}

TEST(Checkpoint, SaveLoadRestoresValuesAndStep) {
  const auto dir = std::filesystem::temp_directory_path() / "phonseg_ckpt_test";
  std::filesystem::remove_all(dir);
  ParamStore a;
  Rng rng(9);
  a.glorot("layer.w", 3, 2, rng);
  a.zeros("layer.b", 1, 2);
  a.adam_step({});
  a.save(dir, {{"kind", "test"}});
  ParamStore b;
  b.zeros("layer.w", 3, 2);
  b.zeros("layer.b", 1, 2);
  auto meta = b.load(dir);
  EXPECT_EQ(meta["kind"], "test");
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(b.step(), 1);
  ParamStore c;
  c.zeros("layer.w", 2, 2);
  c.zeros("layer.b", 1, 2);
  EXPECT_THROW(c.load(dir), DimensionError);
  std::filesystem::remove_all(dir);
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
}

TEST(Rng, NormalMomentsAreStandard) {
  Rng rng(77);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

}  // namespace
}  // namespace phonseg::num
