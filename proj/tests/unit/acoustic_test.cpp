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
#include "phonseg/acoustic.hpp"
#include "phonseg/error.hpp"
#include "phonseg/numcore/gradcheck.hpp"

namespace phonseg::acoustic {
namespace {

void shrink(AcousticConfig& c) {
  for (auto& s : c.streams) {
    s.embed_dim = 3;
    s.conv_layers = 1;
    s.conv_width = 3;
    s.conv_kernel = 3;
    s.lstm_hidden = 2;
  }
  c.attention_dim = 3;
  c.location_kernel = 3;
  c.prenet = {3};
  c.attention_rnn = 4;
  c.decoder_rnn = 4;
  c.postnet_layers = 2;
  c.postnet_width = 3;
  c.postnet_kernel = 3;
}

AcousticConfig tiny_ttr() {
  AcousticConfig c = ttr_config(4, 2);
  shrink(c);
  return c;
}

AcousticConfig tiny_rtm(const std::string& ablation = "none") {
  AcousticConfig c = rtm_config(3, 3, 2, ablation);
  shrink(c);
  return c;
}

// Three symbols held for four frames each, one distinct vector per symbol.
Example toy_example(int dim) {
  Example ex;
  ex.id = "toy";
  const std::vector<int> ids{0, 1, 2};
  ex.inputs = {StreamInput::from_ids(ids)};
  num::Rng rng(3);
  Matrix protos(3, dim);
  for (Eigen::Index i = 0; i < protos.size(); ++i) protos.data()[i] = rng.uniform(-1.0, 1.0);
  ex.target.resize(12, dim);
  for (int t = 0; t < 12; ++t) ex.target.row(t) = protos.row(t / 4);
  return ex;
}

std::vector<StreamInput> dense_inputs(const std::vector<Eigen::Index>& lengths, int dim, std::uint64_t seed) {
  num::Rng rng(seed);
  std::vector<StreamInput> in;
  for (auto n : lengths) {
    Matrix m(n, dim);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    in.push_back(StreamInput::from_dense(std::move(m)));
  }
  return in;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  num::Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Moves zero-initialized biases off the relu kink before finite differences.
void jitter(num::ParamStore& store, std::uint64_t seed) {
  num::Rng rng(seed);
  for (auto& [name, p] : store) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += 0.1 * rng.normal();
  }
}

TEST(AcousticLoss, ZeroModelOnZeroTarget) {
  for (const AcousticConfig& cfg : {tiny_ttr(), tiny_rtm()}) {
    Seq2Seq m(cfg);
    for (auto& [name, p] : m.store()) p.value.setZero();
    const std::vector<StreamInput> in =
        cfg.role == "ttr" ? std::vector<StreamInput>{StreamInput::from_ids({0, 1, 3})} : dense_inputs({5, 2}, 3, 1);
    num::Tape t(false);
    const LossParts p = m.loss(t, in, Matrix::Zero(6, 2), nullptr);
    EXPECT_EQ(p.mse.scalar(), 0.0);
    EXPECT_EQ(p.l1.scalar(), 0.0);
    // Stop logits are all zero, so every step costs log 2.
    EXPECT_NEAR(p.bce.scalar(), std::log(2.0), 1e-15);
    EXPECT_NEAR(p.total.scalar(), std::log(2.0), 1e-15);
  }
}

TEST(AcousticLoss, ComponentsNonnegativeAndSum) {
  Seq2Seq m(tiny_rtm());
  num::Rng drop(4);
  num::Tape t(false);
  const LossParts p = m.loss(t, dense_inputs({7, 3}, 3, 2), random_matrix(9, 2, 5), &drop);
  EXPECT_GT(p.mse.scalar(), 0.0);
  EXPECT_GT(p.l1.scalar(), 0.0);
  EXPECT_GT(p.bce.scalar(), 0.0);
  EXPECT_NEAR(p.total.scalar(), p.mse.scalar() + p.l1.scalar() + p.bce.scalar(), 1e-12);
}

TEST(AcousticAttention, WeightsAreDistributions) {
  Seq2Seq m(tiny_rtm());
  num::Tape t(false);
  const TeacherForced tf = m.teacher_forced(t, dense_inputs({6, 2}, 3, 3), random_matrix(8, 2, 6), nullptr);
  ASSERT_EQ(tf.alignments.size(), 2u);
  EXPECT_EQ(tf.alignments[0].cols(), 6);
  EXPECT_EQ(tf.alignments[1].cols(), 2);
  for (const Matrix& a : tf.alignments) {
    EXPECT_EQ(a.rows(), 8);
    EXPECT_GE(a.minCoeff(), 0.0);
    for (Eigen::Index i = 0; i < a.rows(); ++i) EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
  }
}

TEST(AcousticAttention, SingleStreamContextIsThatStream) {
  Seq2Seq m(tiny_rtm("spr_only"));
  ASSERT_EQ(m.config().streams.size(), 1u);
  num::Tape t(false);
  const auto in = dense_inputs({4}, 3, 9);
  EncodedStream enc = m.prepare(t, 0, m.encode(t, 0, in[0]));
  AttentionState st = m.initial_state(t, {enc});
  const AttendResult r = m.attend(t, t.constant(random_matrix(1, 4, 1)), {enc}, st);
  const Matrix expected = r.weights[0].value() * enc.memory.value();
  EXPECT_LT((r.context.value() - expected).cwiseAbs().maxCoeff(), 1e-14);
  Matrix cumulative = r.weights[0].value();
  cumulative(0, 0) += 1.0;  // the initial one-hot weight
  EXPECT_LT((st.cumulative[0].value() - cumulative).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(st.prev[0].value(), r.weights[0].value());
}

// Identical streams under identical parameters average to the
// single-stream context, for independent and tied attention alike.
TEST(AcousticAttention, IdenticalStreamsMatchSingleStream) {
  for (bool tied : {false, true}) {
    AcousticConfig two_cfg = tiny_rtm();
    AcousticConfig one_cfg = tiny_rtm("spr_only");
    two_cfg.tie_attention = one_cfg.tie_attention = tied;
    Seq2Seq two(two_cfg);
    Seq2Seq one(one_cfg);
    one.store().copy_values_from(two.store());
    for (auto& [name, p] : two.store()) {
      for (const char* prefix : {"enc.upr.", "attn.upr."}) {
        const std::string pre = prefix;
        if (name.rfind(pre, 0) == 0) {
          const std::string twin = (pre == "enc.upr." ? "enc.spr." : "attn.spr.") + name.substr(pre.size());
          p.value = two.store().at(twin).value;
        }
      }
    }
    const auto in = dense_inputs({5}, 3, 12);
    const Matrix target = random_matrix(6, 2, 13);
    num::Tape t(false);
    const TeacherForced a = two.teacher_forced(t, {in[0], in[0]}, target, nullptr);
    const TeacherForced b = one.teacher_forced(t, {in[0]}, target, nullptr);
    EXPECT_LT((a.postnet.value() - b.postnet.value()).cwiseAbs().maxCoeff(), 1e-12) << tied;
    EXPECT_LT((a.stop_logits.value() - b.stop_logits.value()).cwiseAbs().maxCoeff(), 1e-12) << tied;
  }
}

TEST(AcousticGradient, TtrTeacherForcedLoss) {
  Seq2Seq m(tiny_ttr());
  jitter(m.store(), 1);
  const std::vector<StreamInput> in{StreamInput::from_ids({2, 0, 1, 3})};
  const Matrix target = random_matrix(5, 2, 21);
  const auto report = num::check_param_gradients(m.store(), [&](num::Tape& t) {
    num::Rng drop(8);
    return m.loss(t, in, target, &drop).total;
  });
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst;
  EXPECT_GT(report.entries_checked, 150u);
}

TEST(AcousticGradient, RtmTeacherForcedLossWithReduction) {
  AcousticConfig cfg = tiny_rtm();
  cfg.frames_per_step = 2;
  Seq2Seq m(cfg);
  jitter(m.store(), 2);
  const auto in = dense_inputs({4, 2}, 3, 22);
  const Matrix target = random_matrix(5, 2, 23);
  const auto report = num::check_param_gradients(m.store(), [&](num::Tape& t) {
    num::Rng drop(9);
    return m.loss(t, in, target, &drop).total;
  });
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst;
  EXPECT_GT(report.entries_checked, 250u);
}

TEST(AcousticGradient, AttendWrtQueryMemoryAndHistory) {
  Seq2Seq m(tiny_rtm());
  const num::InputFn f = [&](num::Tape& t, const std::vector<num::Var>& x) {
    std::vector<EncodedStream> enc{m.prepare(t, 0, x[1]), m.prepare(t, 1, x[2])};
    AttentionState st{{x[3], x[4]}, {x[3], x[4]}};
    AttendResult r = m.attend(t, x[0], enc, st);
    return num::sum(num::mul(r.context, t.constant(random_matrix(1, 4, 30))));
  };
  const auto report = num::check_gradients(
      f, {random_matrix(1, 4, 31), random_matrix(5, 4, 32), random_matrix(3, 4, 33), random_matrix(1, 5, 34),
          random_matrix(1, 3, 35)});
  EXPECT_LT(report.max_rel_error, 1e-5) << report.worst;
}

TEST(AcousticShapes, ReductionFactorCoversTarget) {
  AcousticConfig cfg = tiny_ttr();
  cfg.frames_per_step = 3;
  Seq2Seq m(cfg);
  num::Tape t(false);
  const TeacherForced tf = m.teacher_forced(t, {StreamInput::from_ids({1, 2})}, random_matrix(7, 2, 40), nullptr);
  EXPECT_EQ(tf.frames.rows(), 7);
  EXPECT_EQ(tf.stop_logits.rows(), 3);
  EXPECT_EQ(tf.alignments[0].rows(), 3);
  const Inference inf = m.infer({StreamInput::from_ids({1, 2})});
  EXPECT_EQ(inf.frames.rows() % 3, 0);
  EXPECT_EQ(inf.frames.rows(), 3 * inf.stop_probs.rows());
}

TEST(AcousticInference, DeterministicWithCorrectDims) {
  for (const AcousticConfig& cfg : {tiny_ttr(), tiny_rtm()}) {
    Seq2Seq m(cfg);
    const std::vector<StreamInput> in =
        cfg.role == "ttr" ? std::vector<StreamInput>{StreamInput::from_ids({0, 1, 3})} : dense_inputs({5, 2}, 3, 1);
    const Inference a = m.infer(in);
    const Inference b = m.infer(in);
    EXPECT_EQ(a.frames, b.frames);
    EXPECT_EQ(a.stop_probs, b.stop_probs);
    EXPECT_EQ(a.frames.cols(), 2);
    EXPECT_GE(a.frames.rows(), 1);
    EXPECT_LE(a.frames.rows(), cfg.max_decode_steps);
    EXPECT_EQ(a.truncated, a.stop_probs.maxCoeff() <= 0.5);
  }
}

TEST(AcousticInference, TruncatesAtMaxSteps) {
  AcousticConfig cfg = tiny_ttr();
  cfg.max_decode_steps = 4;
  Seq2Seq m(cfg);
  m.store().at("dec.stop.b").value.setConstant(-50.0);
  const Inference inf = m.infer({StreamInput::from_ids({0})});
  EXPECT_TRUE(inf.truncated);
  EXPECT_EQ(inf.frames.rows(), 4);
}

TEST(AcousticInputs, Rejected) {
  Seq2Seq ttr(tiny_ttr());
  EXPECT_THROW(ttr.infer({StreamInput::from_ids({})}), DataError);
  EXPECT_THROW(ttr.infer({StreamInput::from_ids({4})}), DimensionError);
  EXPECT_THROW(ttr.infer({}), DimensionError);
  num::Tape t(false);
  EXPECT_THROW(ttr.loss(t, {StreamInput::from_ids({1})}, Matrix::Zero(0, 2), nullptr), DataError);
  EXPECT_THROW(ttr.loss(t, {StreamInput::from_ids({1})}, Matrix::Zero(3, 5), nullptr), DimensionError);
  Seq2Seq rtm(tiny_rtm());
  EXPECT_THROW(rtm.infer(dense_inputs({3, 0}, 3, 1)), DataError);
  EXPECT_THROW(rtm.infer(dense_inputs({3, 3}, 4, 1)), DimensionError);
}

TEST(AcousticConfig, RoleRules) {
  AcousticConfig c = tiny_ttr();
  c.postnet = true;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_ttr();
  c.inference_dropout = true;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_rtm();
  c.streams[0].kind = "embedding";
  c.streams[0].vocab = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_rtm();
  c.streams[1].lstm_hidden = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_rtm();
  c.streams[1].name = "upr";
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(rtm_config(3, 3, 2, "both"), ConfigError);
  EXPECT_EQ(rtm_config(3, 3, 2, "upr_only").streams.size(), 1u);
  EXPECT_EQ(rtm_config(3, 3, 2, "upr_only").streams[0].name, "upr");
  EXPECT_FALSE(ttr_config(4, 2).postnet);
  EXPECT_TRUE(rtm_config(3, 3, 2).postnet);
  EXPECT_NO_THROW(taco_config(5, 2).validate());
}

TEST(AcousticConfig, JsonRoundTripAndUnknownKeys) {
  const AcousticConfig c = tiny_rtm();
  EXPECT_EQ(AcousticConfig::from_json(c.to_json()).to_json(), c.to_json());
  auto j = c.to_json();
  j["post_net"] = true;
  EXPECT_THROW(AcousticConfig::from_json(j), ConfigError);
  j = c.to_json();
  j["streams"][0]["vocabulary"] = 3;
  EXPECT_THROW(AcousticConfig::from_json(j), ConfigError);
}

TEST(AcousticCheckpoint, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "phonseg_acoustic_ckpt";
  std::filesystem::remove_all(dir);
  Seq2Seq m(tiny_rtm());
  m.save(dir);
  Seq2Seq back = Seq2Seq::load(dir);
  EXPECT_EQ(back.store().fingerprint(), m.store().fingerprint());
  const auto in = dense_inputs({4, 2}, 3, 50);
  EXPECT_EQ(back.infer(in).frames, m.infer(in).frames);
  std::filesystem::remove_all(dir);
}

TEST(AcousticTrain, ZeroLearningRateChangesNothing) {
  AcousticConfig cfg = tiny_ttr();
  Seq2Seq m(cfg);
  Example ex = toy_example(2);
  const auto before = m.store().fingerprint();
  AcousticTrainConfig h;
  h.epochs = 2;
  h.lr = 0.0;
  train(m, {ex}, {ex}, h);
  EXPECT_EQ(m.store().fingerprint(), before);
}

TEST(AcousticTrain, TtrOverfitsOneUtterance) {
  AcousticConfig cfg = ttr_config(3, 4);
  Seq2Seq m(cfg);
  const Example ex = toy_example(4);
  AcousticTrainConfig h;
  h.epochs = 300;
  h.batch_size = 1;
  h.lr = 3e-3;
  const TrainReport r = train(m, {ex}, {ex}, h);
  EXPECT_EQ(r.steps, 300);
  EXPECT_LT(r.best_val, 0.1 * r.initial_loss);
  const Inference inf = m.infer(ex.inputs);
  EXPECT_FALSE(inf.truncated);
  EXPECT_GE(inf.frames.rows(), 10);
  EXPECT_LE(inf.frames.rows(), 14);
}

TEST(AcousticTrain, RtmOverfitsOneUtterance) {
  AcousticConfig cfg = rtm_config(4, 4, 4);
  Seq2Seq m(cfg);
  Example ex = toy_example(4);
  // Frame-level and segment-level views of the same toy utterance.
  const Matrix frames = random_matrix(12, 4, 60);
  ex.inputs = {StreamInput::from_dense(frames), StreamInput::from_dense(random_matrix(3, 4, 61))};
  AcousticTrainConfig h;
  h.epochs = 500;
  h.batch_size = 1;
  h.lr = 3e-3;
  train(m, {ex}, {ex}, h);
  EXPECT_LT(mean_output_l1(m, {ex}), 0.05);
}

TEST(Synthesize, ChainsModelsDeterministically) {
  AcousticConfig tu = ttr_config(4, 3);
  shrink(tu);
  tu.max_decode_steps = 6;
  AcousticConfig ts = tu;
  ts.seed = 9;
  AcousticConfig rc = tiny_rtm();
  rc.max_decode_steps = 5;
  Seq2Seq ttr_u(tu), ttr_s(ts), rtm(rc);
  const Synthesis a = synthesize({0, 1}, &ttr_u, &ttr_s, rtm);
  const Synthesis b = synthesize({0, 1}, &ttr_u, &ttr_s, rtm);
  EXPECT_EQ(a.mel, b.mel);
  EXPECT_EQ(a.mel.cols(), 2);
  EXPECT_EQ(a.upr, ttr_u.infer({StreamInput::from_ids({0, 1})}).frames);
  EXPECT_THROW(synthesize({0, 1}, nullptr, &ttr_s, rtm), ConfigError);
  Seq2Seq spr_only(tiny_rtm("spr_only"));
  EXPECT_NO_THROW(synthesize({0, 1}, nullptr, &ttr_s, spr_only));
}

}  // namespace
}  // namespace phonseg::acoustic
