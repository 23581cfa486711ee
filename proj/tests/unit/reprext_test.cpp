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
#include "phonseg/analysis.hpp"
#include "phonseg/ctc.hpp"
#include "phonseg/error.hpp"
#include "phonseg/reprext.hpp"

namespace phonseg::rep {
namespace {

FrameLabeled labeled(const std::vector<int>& labels, int blank, num::Rng& rng, int dim = 3) {
  FrameLabeled fl;
  fl.labels = labels;
  fl.blank = blank;
  fl.bottleneck = Matrix(static_cast<Eigen::Index>(labels.size()), dim);
  for (Eigen::Index i = 0; i < fl.bottleneck.size(); ++i) fl.bottleneck.data()[i] = rng.uniform(-1, 1);
  return fl;
}

Matrix one_hot_log_grid(const std::vector<int>& labels, int classes) {
  Matrix g = Matrix::Constant(static_cast<Eigen::Index>(labels.size()), classes, -30.0);
  for (std::size_t t = 0; t < labels.size(); ++t) g(static_cast<Eigen::Index>(t), labels[t]) = 0.0;
  return g;
}

TEST(Categorize, OneHotAndTies) {
  asr::AsrOutputs out;
  out.bottleneck = Matrix::Zero(4, 2);
  out.log_posteriors = one_hot_log_grid({2, 0, 3, 1}, 4);
  EXPECT_EQ(categorize(out).labels, (std::vector<int>{2, 0, 3, 1}));
  EXPECT_EQ(categorize(out).blank, 3);
  out.log_posteriors = Matrix::Constant(4, 4, -std::log(4.0));
  EXPECT_EQ(categorize(out).labels, (std::vector<int>{0, 0, 0, 0}));
}

TEST(Merge, WorkedExample) {
  // phi, w, w, open-o, phi, r, k with phi as the blank.
  enum { w, oo, r, k, phi };
  num::Rng rng(1);
  const FrameLabeled fl = labeled({phi, w, w, oo, phi, r, k}, phi, rng);
  const SprSeq s = merge(fl);
  ASSERT_EQ(s.size(), 4);
  EXPECT_EQ(s.categories, (std::vector<int>{w, oo, r, k}));
  const Eigen::RowVectorXd w_mean = (fl.bottleneck.row(1) + fl.bottleneck.row(2)) / 2.0;
  EXPECT_LT((s.vectors.row(0) - w_mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(s.vectors.row(1), fl.bottleneck.row(3));
  EXPECT_EQ(s.vectors.row(2), fl.bottleneck.row(5));
  EXPECT_EQ(s.vectors.row(3), fl.bottleneck.row(6));
  EXPECT_EQ(s.spans[0].start, 1);
  EXPECT_EQ(s.spans[0].end, 3);
}

TEST(Merge, BlankSeparatedRepeatsStayDistinct) {
  num::Rng rng(2);
  const SprSeq s = merge(labeled({0, 2, 0}, 2, rng));
  EXPECT_EQ(s.categories, (std::vector<int>{0, 0}));
}

TEST(Merge, AllBlankIsEmpty) {
  num::Rng rng(3);
  const SprSeq s = merge(labeled({4, 4, 4}, 4, rng));
  EXPECT_EQ(s.size(), 0);
  EXPECT_EQ(s.vectors.rows(), 0);
}

TEST(Merge, ConsistentWithGreedyDecodeOnRandomGrids) {
  num::Rng rng(4);
  for (int n = 0; n < 500; ++n) {
    const int T = rng.range(1, 30);
    const int C = rng.range(2, 6);
    Matrix logits(T, C);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.uniform(-2, 2);
    asr::AsrOutputs out;
    out.log_posteriors = logits;  // argmax is invariant to normalization
    out.bottleneck = Matrix(T, 3);
    for (Eigen::Index i = 0; i < out.bottleneck.size(); ++i) out.bottleneck.data()[i] = rng.uniform(-1, 1);
    const SprSeq s = merge(categorize(out));
    EXPECT_EQ(s.categories, ctc::greedy_decode(logits));
    EXPECT_LE(s.size(), T);
    for (std::size_t k = 0; k < s.categories.size(); ++k) {
      EXPECT_NE(s.categories[k], C - 1);
      const Span& sp = s.spans[k];
      const Eigen::RowVectorXd mean = out.bottleneck.middleRows(sp.start, sp.end - sp.start).colwise().mean();
      EXPECT_LT((s.vectors.row(static_cast<Eigen::Index>(k)) - mean).cwiseAbs().maxCoeff(), 1e-12);
      if (k > 0) EXPECT_LE(s.spans[k - 1].end, sp.start);
    }
    // Adjacent equal categories only occur across a blank gap.
    for (std::size_t k = 1; k < s.categories.size(); ++k) {
      if (s.categories[k] == s.categories[k - 1]) EXPECT_LT(s.spans[k - 1].end, s.spans[k].start);
    }
  }
}

TEST(Merge, OracleAlignmentGivesOneSegmentPerPhoneme) {
  synth::CorpusPlan plan;
  plan.n_train = 30;
  plan.n_val = plan.n_test = 2;
  const auto c = synth::gen_corpus(synth::default_lang(), plan, 5);
  for (const auto& u : c.train) {
    std::vector<int> labels(static_cast<std::size_t>(u.frames()));
    for (const auto& seg : u.alignment) {
      for (int t = seg.start; t < seg.end; ++t) labels[static_cast<std::size_t>(t)] = seg.phoneme;
    }
    asr::AsrOutputs out{Matrix(), u.features, one_hot_log_grid(labels, 17)};
    const SprSeq s = merge(categorize(out));
    EXPECT_EQ(s.categories, u.phonemes);
  }
}

TEST(ExtractSpr, TrainedOnNoiselessDataLabelsInteriorFrames) {
  synth::ToyLangSpec spec = synth::default_lang();
  spec.noise_sigma = 0.0;
  synth::CorpusPlan plan;
  plan.n_train = 80;
  plan.n_val = plan.n_test = 10;
  const auto c = synth::gen_corpus(spec, plan, 6);
  asr::AsrModel m(asr::AsrConfig{});
  asr::AsrTrainConfig h;
  h.epochs = 12;
  asr::asr_train(m, c.train, c.val, h);
  long interior = 0;
  long agree = 0;
  std::size_t sprs = 0;
  std::size_t assigned = 0;
  for (const auto& u : c.test) {
    const FrameLabeled fl = categorize(m.infer(u.features));
    const SprSeq s = extract_spr(m, u.features);
    sprs += static_cast<std::size_t>(s.size());
    assigned += analysis::assign_categories(analysis::spr_fields(s), u.alignment, u.frames(), "SPR", u.id).size();
    EXPECT_EQ(s.categories, ctc::greedy_decode(m.infer(u.features).log_posteriors));
    for (const auto& seg : u.alignment) {
      for (int t = seg.start + 1; t + 1 < seg.end; ++t) {
        ++interior;
        // CTC emits each phoneme on a peak and blanks elsewhere, so a frame
        // agrees when it carries the segment's phoneme or the blank.
        const int l = fl.labels[static_cast<std::size_t>(t)];
        if (l == seg.phoneme || l == fl.blank) ++agree;
      }
    }
  }
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(interior), 0.98);
  ASSERT_GT(sprs, 0u);
  EXPECT_GE(static_cast<double>(assigned) / static_cast<double>(sprs), 0.8);
}

TEST(Upr, OutputLengthEqualsInput) {
  UprEncoder enc(UprConfig{});
  num::Rng rng(7);
  for (int T : {1, 5, 40}) {
    Matrix x(T, 20);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const UprSeq u = extract_upr(enc, x);
    EXPECT_EQ(u.size(), T);
    EXPECT_EQ(u.vectors.cols(), 32);
    EXPECT_EQ(u.receptive_radius, 1);
  }
}

TEST(Upr, ZeroMaskIsPlainAutoencoding) {
  UprEncoder enc(UprConfig{});
  Matrix x = Matrix::Random(6, 20);
  num::Tape t(false);
  num::Rng rng(1);
  const double masked = enc.masked_loss(t, x, 0.0, rng).scalar();
  num::Tape t2(false);
  const double ae = num::mse(enc.reconstruct(t2, enc.encode(t2, t2.constant(x))), t2.constant(x)).scalar();
  EXPECT_EQ(masked, ae);
}

TEST(Upr, TrainingReducesReconstructionLoss) {
  synth::CorpusPlan plan;
  plan.n_train = 40;
  plan.n_val = plan.n_test = 5;
  const auto c = synth::gen_corpus(synth::default_lang(), plan, 8);
  UprEncoder enc(UprConfig{});
  UprTrainConfig h;
  h.epochs = 3;
  const TrainReport r = train_upr_encoder(enc, c.train, c.val, h);
  EXPECT_LT(mean_upr_loss(enc, c.train, h.mask_prob, 0x5eed), r.initial_loss);
  EXPECT_LT(r.epoch_loss.back(), r.initial_loss);

  // Extraction is standardized over the training split.
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(32);
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(32);
  double n = 0.0;
  for (const auto& u : c.train) {
    const Matrix z = extract_upr(enc, u.features).vectors;
    sum += z.colwise().sum();
    sq += z.array().square().matrix().colwise().sum();
    n += static_cast<double>(z.rows());
  }
  const Eigen::RowVectorXd mean = sum / n;
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(((sq / n - mean.cwiseAbs2()).array() - 1.0).abs().maxCoeff(), 1e-9);
}

TEST(Upr, StandardizeIsPerDimensionAffine) {
  UprEncoder enc(UprConfig{});
  enc.store().at("norm.mean").value.setConstant(2.0);
  enc.store().at("norm.scale").value.setConstant(0.5);
  const Matrix z = Matrix::Constant(3, 32, 4.0);
  EXPECT_EQ(enc.standardize(z), Matrix::Constant(3, 32, 1.0));
}

TEST(Sidecars, SprAndUprRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "phonseg_rep_rt";
  std::filesystem::remove_all(dir);
  num::Rng rng(9);
  const SprSeq s = merge(labeled({3, 0, 0, 3, 1, 2, 2}, 3, rng));
  save_spr(dir, "u1", s, 7);
  const SprSeq back = load_spr(dir, "u1");
  EXPECT_EQ(back.categories, s.categories);
  EXPECT_EQ(back.vectors, s.vectors);
  ASSERT_EQ(back.spans.size(), s.spans.size());
  EXPECT_EQ(back.spans[2].end, s.spans[2].end);
  const SprSeq empty = merge(labeled({3, 3}, 3, rng));
  save_spr(dir, "u2", empty, 2);
  EXPECT_EQ(load_spr(dir, "u2").size(), 0);
  const UprSeq u{Matrix::Random(5, 4), 1};
  save_upr(dir, "u3", u);
  EXPECT_EQ(load_upr(dir, "u3").vectors, u.vectors);
  EXPECT_THROW(load_upr(dir, "u1"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(UprCheckpoint, SaveLoad) {
  const auto dir = std::filesystem::temp_directory_path() / "phonseg_upr_ckpt";
  std::filesystem::remove_all(dir);
  UprEncoder enc(UprConfig{});
  enc.store().at("norm.mean").value.setConstant(0.25);
  enc.save(dir);
  const UprEncoder back = UprEncoder::load(dir);
  EXPECT_EQ(back.store().fingerprint(), enc.store().fingerprint());
  const Matrix x = Matrix::Random(4, 20);
  EXPECT_EQ(extract_upr(back, x).vectors, extract_upr(enc, x).vectors);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace phonseg::rep
