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

#include <algorithm>
#include <cmath>
#include <map>

#include "gtest/gtest.h"
#include "phonseg/analysis.hpp"
#include "phonseg/error.hpp"

namespace phonseg::analysis {
namespace {

std::vector<synth::Segment> three_segments() { return {{4, 0, 3}, {7, 3, 8}, {2, 8, 10}}; }

Eigen::RowVectorXd vec(double a, double b) {
  Eigen::RowVectorXd v(2);
  v << a, b;
  return v;
}

// Direct O(n^2) silhouette from the definition.
double naive_silhouette(const Matrix& x, const std::vector<int>& labels) {
  const auto n = static_cast<std::size_t>(x.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, std::pair<double, int>> acc;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      auto& e = acc[labels[j]];
      e.first += (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm();
      e.second += 1;
    }
    const double a = acc[labels[i]].first / acc[labels[i]].second;
    double b = 1e300;
    for (const auto& [l, e] : acc) {
      if (l != labels[i]) b = std::min(b, e.first / e.second);
    }
    total += std::max(a, b) > 0 ? (b - a) / std::max(a, b) : 0.0;
  }
  return total / static_cast<double>(n);
}

std::vector<LabeledRep> gaussian_blobs(int classes, int per_class, double spread, std::uint64_t seed) {
  num::Rng rng(seed);
  std::vector<LabeledRep> out;
  for (int c = 0; c < classes; ++c) {
    Eigen::RowVectorXd centre(3);
    for (int d = 0; d < 3; ++d) centre(d) = 4.0 * rng.normal();
    for (int k = 0; k < per_class; ++k) {
      LabeledRep r;
      r.vector = centre;
      for (int d = 0; d < 3; ++d) r.vector(d) += spread * rng.normal();
      r.phoneme = c;
      r.source = "SPR";
      r.utterance_id = "u" + std::to_string(k);
      out.push_back(r);
    }
  }
  return out;
}

TEST(AssignCategories, InsideSpanIsAssigned) {
  const std::vector<FieldRep> reps{{vec(1, 2), {4, 7}}, {vec(3, 4), {0, 3}}};
  const auto out = assign_categories(reps, three_segments(), 10, "SPR", "u");
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].phoneme, 7);
  EXPECT_EQ(out[1].phoneme, 4);
  EXPECT_EQ(out[0].vector, vec(1, 2));
  EXPECT_EQ(out[0].source, "SPR");
}

TEST(AssignCategories, BoundaryCrossingIsDropped) {
  const std::vector<FieldRep> reps{{vec(0, 0), {2, 4}}, {vec(0, 0), {7, 9}}, {vec(0, 0), {0, 10}}};
  EXPECT_TRUE(assign_categories(reps, three_segments(), 10, "UPR", "u").empty());
}

TEST(AssignCategories, BadInputsRejected) {
  EXPECT_THROW(assign_categories({{vec(0, 0), {8, 11}}}, three_segments(), 10, "UPR", "u"), DataError);
  EXPECT_THROW(assign_categories({}, three_segments(), 12, "UPR", "u"), DataError);
  auto gap = three_segments();
  gap[1].start = 4;
  EXPECT_THROW(assign_categories({}, gap, 10, "UPR", "u"), DataError);
}

TEST(AssignCategories, NeverSpansTwoSegments) {
  num::Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<synth::Segment> align;
    int t = 0;
    const int segs = rng.range(1, 6);
    for (int s = 0; s < segs; ++s) {
      const int d = rng.range(1, 5);
      align.push_back({rng.range(0, 9), t, t + d});
      t += d;
    }
    std::vector<FieldRep> reps;
    for (int k = 0; k < 10; ++k) {
      const int a = rng.range(0, t - 1);
      reps.push_back({vec(a, 0), {a, rng.range(a + 1, t)}});
    }
    for (const auto& r : assign_categories(reps, align, t, "UPR", "u")) {
      int owners = 0;
      for (const auto& seg : align) {
        owners += seg.start < r.field.end && r.field.start < seg.end;
        if (seg.start <= r.field.start && r.field.end <= seg.end) EXPECT_EQ(seg.phoneme, r.phoneme);
      }
      EXPECT_EQ(owners, 1);
    }
  }
}

TEST(Fields, UprRadiusClipsAtEdges) {
  const rep::UprSeq u{Matrix::Zero(4, 2), 1};
  const auto f = upr_fields(u);
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[0].field.start, 0);
  EXPECT_EQ(f[0].field.end, 2);
  EXPECT_EQ(f[2].field.start, 1);
  EXPECT_EQ(f[2].field.end, 4);
  EXPECT_EQ(f[3].field.end, 4);
}

TEST(Fields, OracleSprIsAlwaysAssigned) {
  synth::CorpusPlan plan;
  plan.n_train = 20;
  plan.n_val = plan.n_test = 2;
  synth::ToyLangSpec spec = synth::default_lang();
  spec.noise_sigma = 0.0;
  const auto c = synth::gen_corpus(spec, plan, 3);
  std::size_t reps = 0;
  std::size_t assigned = 0;
  for (const auto& u : c.train) {
    const auto s = rep::merge(oracle_frame_labels(u, spec.num_phonemes));
    EXPECT_EQ(s.categories, u.phonemes);
    reps += static_cast<std::size_t>(s.size());
    assigned += assign_categories(spr_fields(s), u.alignment, u.frames(), "SPR", u.id).size();
  }
  EXPECT_EQ(assigned, reps);
}

TEST(Silhouette, MatchesDefinition) {
  num::Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = rng.range(4, 40);
    Matrix x(n, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % rng.range(2, 3) == 0 ? 5 : 9;
    labels[0] = 5;
    labels[1] = 9;
    std::map<int, int> count;
    for (int l : labels) ++count[l];
    if (count[5] < 2 || count[9] < 2) continue;
    const double s = silhouette(x, labels);
    EXPECT_NEAR(s, naive_silhouette(x, labels), 1e-9);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Silhouette, TwoPointClustersGiveOne) {
  Matrix x(4, 2);
  x << 0, 0, 0, 0, 3, 4, 3, 4;
  EXPECT_DOUBLE_EQ(silhouette(x, {1, 1, 2, 2}), 1.0);
  EXPECT_THROW(silhouette(x, {1, 1, 1, 2}), AnalysisError);
  EXPECT_THROW(silhouette(x, {1, 1, 1, 1}), AnalysisError);
}

TEST(Silhouette, InvariantToSampleOrder) {
  const auto blobs = gaussian_blobs(3, 20, 1.0, 4);
  const Matrix x = stack_vectors(blobs);
  std::vector<int> labels;
  for (const auto& r : blobs) labels.push_back(r.phoneme);
  num::Rng rng(2);
  const auto order = shuffled_order(blobs.size(), rng);
  Matrix y(x.rows(), x.cols());
  std::vector<int> permuted;
  for (std::size_t i = 0; i < order.size(); ++i) {
    y.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(order[i]));
    permuted.push_back(labels[order[i]]);
  }
  EXPECT_NEAR(silhouette(x, labels), silhouette(y, permuted), 1e-12);
}

TEST(ClusterStats, SeparatedBlobsAndPermutationBaseline) {
  const auto blobs = gaussian_blobs(5, 200, 0.3, 6);
  const ClusterStats st = cluster_stats(blobs);
  EXPECT_GT(st.silhouette, 0.7);
  EXPECT_EQ(st.samples, 1000u);
  EXPECT_GT(st.mean_inter, st.mean_intra);
  const ClusterStats perm = cluster_stats(shuffle_labels(blobs, 1));
  EXPECT_LT(std::abs(perm.silhouette), 0.1);
}

TEST(ClusterStats, SamplingAndClassSelection) {
  auto blobs = gaussian_blobs(4, 30, 0.5, 7);
  // Class 3 shrinks to 10 members; class 2 to a singleton, which is skipped.
  std::vector<LabeledRep> kept;
  int n2 = 0;
  int n3 = 0;
  for (const auto& r : blobs) {
    if (r.phoneme == 3 && ++n3 > 10) continue;
    if (r.phoneme == 2 && ++n2 > 1) continue;
    kept.push_back(r);
  }
  blobs = kept;
  ClusterOptions opts;
  opts.per_class = 12;
  opts.max_classes = 20;
  const ClusterStats st = cluster_stats(blobs, opts);
  EXPECT_EQ(st.classes, (std::vector<int>{0, 1, 3}));
  EXPECT_EQ(st.counts, (std::vector<std::size_t>{12, 12, 10}));
  opts.max_classes = 2;
  EXPECT_EQ(cluster_stats(blobs, opts).classes, (std::vector<int>{0, 1}));
  EXPECT_EQ(cluster_stats(blobs, opts).silhouette, cluster_stats(blobs, opts).silhouette);
  const auto one_class = gaussian_blobs(1, 10, 0.5, 7);
  EXPECT_THROW(cluster_stats(one_class), AnalysisError);
  const auto j = st.to_json();
  EXPECT_EQ(j.at("centroids").size(), 3u);
  EXPECT_EQ(j.at("centroids")[0].size(), 3u);
  EXPECT_DOUBLE_EQ(j.at("centroids")[2][1].get<double>(), st.centroids(2, 1));
}

TEST(Pca, CenteredTwoDimensionalDataIsRotated) {
  num::Rng rng(3);
  Matrix x(30, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal() * (i < 30 ? 3.0 : 1.0);
  x = x.rowwise() - x.colwise().mean();
  const Projection p = pca_project(x, 2);
  EXPECT_FALSE(p.degenerate);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      EXPECT_NEAR((p.coords.row(i) - p.coords.row(j)).norm(), (x.row(i) - x.row(j)).norm(), 1e-6);
    }
  }
}

TEST(Pca, ReconstructionErrorIsDiscardedVariance) {
  num::Rng rng(4);
  Matrix x(50, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal() * (1.0 + static_cast<double>(i % 5));
  x.rowwise() += Eigen::RowVectorXd::Constant(5, 7.0);
  const Projection p = pca_project(x, 2);
  const Matrix centered = x.rowwise() - p.mean;
  const Matrix recon = p.coords * p.components.transpose();
  const double err = (centered - recon).squaredNorm() / static_cast<double>(x.rows());
  EXPECT_NEAR(err, p.eigenvalues.tail(3).sum(), 1e-6);
  EXPECT_LT(p.coords.colwise().mean().cwiseAbs().maxCoeff(), 1e-8);
  for (int k = 0; k < 2; ++k) {
    Eigen::Index arg = 0;
    p.components.col(k).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(p.components(arg, k), 0.0);
    EXPECT_NEAR(p.components.col(k).norm(), 1.0, 1e-12);
  }
  EXPECT_GE(p.eigenvalues(0), p.eigenvalues(1));
}

TEST(Pca, DuplicatesAndDegenerateInput) {
  Matrix x(4, 3);
  x << 1, 2, 3, 1, 2, 3, 0, 1, 5, 2, 2, 2;
  const Projection p = pca_project(x, 2);
  EXPECT_EQ(p.coords.row(0), p.coords.row(1));
  const Projection flat = pca_project(Matrix::Constant(5, 3, 2.5), 2);
  EXPECT_TRUE(flat.degenerate);
  EXPECT_EQ(flat.coords, Matrix::Zero(5, 2));
  EXPECT_THROW(pca_project(Matrix::Zero(1, 3), 2), AnalysisError);
}

TEST(Granularity, OracleSprMatchesPhonemeCountsButUprDoesNot) {
  synth::CorpusPlan plan;
  plan.n_train = 30;
  plan.n_val = plan.n_test = 2;
  const auto c = synth::gen_corpus(synth::default_lang(), plan, 4);
  std::vector<metrics::LengthPair> spr;
  std::vector<metrics::LengthPair> upr;
  double expected = 0.0;
  for (const auto& u : c.train) {
    spr.push_back(length_pair(rep::merge(oracle_frame_labels(u, 16)).size(), u));
    upr.push_back(length_pair(u.frames(), u));
    expected += std::abs(u.frames() - static_cast<double>(u.phonemes.size()));
  }
  EXPECT_EQ(metrics::length_difference(spr), 0.0);
  EXPECT_EQ(metrics::length_mismatch_rate(spr), 0.0);
  EXPECT_DOUBLE_EQ(metrics::length_difference(upr), expected / static_cast<double>(c.train.size()));
  EXPECT_GT(metrics::length_difference(upr), 10.0);
}

TEST(Export, CsvLayouts) {
  std::vector<LabeledRep> reps{{vec(0.5, -1), 3, "UPR", "u7", {2, 5}}, {vec(2, 0.25), 4, "UPR", "u7", {5, 8}}};
  EXPECT_EQ(labeled_reps_csv(reps),
            "utterance_id,phoneme,source,start_frame,end_frame,v0,v1\n"
            "u7,3,UPR,2,5,0.5,-1\n"
            "u7,4,UPR,5,8,2,0.25\n");
  const Projection p = pca_project(stack_vectors(reps), 1);
  const std::string csv = pca_csv(reps, p);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "utterance_id,phoneme,source,pc1");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_THROW(pca_csv({reps[0]}, p), DimensionError);
}

}  // namespace
}  // namespace phonseg::analysis
