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

#include "phonseg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Eigenvalues>

#include "phonseg/error.hpp"
#include "phonseg/io.hpp"
#include "phonseg/training.hpp"

namespace phonseg::analysis {

std::vector<FieldRep> spr_fields(const rep::SprSeq& s) {
  std::vector<FieldRep> out;
  for (int n = 0; n < s.size(); ++n) out.push_back({s.vectors.row(n), s.spans[static_cast<std::size_t>(n)]});
  return out;
}

std::vector<FieldRep> upr_fields(const rep::UprSeq& u) {
  std::vector<FieldRep> out;
  const int T = u.size();
  const int r = u.receptive_radius;
  for (int t = 0; t < T; ++t) out.push_back({u.vectors.row(t), {std::max(0, t - r), std::min(T, t + r + 1)}});
  return out;
}

std::vector<LabeledRep> assign_categories(const std::vector<FieldRep>& reps,
                                          const std::vector<synth::Segment>& alignment, int frames,
                                          const std::string& source, const std::string& utterance_id) {
  // owner[t] = index of the segment covering frame t.
  std::vector<int> owner(static_cast<std::size_t>(std::max(frames, 0)), -1);
  int cursor = 0;
  for (std::size_t k = 0; k < alignment.size(); ++k) {
    const auto& seg = alignment[k];
    if (seg.start != cursor || seg.end <= seg.start || seg.end > frames) {
      throw DataError("assign_categories: alignment must partition the frames of " + utterance_id);
    }
    for (int t = seg.start; t < seg.end; ++t) owner[static_cast<std::size_t>(t)] = static_cast<int>(k);
    cursor = seg.end;
  }
  if (cursor != frames) throw DataError("assign_categories: alignment does not cover " + utterance_id);

  std::vector<LabeledRep> out;
  for (const auto& r : reps) {
    if (r.field.start < 0 || r.field.end > frames || r.field.end <= r.field.start) {
      throw DataError("assign_categories: receptive field outside the utterance " + utterance_id);
    }
    const int first = owner[static_cast<std::size_t>(r.field.start)];
    if (owner[static_cast<std::size_t>(r.field.end - 1)] != first) continue;
    out.push_back({r.vector, alignment[static_cast<std::size_t>(first)].phoneme, source, utterance_id, r.field});
  }
  return out;
}

nlohmann::json ClusterStats::to_json() const {
  nlohmann::json c = nlohmann::json::array();
  for (Eigen::Index i = 0; i < centroids.rows(); ++i) {
    const Eigen::RowVectorXd row = centroids.row(i);
    c.push_back(std::vector<double>(row.data(), row.data() + row.size()));
  }
  return {{"classes", classes},       {"counts", counts},         {"centroids", c},   {"mean_intra", mean_intra},
          {"mean_inter", mean_inter}, {"silhouette", silhouette}, {"samples", samples}};
}

double silhouette(const Matrix& x, const std::vector<int>& labels) {
  const Eigen::Index n = x.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw DimensionError("silhouette: one label per row");
  std::map<int, int> index;
  for (int l : labels) index.emplace(l, 0);
  int next = 0;
  for (auto& [label, i] : index) i = next++;
  const int C = next;
  std::vector<int> cls(labels.size());
  Eigen::VectorXd size = Eigen::VectorXd::Zero(C);
  Matrix onehot = Matrix::Zero(n, C);
  for (Eigen::Index i = 0; i < n; ++i) {
    cls[static_cast<std::size_t>(i)] = index.at(labels[static_cast<std::size_t>(i)]);
    onehot(i, cls[static_cast<std::size_t>(i)]) = 1.0;
    size(cls[static_cast<std::size_t>(i)]) += 1.0;
  }
  if (C < 2 || size.minCoeff() < 2.0) throw AnalysisError("silhouette needs >= 2 classes with >= 2 members each");

  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  constexpr Eigen::Index kBlock = 256;
  double total = 0.0;
  for (Eigen::Index b = 0; b < n; b += kBlock) {
    const Eigen::Index m = std::min(kBlock, n - b);
    Matrix d = (-2.0 * x.middleRows(b, m) * x.transpose()).eval();
    d.colwise() += sq.segment(b, m);
    d.rowwise() += sq.transpose();
    d = d.cwiseMax(0.0).cwiseSqrt();
    for (Eigen::Index i = 0; i < m; ++i) d(i, b + i) = 0.0;
    const Matrix sums = d * onehot;  // m x C
    for (Eigen::Index i = 0; i < m; ++i) {
      const int own = cls[static_cast<std::size_t>(b + i)];
      const double a = sums(i, own) / (size(own) - 1.0);
      double nearest = std::numeric_limits<double>::infinity();
      for (int c = 0; c < C; ++c) {
        if (c != own) nearest = std::min(nearest, sums(i, c) / size(c));
      }
      const double denom = std::max(a, nearest);
      total += denom > 0.0 ? (nearest - a) / denom : 0.0;
    }
  }
  return total / static_cast<double>(n);
}

ClusterStats cluster_stats(const std::vector<LabeledRep>& labeled, const ClusterOptions& opts) {
  if (opts.per_class < 2 || opts.max_classes < 2) throw AnalysisError("cluster_stats: per_class and max_classes >= 2");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labeled.size(); ++i) members[labeled[i].phoneme].push_back(i);
  std::vector<std::pair<int, std::size_t>> freq;  // (phoneme, count)
  for (const auto& [p, idx] : members) {
    if (idx.size() >= 2) freq.emplace_back(p, idx.size());
  }
  std::stable_sort(freq.begin(), freq.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (freq.size() > opts.max_classes) freq.resize(opts.max_classes);
  if (freq.size() < 2) throw AnalysisError("cluster_stats: need >= 2 classes with >= 2 members");

  num::Rng rng(opts.seed);
  ClusterStats st;
  std::vector<std::size_t> chosen;
  std::vector<int> labels;
  for (const auto& [p, count] : freq) {
    const auto& idx = members.at(p);
    const auto order = shuffled_order(idx.size(), rng);
    const std::size_t take = std::min(opts.per_class, idx.size());
    for (std::size_t k = 0; k < take; ++k) {
      chosen.push_back(idx[order[k]]);
      labels.push_back(p);
    }
    st.classes.push_back(p);
    st.counts.push_back(take);
  }
  const Eigen::Index D = labeled[chosen.front()].vector.size();
  Matrix x(static_cast<Eigen::Index>(chosen.size()), D);
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const auto& v = labeled[chosen[k]].vector;
    if (v.size() != D) throw DimensionError("cluster_stats: mixed vector dimensions");
    x.row(static_cast<Eigen::Index>(k)) = v;
  }

  const auto C = static_cast<Eigen::Index>(st.classes.size());
  st.centroids = Matrix::Zero(C, D);
  std::size_t offset = 0;
  double intra = 0.0;
  for (Eigen::Index c = 0; c < C; ++c) {
    const auto n = static_cast<Eigen::Index>(st.counts[static_cast<std::size_t>(c)]);
    const auto rows = x.middleRows(static_cast<Eigen::Index>(offset), n);
    st.centroids.row(c) = rows.colwise().mean();
    intra += (rows.rowwise() - st.centroids.row(c)).rowwise().norm().sum();
    offset += static_cast<std::size_t>(n);
  }
  st.samples = chosen.size();
  st.mean_intra = intra / static_cast<double>(st.samples);
  double inter = 0.0;
  for (Eigen::Index a = 0; a < C; ++a) {
    for (Eigen::Index b = a + 1; b < C; ++b) inter += (st.centroids.row(a) - st.centroids.row(b)).norm();
  }
  st.mean_inter = inter / static_cast<double>(C * (C - 1) / 2);
  st.silhouette = silhouette(x, labels);
  return st;
}

std::vector<LabeledRep> shuffle_labels(std::vector<LabeledRep> labeled, std::uint64_t seed) {
  num::Rng rng(seed);
  const auto order = shuffled_order(labeled.size(), rng);
  std::vector<int> phonemes(labeled.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) phonemes[i] = labeled[order[i]].phoneme;
  for (std::size_t i = 0; i < labeled.size(); ++i) labeled[i].phoneme = phonemes[i];
  return labeled;
}

Projection pca_project(const Matrix& x, int dims) {
  if (dims < 1 || x.rows() < dims || x.cols() < dims) {
    throw AnalysisError("pca_project: need at least `dims` samples and dimensions");
  }
  Projection p;
  p.mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - p.mean;
  const Matrix cov = centered.transpose() * centered / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw AnalysisError("pca_project: eigendecomposition failed");
  const Eigen::Index D = x.cols();
  // The solver sorts ascending.
  p.eigenvalues = eig.eigenvalues().reverse();
  p.components.resize(D, dims);
  for (int k = 0; k < dims; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(D - 1 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    p.components.col(k) = v;
  }
  p.degenerate = p.eigenvalues.sum() <= 1e-12 * std::max(1.0, p.mean.squaredNorm());
  p.coords = p.degenerate ? Matrix::Zero(x.rows(), dims) : Matrix(centered * p.components);
  return p;
}

Matrix stack_vectors(const std::vector<LabeledRep>& labeled) {
  if (labeled.empty()) return Matrix(0, 0);
  Matrix x(static_cast<Eigen::Index>(labeled.size()), labeled.front().vector.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (labeled[i].vector.size() != x.cols()) throw DimensionError("stack_vectors: mixed vector dimensions");
    x.row(static_cast<Eigen::Index>(i)) = labeled[i].vector;
  }
  return x;
}

rep::FrameLabeled oracle_frame_labels(const synth::Utterance& u, int num_phonemes) {
  rep::FrameLabeled fl{u.features, std::vector<int>(static_cast<std::size_t>(u.frames()), num_phonemes), num_phonemes};
  for (const auto& seg : u.alignment) {
    for (int t = seg.start; t < seg.end; ++t) fl.labels[static_cast<std::size_t>(t)] = seg.phoneme;
  }
  return fl;
}

metrics::LengthPair length_pair(int extracted, const synth::Utterance& u) {
  return {extracted, static_cast<long>(u.phonemes.size())};
}

std::string labeled_reps_csv(const std::vector<LabeledRep>& labeled) {
  std::string out = "utterance_id,phoneme,source,start_frame,end_frame";
  const Eigen::Index D = labeled.empty() ? 0 : labeled.front().vector.size();
  for (Eigen::Index d = 0; d < D; ++d) out += ",v" + std::to_string(d);
  out += "\n";
  for (const auto& r : labeled) {
    out += r.utterance_id + "," + std::to_string(r.phoneme) + "," + r.source + "," + std::to_string(r.field.start) +
           "," + std::to_string(r.field.end);
    for (Eigen::Index d = 0; d < r.vector.size(); ++d) out += "," + io::format_double(r.vector(d));
    out += "\n";
  }
  return out;
}

std::string pca_csv(const std::vector<LabeledRep>& labeled, const Projection& p) {
  if (static_cast<std::size_t>(p.coords.rows()) != labeled.size()) {
    throw DimensionError("pca_csv: projection rows must match the labeled reps");
  }
  std::string out = "utterance_id,phoneme,source";
  for (Eigen::Index k = 0; k < p.coords.cols(); ++k) out += ",pc" + std::to_string(k + 1);
  out += "\n";
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    out += labeled[i].utterance_id + "," + std::to_string(labeled[i].phoneme) + "," + labeled[i].source;
    for (Eigen::Index k = 0; k < p.coords.cols(); ++k) {
      out += "," + io::format_double(p.coords(static_cast<Eigen::Index>(i), k));
    }
    out += "\n";
  }
  return out;
}

}  // namespace phonseg::analysis
