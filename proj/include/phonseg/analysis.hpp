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

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phonseg/metrics.hpp"
#include "phonseg/reprext.hpp"
#include "phonseg/synthdata.hpp"

namespace phonseg::analysis {

using num::Matrix;

struct FieldRep {
  Eigen::RowVectorXd vector;
  rep::Span field;  // receptive field [start, end) in frames
};

struct LabeledRep {
  Eigen::RowVectorXd vector;
  int phoneme = 0;
  std::string source;  // "SPR" | "UPR"
  std::string utterance_id;
  rep::Span field;
};

/// SPR receptive field: the merged span itself.
std::vector<FieldRep> spr_fields(const rep::SprSeq& s);
/// UPR receptive field: frame t +- receptive_radius, clipped to [0, T).
std::vector<FieldRep> upr_fields(const rep::UprSeq& u);

/// Keeps the reps whose receptive field lies inside a single aligned
/// phoneme span, labeled with that phoneme. Throws DataError if the
/// alignment does not partition [0, frames) or a field leaves it.
std::vector<LabeledRep> assign_categories(const std::vector<FieldRep>& reps,
                                          const std::vector<synth::Segment>& alignment, int frames,
                                          const std::string& source, const std::string& utterance_id);

struct ClusterStats {
  std::vector<int> classes;           // phoneme ids, most frequent first
  std::vector<std::size_t> counts;    // sampled members per class
  Matrix centroids;                   // one row per class
  double mean_intra = 0.0;            // mean distance of a sample to its centroid
  double mean_inter = 0.0;            // mean pairwise centroid distance
  double silhouette = 0.0;            // in [-1, 1]
  std::size_t samples = 0;

  nlohmann::json to_json() const;
};

struct ClusterOptions {
  std::size_t per_class = 500;
  std::size_t max_classes = 20;
  std::uint64_t seed = 11;
};

/// Euclidean silhouette over a seeded per-class sample of the most frequent
/// classes with at least two members. Throws AnalysisError with fewer than
/// two such classes.
ClusterStats cluster_stats(const std::vector<LabeledRep>& labeled, const ClusterOptions& opts = {});

/// Mean silhouette of the rows of `x` under `labels`; every label must
/// occur at least twice and at least two labels must occur.
double silhouette(const Matrix& x, const std::vector<int>& labels);

/// Same reps with phoneme labels permuted by a seeded shuffle.
std::vector<LabeledRep> shuffle_labels(std::vector<LabeledRep> labeled, std::uint64_t seed);

struct Projection {
  Matrix coords;                  // n x dims, centered
  Matrix components;              // D x dims, unit columns
  Eigen::VectorXd eigenvalues;    // all D, descending (covariance with 1/n)
  Eigen::RowVectorXd mean;
  bool degenerate = false;        // total variance ~ 0; coords are zero
};

/// Top principal components by eigendecomposition of the covariance. Each
/// component's largest-magnitude loading is positive (first index on ties).
/// Throws AnalysisError if x has fewer than `dims` rows or columns.
Projection pca_project(const Matrix& x, int dims = 2);
Matrix stack_vectors(const std::vector<LabeledRep>& labeled);

/// frame labels from the alignment (no blanks), with features standing in
/// for the bottleneck.
rep::FrameLabeled oracle_frame_labels(const synth::Utterance& u, int num_phonemes);

/// (extracted count, phoneme count) per utterance.
metrics::LengthPair length_pair(int extracted, const synth::Utterance& u);

std::string labeled_reps_csv(const std::vector<LabeledRep>& labeled);
std::string pca_csv(const std::vector<LabeledRep>& labeled, const Projection& p);

}  // namespace phonseg::analysis
