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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phonseg/numcore/matrix.hpp"
#include "phonseg/numcore/rng.hpp"

namespace phonseg::synth {

using num::Matrix;
using CharSeq = std::vector<int>;
using PhonemeSeq = std::vector<int>;

/// A character n-gram and the phonemes it is pronounced as.
struct G2PRule {
  std::vector<int> chars;
  std::vector<int> phonemes;
};

/// Toy language. Characters print as 'a' + id.
struct ToyLangSpec {
  int num_phonemes = 16;
  int num_chars = 12;
  std::vector<G2PRule> rules;
  int min_duration = 3;
  int max_duration = 8;
  int feat_dim = 20;
  int mel_dim = 20;
  double noise_sigma = 0.05;
  int min_chars = 3;
  int max_chars = 12;
  // When false, texts whose pronunciation repeats a phoneme back to back are
  // rejected: frame-synchronous rendering makes "a a" indistinguishable from
  // a long "a".
  bool allow_adjacent_repeats = false;
  Matrix feat_prototypes;  // num_phonemes x feat_dim
  Matrix mel_prototypes;   // num_phonemes x mel_dim
};

/// The built-in 12-character, 16-phoneme language. Rule set:
/// a..j -> phonemes 0..9, k -> [10 11], l -> [12], plus the contextual
/// bigrams ab -> [13], ca -> [14 0], ef -> [15], hk -> [7 11].
std::vector<G2PRule> default_rules();
ToyLangSpec default_lang(std::uint64_t seed = 2024);

/// Draws N(0, 1) prototypes for the spec's current sizes.
void sample_prototypes(ToyLangSpec& spec, std::uint64_t seed);

/// Throws SpecError on any violated invariant (unmapped characters,
/// inseparable prototypes, bad ranges, missing contextual rule).
void validate(const ToyLangSpec& spec);

/// Longest-match, left-to-right rule application. Throws G2PError for an
/// out-of-inventory or unmapped character.
PhonemeSeq g2p_apply(const ToyLangSpec& spec, std::span<const int> chars);

std::string chars_to_text(std::span<const int> chars);
CharSeq text_to_chars(const ToyLangSpec& spec, const std::string& text);

struct Segment {
  int phoneme = 0;
  int start = 0;  // inclusive frame
  int end = 0;    // exclusive frame
};

struct Utterance {
  std::string id;
  CharSeq chars;
  PhonemeSeq phonemes;
  Matrix features;  // T x feat_dim
  Matrix mel;       // T x mel_dim (frame-synchronous)
  std::vector<Segment> alignment;

  int frames() const { return static_cast<int>(features.rows()); }
};

struct CorpusPlan {
  int n_train = 200;
  int n_val = 30;
  int n_test = 30;
  // Reject texts already used anywhere in the corpus.
  bool unique_texts = true;
};

struct Corpus {
  ToyLangSpec spec;
  std::uint64_t seed = 0;
  std::vector<Utterance> train;
  std::vector<Utterance> val;
  std::vector<Utterance> test;

  const std::vector<Utterance>& split(const std::string& name) const;
  const Utterance& find(const std::string& id) const;
};

/// Renders frames for a known text with given per-phoneme durations.
Utterance render_utterance(const ToyLangSpec& spec, std::string id, CharSeq chars,
                           std::span<const int> durations, num::Rng& rng);

Corpus gen_corpus(const ToyLangSpec& spec, const CorpusPlan& plan, std::uint64_t seed);

nlohmann::json spec_to_json(const ToyLangSpec& spec);
ToyLangSpec spec_from_json(const nlohmann::json& j);

/// manifest.json + feat/<id>.ptns + mel/<id>.ptns
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

/// Row index of the nearest prototype (Euclidean; ties -> lowest index).
int nearest_prototype(const Matrix& prototypes, const Eigen::Ref<const Eigen::RowVectorXd>& row);
std::vector<int> nearest_prototype_labels(const Matrix& prototypes, const Matrix& frames);

}  // namespace phonseg::synth
