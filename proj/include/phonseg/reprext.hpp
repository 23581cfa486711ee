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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phonseg/asr_model.hpp"
#include "phonseg/numcore/layers.hpp"
#include "phonseg/synthdata.hpp"
#include "phonseg/training.hpp"

namespace phonseg::rep {

using num::Matrix;

struct Span {
  int start = 0;  // inclusive frame
  int end = 0;    // exclusive frame
};

/// Bottleneck frames with their argmax categories; `blank` == K.
struct FrameLabeled {
  Matrix bottleneck;
  std::vector<int> labels;
  int blank = 0;
};

/// One vector per recognized phoneme run. N <= T; no blank categories.
struct SprSeq {
  Matrix vectors;  // N x D_bottleneck
  std::vector<int> categories;
  std::vector<Span> spans;

  int size() const { return static_cast<int>(categories.size()); }
};

/// One latent per input frame.
struct UprSeq {
  Matrix vectors;  // T x D_upr
  int receptive_radius = 0;

  int size() const { return static_cast<int>(vectors.rows()); }
};

/// Per-frame argmax of the posteriors (lowest index wins ties).
FrameLabeled categorize(const asr::AsrOutputs& outputs);

/// Groups maximal runs of equal labels, drops blank runs, and averages each
/// remaining run. Blank-separated repeats stay distinct segments.
SprSeq merge(const FrameLabeled& fl);

SprSeq extract_spr(const asr::AsrModel& model, const Matrix& features);

struct UprConfig {
  int feat_dim = 20;
  int conv_width = 64;
  int conv_kernel = 3;
  int lstm_hidden = 32;
  int upr_dim = 32;
  std::uint64_t seed = 2;

  int receptive_radius() const { return (conv_kernel - 1) / 2; }
  void validate() const;
  nlohmann::json to_json() const;
  static UprConfig from_json(const nlohmann::json& j);
};

struct UprTrainConfig {
  int epochs = 10;
  double lr = 3e-3;
  int batch_size = 8;
  double mask_prob = 0.15;
  double clip_norm = 5.0;
  std::uint64_t seed = 3;

  nlohmann::json to_json() const;
  static UprTrainConfig from_json(const nlohmann::json& j);
};

/// conv -> BiLSTM -> linear latent; a linear read-out reconstructs the
/// input frames from the latents during training only.
class UprEncoder {
 public:
  explicit UprEncoder(const UprConfig& cfg);

  const UprConfig& config() const { return cfg_; }
  num::ParamStore& store() { return store_; }
  const num::ParamStore& store() const { return store_; }

  num::Var encode(num::Tape& t, num::Var features) const;
  num::Var reconstruct(num::Tape& t, num::Var latents) const;

  /// Masked-frame L2 reconstruction loss. Masked rows of `features` are
  /// zeroed on input; the loss averages the squared error over masked rows.
  /// With mask_prob == 0 nothing is masked and every row counts.
  num::Var masked_loss(num::Tape& t, const Matrix& features, double mask_prob, num::Rng& rng) const;

  /// Per-dimension mean and inverse standard deviation of the latents over
  /// `utts`; extraction applies them. Not touched by the optimizer (they
  /// never receive gradients).
  void fit_normalization(const std::vector<synth::Utterance>& utts);
  Matrix standardize(const Matrix& latents) const;

  void save(const std::filesystem::path& dir) const;
  static UprEncoder load(const std::filesystem::path& dir);

 private:
  UprConfig cfg_;
  num::ParamStore store_;
  num::Conv1d conv_;
  num::BiLstm lstm_;
  num::Linear latent_;
  num::Linear readout_;
  num::Parameter* norm_mean_ = nullptr;   // 1 x D
  num::Parameter* norm_scale_ = nullptr;  // 1 x D
};

/// Mean masked loss with a fixed mask seed, for comparable evaluations.
double mean_upr_loss(const UprEncoder& enc, const std::vector<synth::Utterance>& utts, double mask_prob,
                     std::uint64_t mask_seed);

/// Selection metric on `val` is the masked loss with a fixed mask seed. The
/// restored encoder then has its normalization fitted on `train`.
TrainReport train_upr_encoder(UprEncoder& enc, const std::vector<synth::Utterance>& train,
                              const std::vector<synth::Utterance>& val, const UprTrainConfig& hyper);

/// Standardized per-frame latents, eval mode (no masking).
UprSeq extract_upr(const UprEncoder& enc, const Matrix& features);

/// Sidecars: {"kind", "frames", "categories", "spans"}.
nlohmann::json spr_sidecar(const SprSeq& s, int frames);
nlohmann::json upr_sidecar(const UprSeq& u);

/// <dir>/<id>.ptns + <dir>/<id>.json
void save_spr(const std::filesystem::path& dir, const std::string& id, const SprSeq& s, int frames);
SprSeq load_spr(const std::filesystem::path& dir, const std::string& id);
void save_upr(const std::filesystem::path& dir, const std::string& id, const UprSeq& u);
UprSeq load_upr(const std::filesystem::path& dir, const std::string& id);

}  // namespace phonseg::rep
