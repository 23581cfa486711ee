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
#include <vector>

#include <nlohmann/json.hpp>

#include "phonseg/numcore/layers.hpp"
#include "phonseg/synthdata.hpp"
#include "phonseg/training.hpp"

namespace phonseg::asr {

using num::Matrix;

/// Conv trunk + BiLSTM stack -> context C -> affine bottleneck B ->
/// classifier over K phonemes plus blank.
struct AsrConfig {
  int feat_dim = 20;
  int num_phonemes = 16;
  int conv_layers = 2;
  int conv_width = 64;
  int conv_kernel = 3;
  int lstm_layers = 1;
  int lstm_hidden = 32;  // context dim = 2 * lstm_hidden
  int bottleneck_dim = 32;
  // Only "affine" is implemented; recorded so checkpoints state it.
  std::string bottleneck_activation = "affine";
  std::uint64_t seed = 1;

  int context_dim() const { return 2 * lstm_hidden; }
  int num_classes() const { return num_phonemes + 1; }
  /// Frames on each side seen by the conv stack.
  int conv_radius() const { return conv_layers * (conv_kernel - 1) / 2; }

  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
  nlohmann::json to_json() const;
  static AsrConfig from_json(const nlohmann::json& j);
};

struct AsrTrainConfig {
  int epochs = 15;
  double lr = 3e-3;
  int batch_size = 8;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static AsrTrainConfig from_json(const nlohmann::json& j);
};

struct AsrVars {
  num::Var context;
  num::Var bottleneck;
  num::Var logits;
  num::Var log_posteriors;
};

struct AsrOutputs {
  Matrix context;         // T x D_context
  Matrix bottleneck;      // T x D_bottleneck
  Matrix log_posteriors;  // T x (K + 1); blank is the last column
};

class AsrModel {
 public:
  explicit AsrModel(const AsrConfig& cfg);

  const AsrConfig& config() const { return cfg_; }
  num::ParamStore& store() { return store_; }
  const num::ParamStore& store() const { return store_; }

  AsrVars forward(num::Tape& t, num::Var features) const;
  /// Eval-mode forward on a grad-free tape; a pure function of the input.
  AsrOutputs infer(const Matrix& features) const;

  void save(const std::filesystem::path& dir) const;
  static AsrModel load(const std::filesystem::path& dir);

 private:
  AsrConfig cfg_;
  num::ParamStore store_;
  std::vector<num::Conv1d> convs_;
  std::vector<num::BiLstm> lstms_;
  num::Linear bottleneck_;
  num::Linear classifier_;
};

/// Mean CTC loss over the given utterances (no gradient).
double mean_ctc_loss(const AsrModel& model, const std::vector<synth::Utterance>& utts);

/// Micro-averaged greedy-decode PER.
double greedy_per(const AsrModel& model, const std::vector<synth::Utterance>& utts);

/// Adam on mean-per-utterance CTC loss. The parameters with the lowest
/// validation PER are restored before returning.
TrainReport asr_train(AsrModel& model, const std::vector<synth::Utterance>& train,
                      const std::vector<synth::Utterance>& val, const AsrTrainConfig& hyper);

}  // namespace phonseg::asr
