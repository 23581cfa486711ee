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

#include "phonseg/numcore/layers.hpp"
#include "phonseg/training.hpp"

namespace phonseg::acoustic {

using num::Matrix;
using num::Var;

/// One encoder input stream: an id sequence through an embedding table, or
/// a dense vector sequence through a linear projection. Either way it then
/// passes conv (relu) layers and a BiLSTM.
struct StreamConfig {
  std::string name;
  std::string kind = "embedding";  // "embedding" | "dense"
  int vocab = 0;                   // embedding only
  int input_dim = 0;               // dense only
  int embed_dim = 32;
  int conv_layers = 2;
  int conv_width = 32;
  int conv_kernel = 5;
  int lstm_hidden = 32;  // encoder output dim = 2 * lstm_hidden

  int out_dim() const { return 2 * lstm_hidden; }
  nlohmann::json to_json() const;
  static StreamConfig from_json(const nlohmann::json& j);
};

/// Encoder-attention-decoder with location-sensitive attention, one
/// attention per stream, and the per-stream contexts averaged.
///   role "ttr":  one embedding stream, no post-net, no inference dropout.
///   role "rtm":  dense "upr" and/or "spr" streams, post-net.
///   role "taco": one embedding stream, post-net (RTM decoder, symbol input).
struct AcousticConfig {
  std::string role = "ttr";
  std::vector<StreamConfig> streams;
  int attention_dim = 32;
  int location_kernel = 15;
  bool tie_attention = false;
  std::vector<int> prenet = {32, 32};
  double prenet_dropout = 0.5;
  bool inference_dropout = false;
  int attention_rnn = 64;
  int decoder_rnn = 64;
  int out_dim = 32;
  int frames_per_step = 1;
  bool postnet = false;
  int postnet_layers = 3;
  int postnet_width = 32;
  int postnet_kernel = 5;
  int max_decode_steps = 200;
  std::uint64_t seed = 4;

  int memory_dim() const { return streams.empty() ? 0 : streams.front().out_dim(); }
  /// Throws ConfigError; enforces the role rules and equal encoder widths.
  void validate() const;
  nlohmann::json to_json() const;
  static AcousticConfig from_json(const nlohmann::json& j);
};

AcousticConfig ttr_config(int char_vocab, int rep_dim);
/// ablation: "none" | "spr_only" | "upr_only".
AcousticConfig rtm_config(int upr_dim, int spr_dim, int mel_dim, const std::string& ablation = "none");
AcousticConfig taco_config(int symbol_vocab, int mel_dim);

struct StreamInput {
  std::vector<int> ids;  // embedding streams
  Matrix dense;          // dense streams

  static StreamInput from_ids(std::vector<int> ids);
  static StreamInput from_dense(Matrix m);
  Eigen::Index length() const;
};

/// Encoder output and its attention keys for one stream.
struct EncodedStream {
  Var memory;  // T_s x E
  Var keys;    // T_s x A
  int attention = 0;  // index of the attention parameter set
};

/// Per-stream attention history. Weights are 1 x T_s rows.
struct AttentionState {
  std::vector<Var> prev;
  std::vector<Var> cumulative;
};

struct AttendResult {
  Var context;               // 1 x E, mean of per-stream contexts
  std::vector<Var> weights;  // per stream, 1 x T_s
};

struct LossParts {
  Var mse;
  Var l1;
  Var bce;
  Var total;
};

struct TeacherForced {
  Var frames;       // T x out_dim, before the post-net
  Var postnet;      // T x out_dim, invalid without a post-net
  Var stop_logits;  // steps x 1
  std::vector<Matrix> alignments;  // per stream, steps x T_s
};

struct Inference {
  Matrix frames;      // post-net output when present
  Matrix stop_probs;  // steps x 1
  std::vector<Matrix> alignments;
  bool truncated = false;
};

struct AttentionParams {
  num::Parameter* memory = nullptr;    // E x A
  num::Parameter* query = nullptr;     // attention_rnn x A
  num::Parameter* location = nullptr;  // 2k x A over [prev, cumulative]
  num::Parameter* v = nullptr;         // A x 1
};

class Seq2Seq {
 public:
  explicit Seq2Seq(const AcousticConfig& cfg);

  const AcousticConfig& config() const { return cfg_; }
  num::ParamStore& store() { return store_; }
  const num::ParamStore& store() const { return store_; }

  Var encode(num::Tape& t, std::size_t stream, const StreamInput& in) const;
  EncodedStream prepare(num::Tape& t, std::size_t stream, Var memory) const;
  AttentionState initial_state(num::Tape& t, const std::vector<EncodedStream>& enc) const;
  /// Location-sensitive attention per stream from the attention-RNN state;
  /// updates `state` and averages the contexts.
  AttendResult attend(num::Tape& t, Var query, const std::vector<EncodedStream>& enc, AttentionState& state) const;

  TeacherForced teacher_forced(num::Tape& t, const std::vector<StreamInput>& inputs, const Matrix& target,
                               num::Rng* dropout_rng) const;
  /// MSE + L1 (+ the same on the post-net output) + stop BCE, unit weights.
  /// A null dropout_rng disables prenet dropout.
  LossParts loss(num::Tape& t, const std::vector<StreamInput>& inputs, const Matrix& target,
                 num::Rng* dropout_rng) const;
  Inference infer(const std::vector<StreamInput>& inputs) const;

  void save(const std::filesystem::path& dir) const;
  static Seq2Seq load(const std::filesystem::path& dir);

 private:
  struct Encoder {
    num::Parameter* embedding = nullptr;
    num::Linear projection;
    std::vector<num::Conv1d> convs;
    num::BiLstm lstm;
  };

  void check_inputs(const std::vector<StreamInput>& inputs) const;
  std::vector<EncodedStream> encode_all(num::Tape& t, const std::vector<StreamInput>& inputs) const;
  Var prenet(num::Tape& t, Var x, num::Rng* dropout_rng) const;
  Var run_postnet(num::Tape& t, Var frames) const;

  struct DecoderState {
    num::LstmState att;
    num::LstmState dec;
    Var context;
    AttentionState attn;
  };
  DecoderState start(num::Tape& t, const std::vector<EncodedStream>& enc) const;
  /// One decoder step; returns (frame group 1 x r*D, stop logit 1 x 1).
  std::pair<Var, Var> step(num::Tape& t, Var prenet_out, const std::vector<EncodedStream>& enc,
                           DecoderState& s, std::vector<Var>* weights) const;

  AcousticConfig cfg_;
  num::ParamStore store_;
  std::vector<Encoder> encoders_;
  std::vector<AttentionParams> attention_;
  std::vector<num::Linear> prenet_;
  num::LstmParams att_rnn_;
  num::LstmParams dec_rnn_;
  num::Linear proj_;
  num::Linear stop_;
  std::vector<num::Conv1d> postnet_;
};

struct Example {
  std::string id;
  std::vector<StreamInput> inputs;
  Matrix target;
};

struct AcousticTrainConfig {
  int epochs = 40;
  double lr = 2e-3;
  int batch_size = 8;
  double clip_norm = 1.0;
  std::uint64_t seed = 5;

  nlohmann::json to_json() const;
  static AcousticTrainConfig from_json(const nlohmann::json& j);
};

/// Mean teacher-forced total loss with fixed-seed dropout masks.
double mean_loss(const Seq2Seq& model, const std::vector<Example>& examples, std::uint64_t dropout_seed);

/// Mean teacher-forced L1 of the final output (post-net when present),
/// dropout disabled.
double mean_output_l1(const Seq2Seq& model, const std::vector<Example>& examples);

/// Adam on mean-per-utterance loss; restores the lowest-validation-loss
/// parameters.
TrainReport train(Seq2Seq& model, const std::vector<Example>& train, const std::vector<Example>& val,
                  const AcousticTrainConfig& hyper);

struct Synthesis {
  Matrix upr;
  Matrix spr;
  Matrix mel;
  bool truncated = false;
};

/// chars -> (UPR, SPR) -> RTM -> mel. RTM streams not present in its
/// config are skipped; the matching TTR may then be null.
Synthesis synthesize(const std::vector<int>& chars, const Seq2Seq* ttr_upr, const Seq2Seq* ttr_spr,
                     const Seq2Seq& rtm);

}  // namespace phonseg::acoustic
