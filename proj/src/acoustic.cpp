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

#include "phonseg/acoustic.hpp"

#include <cmath>

#include "phonseg/error.hpp"
#include "phonseg/json_util.hpp"

namespace phonseg::acoustic {

namespace {

constexpr std::uint64_t kInferenceDropoutSeed = 0x1fe7;

Var cat_cols(Var a, Var b) {
  const Var parts[] = {a, b};
  return num::concat_cols(parts);
}

}  // namespace

nlohmann::json StreamConfig::to_json() const {
  return {{"name", name},           {"kind", kind},           {"vocab", vocab},
          {"input_dim", input_dim}, {"embed_dim", embed_dim}, {"conv_layers", conv_layers},
          {"conv_width", conv_width}, {"conv_kernel", conv_kernel}, {"lstm_hidden", lstm_hidden}};
}

StreamConfig StreamConfig::from_json(const nlohmann::json& j) {
  StreamConfig c;
  StrictObject o(j, "stream");
  o.get("name", c.name);
  o.get("kind", c.kind);
  o.get("vocab", c.vocab);
  o.get("input_dim", c.input_dim);
  o.get("embed_dim", c.embed_dim);
  o.get("conv_layers", c.conv_layers);
  o.get("conv_width", c.conv_width);
  o.get("conv_kernel", c.conv_kernel);
  o.get("lstm_hidden", c.lstm_hidden);
  o.finish();
  return c;
}

void AcousticConfig::validate() const {
  if (streams.empty()) throw ConfigError("acoustic: at least one input stream is required");
  for (const auto& s : streams) {
    if (s.kind == "embedding") {
      if (s.vocab < 1) throw ConfigError("acoustic: embedding stream '" + s.name + "' needs vocab >= 1");
    } else if (s.kind == "dense") {
      if (s.input_dim < 1) throw ConfigError("acoustic: dense stream '" + s.name + "' needs input_dim >= 1");
    } else {
      throw ConfigError("acoustic: stream kind must be 'embedding' or 'dense'");
    }
    if (s.embed_dim < 1 || s.conv_layers < 0 || s.conv_width < 1 || s.lstm_hidden < 1) {
      throw ConfigError("acoustic: stream '" + s.name + "' has non-positive widths");
    }
    if (s.conv_kernel < 1 || s.conv_kernel % 2 == 0) throw ConfigError("acoustic: conv kernels must be odd");
    // Context averaging needs one key/context width across streams.
    if (s.out_dim() != memory_dim()) throw ConfigError("acoustic: all encoders must share one output width");
  }
  for (std::size_t i = 0; i < streams.size(); ++i) {
    for (std::size_t j = i + 1; j < streams.size(); ++j) {
      if (streams[i].name == streams[j].name) throw ConfigError("acoustic: duplicate stream name");
    }
  }
  if (attention_dim < 1 || attention_rnn < 1 || decoder_rnn < 1 || out_dim < 1) {
    throw ConfigError("acoustic: decoder widths must be positive");
  }
  if (location_kernel < 1 || location_kernel % 2 == 0) throw ConfigError("acoustic: location_kernel must be odd");
  for (int w : prenet) {
    if (w < 1) throw ConfigError("acoustic: prenet widths must be positive");
  }
  if (prenet.empty()) throw ConfigError("acoustic: prenet needs at least one layer");
  if (prenet_dropout < 0.0 || prenet_dropout >= 1.0) throw ConfigError("acoustic: prenet_dropout in [0, 1)");
  if (frames_per_step < 1) throw ConfigError("acoustic: frames_per_step must be >= 1");
  if (max_decode_steps < 1) throw ConfigError("acoustic: max_decode_steps must be >= 1");
  if (postnet && (postnet_layers < 1 || postnet_width < 1 || postnet_kernel % 2 == 0)) {
    throw ConfigError("acoustic: bad post-net shape");
  }
  if (role == "ttr") {
    if (postnet) throw ConfigError("acoustic: TTR models have no post-net");
    if (inference_dropout) throw ConfigError("acoustic: TTR inference runs without prenet dropout");
    if (streams.size() != 1 || streams[0].kind != "embedding") {
      throw ConfigError("acoustic: TTR takes exactly one character embedding stream");
    }
  } else if (role == "rtm") {
    if (streams.size() > 2) throw ConfigError("acoustic: RTM takes at most two streams");
    for (const auto& s : streams) {
      if (s.kind != "dense" || (s.name != "upr" && s.name != "spr")) {
        throw ConfigError("acoustic: RTM streams must be dense 'upr' or 'spr'");
      }
    }
  } else if (role == "taco") {
    if (streams.size() != 1 || streams[0].kind != "embedding") {
      throw ConfigError("acoustic: Tacotron baselines take one symbol embedding stream");
    }
  } else {
    throw ConfigError("acoustic: role must be 'ttr', 'rtm' or 'taco'");
  }
}

nlohmann::json AcousticConfig::to_json() const {
  nlohmann::json s = nlohmann::json::array();
  for (const auto& st : streams) s.push_back(st.to_json());
  return {{"role", role},
          {"streams", s},
          {"attention_dim", attention_dim},
          {"location_kernel", location_kernel},
          {"tie_attention", tie_attention},
          {"prenet", prenet},
          {"prenet_dropout", prenet_dropout},
          {"inference_dropout", inference_dropout},
          {"attention_rnn", attention_rnn},
          {"decoder_rnn", decoder_rnn},
          {"out_dim", out_dim},
          {"frames_per_step", frames_per_step},
          {"postnet", postnet},
          {"postnet_layers", postnet_layers},
          {"postnet_width", postnet_width},
          {"postnet_kernel", postnet_kernel},
          {"max_decode_steps", max_decode_steps},
          {"seed", seed}};
}

AcousticConfig AcousticConfig::from_json(const nlohmann::json& j) {
  AcousticConfig c;
  StrictObject o(j, "acoustic");
  o.get("role", c.role);
  if (o.has("streams")) {
    c.streams.clear();
    for (const auto& s : o.at("streams")) c.streams.push_back(StreamConfig::from_json(s));
  }
  o.get("attention_dim", c.attention_dim);
  o.get("location_kernel", c.location_kernel);
  o.get("tie_attention", c.tie_attention);
  o.get("prenet", c.prenet);
  o.get("prenet_dropout", c.prenet_dropout);
  o.get("inference_dropout", c.inference_dropout);
  o.get("attention_rnn", c.attention_rnn);
  o.get("decoder_rnn", c.decoder_rnn);
  o.get("out_dim", c.out_dim);
  o.get("frames_per_step", c.frames_per_step);
  o.get("postnet", c.postnet);
  o.get("postnet_layers", c.postnet_layers);
  o.get("postnet_width", c.postnet_width);
  o.get("postnet_kernel", c.postnet_kernel);
  o.get("max_decode_steps", c.max_decode_steps);
  o.get("seed", c.seed);
  o.finish();
  return c;
}

AcousticConfig ttr_config(int char_vocab, int rep_dim) {
  AcousticConfig c;
  c.role = "ttr";
  StreamConfig s;
  s.name = "chars";
  s.kind = "embedding";
  s.vocab = char_vocab;
  c.streams = {s};
  c.out_dim = rep_dim;
  return c;
}

AcousticConfig rtm_config(int upr_dim, int spr_dim, int mel_dim, const std::string& ablation) {
  if (ablation != "none" && ablation != "spr_only" && ablation != "upr_only") {
    throw ConfigError("rtm ablation must be none, spr_only or upr_only");
  }
  AcousticConfig c;
  c.role = "rtm";
  c.postnet = true;
  c.inference_dropout = true;
  c.out_dim = mel_dim;
  StreamConfig upr;
  upr.name = "upr";
  upr.kind = "dense";
  upr.input_dim = upr_dim;
  StreamConfig spr = upr;
  spr.name = "spr";
  spr.input_dim = spr_dim;
  if (ablation != "spr_only") c.streams.push_back(upr);
  if (ablation != "upr_only") c.streams.push_back(spr);
  return c;
}

AcousticConfig taco_config(int symbol_vocab, int mel_dim) {
  AcousticConfig c = ttr_config(symbol_vocab, mel_dim);
  c.role = "taco";
  c.streams[0].name = "symbols";
  c.postnet = true;
  c.inference_dropout = true;
  return c;
}

StreamInput StreamInput::from_ids(std::vector<int> ids) {
  StreamInput s;
  s.ids = std::move(ids);
  return s;
}

StreamInput StreamInput::from_dense(Matrix m) {
  StreamInput s;
  s.dense = std::move(m);
  return s;
}

Eigen::Index StreamInput::length() const {
  return ids.empty() ? dense.rows() : static_cast<Eigen::Index>(ids.size());
}

Seq2Seq::Seq2Seq(const AcousticConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  num::Rng rng(cfg_.seed);
  for (const auto& s : cfg_.streams) {
    const std::string p = "enc." + s.name;
    Encoder e;
    if (s.kind == "embedding") {
      Matrix table(s.vocab, s.embed_dim);
      for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = 0.3 * rng.normal();
      e.embedding = &store_.create(p + ".embedding", std::move(table));
    } else {
      e.projection = num::Linear::create(store_, p + ".proj", s.input_dim, s.embed_dim, rng);
    }
    int width = s.embed_dim;
    for (int i = 0; i < s.conv_layers; ++i) {
      e.convs.push_back(num::Conv1d::create(store_, p + ".conv" + std::to_string(i), width, s.conv_width,
                                            s.conv_kernel, rng));
      width = s.conv_width;
    }
    e.lstm = num::BiLstm::create(store_, p + ".blstm", width, s.lstm_hidden, rng);
    encoders_.push_back(std::move(e));
  }
  const std::size_t n_attention = cfg_.tie_attention ? 1 : cfg_.streams.size();
  for (std::size_t i = 0; i < n_attention; ++i) {
    const std::string p = "attn." + (cfg_.tie_attention ? std::string("shared") : cfg_.streams[i].name);
    AttentionParams a;
    a.memory = &store_.glorot(p + ".memory", cfg_.memory_dim(), cfg_.attention_dim, rng);
    a.query = &store_.glorot(p + ".query", cfg_.attention_rnn, cfg_.attention_dim, rng);
    a.location = &store_.glorot(p + ".location", 2 * cfg_.location_kernel, cfg_.attention_dim, rng);
    a.v = &store_.glorot(p + ".v", cfg_.attention_dim, 1, rng);
    attention_.push_back(a);
  }
  int width = cfg_.out_dim;
  for (std::size_t i = 0; i < cfg_.prenet.size(); ++i) {
    prenet_.push_back(num::Linear::create(store_, "dec.prenet" + std::to_string(i), width, cfg_.prenet[i], rng));
    width = cfg_.prenet[i];
  }
  const int E = cfg_.memory_dim();
  att_rnn_ = num::LstmParams::create(store_, "dec.att_rnn", width + E, cfg_.attention_rnn, rng);
  dec_rnn_ = num::LstmParams::create(store_, "dec.dec_rnn", cfg_.attention_rnn + E, cfg_.decoder_rnn, rng);
  proj_ = num::Linear::create(store_, "dec.proj", cfg_.decoder_rnn + E, cfg_.frames_per_step * cfg_.out_dim, rng);
  stop_ = num::Linear::create(store_, "dec.stop", cfg_.decoder_rnn + E, 1, rng);
  if (cfg_.postnet) {
    int in = cfg_.out_dim;
    for (int i = 0; i < cfg_.postnet_layers; ++i) {
      const int out = i + 1 == cfg_.postnet_layers ? cfg_.out_dim : cfg_.postnet_width;
      postnet_.push_back(num::Conv1d::create(store_, "post.conv" + std::to_string(i), in, out,
                                             cfg_.postnet_kernel, rng));
      in = out;
    }
  }
}

void Seq2Seq::check_inputs(const std::vector<StreamInput>& inputs) const {
  if (inputs.size() != cfg_.streams.size()) {
    throw DimensionError("acoustic: expected " + std::to_string(cfg_.streams.size()) + " input streams");
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].length() < 1) throw DataError("acoustic: empty input for stream " + cfg_.streams[i].name);
  }
}

Var Seq2Seq::encode(num::Tape& t, std::size_t stream, const StreamInput& in) const {
  const StreamConfig& s = cfg_.streams.at(stream);
  const Encoder& e = encoders_[stream];
  Var x;
  if (s.kind == "embedding") {
    for (int id : in.ids) {
      if (id < 0 || id >= s.vocab) throw DimensionError("acoustic: symbol id out of range in " + s.name);
    }
    if (in.ids.empty()) throw DataError("acoustic: empty symbol sequence for " + s.name);
    x = num::gather_rows(t.param(*e.embedding), in.ids);
  } else {
    if (in.dense.cols() != s.input_dim) {
      throw DimensionError("acoustic: stream " + s.name + " expects " + std::to_string(s.input_dim) + " dims");
    }
    if (in.dense.rows() < 1) throw DataError("acoustic: empty dense sequence for " + s.name);
    x = e.projection(t, t.constant(in.dense));
  }
  for (const auto& conv : e.convs) x = num::relu(conv(t, x));
  return e.lstm(t, x);
}

EncodedStream Seq2Seq::prepare(num::Tape& t, std::size_t stream, Var memory) const {
  const std::size_t a = cfg_.tie_attention ? 0 : stream;
  return {memory, num::matmul(memory, t.param(*attention_[a].memory)), static_cast<int>(a)};
}

std::vector<EncodedStream> Seq2Seq::encode_all(num::Tape& t, const std::vector<StreamInput>& inputs) const {
  check_inputs(inputs);
  std::vector<EncodedStream> enc;
  for (std::size_t i = 0; i < inputs.size(); ++i) enc.push_back(prepare(t, i, encode(t, i, inputs[i])));
  return enc;
}

AttentionState Seq2Seq::initial_state(num::Tape& t, const std::vector<EncodedStream>& enc) const {
  AttentionState s;
  for (const auto& e : enc) {
    // Decoding starts attending at the first encoder position.
    Matrix first = Matrix::Zero(1, e.memory.rows());
    first(0, 0) = 1.0;
    s.prev.push_back(t.constant(first));
    s.cumulative.push_back(t.constant(std::move(first)));
  }
  return s;
}

AttendResult Seq2Seq::attend(num::Tape& t, Var query, const std::vector<EncodedStream>& enc,
                             AttentionState& state) const {
  AttendResult r;
  Var total;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    const AttentionParams& a = attention_[static_cast<std::size_t>(enc[i].attention)];
    Var q = num::matmul(query, t.param(*a.query));
    // The location conv and its dense projection compose into one im2col
    // product over the [prev, cumulative] weight columns.
    Var loc_in = cat_cols(num::transpose(state.prev[i]), num::transpose(state.cumulative[i]));
    Var loc = num::matmul(num::im2col(loc_in, cfg_.location_kernel), t.param(*a.location));
    Var energy = num::matmul(num::tanh(num::add_row(num::add(enc[i].keys, loc), q)), t.param(*a.v));
    Var w = num::softmax_rows(num::transpose(energy));
    Var ctx = num::matmul(w, enc[i].memory);
    state.prev[i] = w;
    state.cumulative[i] = num::add(state.cumulative[i], w);
    r.weights.push_back(w);
    total = i == 0 ? ctx : num::add(total, ctx);
  }
  r.context = enc.size() == 1 ? total : num::scale(total, 1.0 / static_cast<double>(enc.size()));
  return r;
}

Var Seq2Seq::prenet(num::Tape& t, Var x, num::Rng* dropout_rng) const {
  for (const auto& layer : prenet_) {
    x = num::relu(layer(t, x));
    if (dropout_rng != nullptr) x = num::dropout(x, cfg_.prenet_dropout, *dropout_rng);
  }
  return x;
}

Var Seq2Seq::run_postnet(num::Tape& t, Var frames) const {
  Var h = frames;
  for (std::size_t i = 0; i < postnet_.size(); ++i) {
    h = postnet_[i](t, h);
    if (i + 1 < postnet_.size()) h = num::tanh(h);
  }
  return num::add(frames, h);
}

Seq2Seq::DecoderState Seq2Seq::start(num::Tape& t, const std::vector<EncodedStream>& enc) const {
  return {num::zero_state(t, cfg_.attention_rnn), num::zero_state(t, cfg_.decoder_rnn),
          t.constant(Matrix::Zero(1, cfg_.memory_dim())), initial_state(t, enc)};
}

std::pair<Var, Var> Seq2Seq::step(num::Tape& t, Var prenet_out, const std::vector<EncodedStream>& enc,
                                  DecoderState& s, std::vector<Var>* weights) const {
  s.att = num::lstm_step(t, cat_cols(prenet_out, s.context), s.att, att_rnn_);
  AttendResult a = attend(t, s.att.h, enc, s.attn);
  s.context = a.context;
  s.dec = num::lstm_step(t, cat_cols(s.att.h, s.context), s.dec, dec_rnn_);
  Var out_in = cat_cols(s.dec.h, s.context);
  if (weights != nullptr) *weights = std::move(a.weights);
  return {proj_(t, out_in), stop_(t, out_in)};
}

TeacherForced Seq2Seq::teacher_forced(num::Tape& t, const std::vector<StreamInput>& inputs, const Matrix& target,
                                      num::Rng* dropout_rng) const {
  if (target.rows() < 1) throw DataError("acoustic: empty target sequence");
  if (target.cols() != cfg_.out_dim) throw DimensionError("acoustic: target dim does not match out_dim");
  const std::vector<EncodedStream> enc = encode_all(t, inputs);
  const int r = cfg_.frames_per_step;
  const auto T = target.rows();
  const auto steps = (T + r - 1) / r;
  Matrix prev = Matrix::Zero(steps, cfg_.out_dim);
  for (Eigen::Index i = 1; i < steps; ++i) prev.row(i) = target.row(i * r - 1);
  Var pre = prenet(t, t.constant(std::move(prev)), dropout_rng);

  DecoderState s = start(t, enc);
  std::vector<Var> groups;
  std::vector<Var> stops;
  TeacherForced out;
  for (const auto& e : enc) out.alignments.emplace_back(steps, e.memory.rows());
  for (Eigen::Index i = 0; i < steps; ++i) {
    std::vector<Var> w;
    auto [frame, stop] = step(t, num::slice_rows(pre, i, 1), enc, s, &w);
    for (std::size_t k = 0; k < w.size(); ++k) out.alignments[k].row(i) = w[k].value();
    if (r == 1) {
      groups.push_back(frame);
    } else {
      for (int j = 0; j < r; ++j) groups.push_back(num::slice_cols(frame, j * cfg_.out_dim, cfg_.out_dim));
    }
    stops.push_back(stop);
  }
  out.frames = num::concat_rows(groups);
  if (out.frames.rows() != T) out.frames = num::slice_rows(out.frames, 0, T);
  out.stop_logits = num::concat_rows(stops);
  if (cfg_.postnet) out.postnet = run_postnet(t, out.frames);
  return out;
}

LossParts Seq2Seq::loss(num::Tape& t, const std::vector<StreamInput>& inputs, const Matrix& target,
                        num::Rng* dropout_rng) const {
  TeacherForced tf = teacher_forced(t, inputs, target, dropout_rng);
  Var y = t.constant(target);
  LossParts p;
  p.mse = num::mse(tf.frames, y);
  p.l1 = num::l1(tf.frames, y);
  if (tf.postnet.valid()) {
    p.mse = num::add(p.mse, num::mse(tf.postnet, y));
    p.l1 = num::add(p.l1, num::l1(tf.postnet, y));
  }
  Matrix stop_target = Matrix::Zero(tf.stop_logits.rows(), 1);
  stop_target(stop_target.rows() - 1, 0) = 1.0;
  p.bce = num::bce_with_logits(tf.stop_logits, stop_target);
  p.total = num::add(num::add(p.mse, p.l1), p.bce);
  return p;
}

Inference Seq2Seq::infer(const std::vector<StreamInput>& inputs) const {
  num::Tape t(false);
  const std::vector<EncodedStream> enc = encode_all(t, inputs);
  num::Rng rng(kInferenceDropoutSeed);
  num::Rng* dropout_rng = cfg_.inference_dropout ? &rng : nullptr;
  const int r = cfg_.frames_per_step;
  const int D = cfg_.out_dim;
  DecoderState s = start(t, enc);
  Var prev = t.constant(Matrix::Zero(1, D));
  std::vector<Var> groups;
  std::vector<double> stop_probs;
  std::vector<std::vector<Matrix>> weights(enc.size());
  Inference out;
  out.truncated = true;
  for (int i = 0; i < cfg_.max_decode_steps; ++i) {
    std::vector<Var> w;
    auto [frame, stop] = step(t, prenet(t, prev, dropout_rng), enc, s, &w);
    for (std::size_t k = 0; k < w.size(); ++k) weights[k].push_back(w[k].value());
    groups.push_back(frame);
    prev = r == 1 ? frame : num::slice_cols(frame, (r - 1) * D, D);
    const double p = 1.0 / (1.0 + std::exp(-stop.scalar()));
    stop_probs.push_back(p);
    if (p > 0.5) {
      out.truncated = false;
      break;
    }
  }
  const auto steps = static_cast<Eigen::Index>(groups.size());
  Matrix frames(steps * r, D);
  for (Eigen::Index i = 0; i < steps; ++i) {
    const Matrix& g = groups[static_cast<std::size_t>(i)].value();
    for (int j = 0; j < r; ++j) frames.row(i * r + j) = g.middleCols(j * D, D);
  }
  if (cfg_.postnet) {
    out.frames = run_postnet(t, t.constant(frames)).value();
  } else {
    out.frames = std::move(frames);
  }
  out.stop_probs = Eigen::Map<const Matrix>(stop_probs.data(), steps, 1);
  for (const auto& per_stream : weights) {
    Matrix a(steps, per_stream.empty() ? 0 : per_stream.front().cols());
    for (Eigen::Index i = 0; i < steps; ++i) a.row(i) = per_stream[static_cast<std::size_t>(i)];
    out.alignments.push_back(std::move(a));
  }
  return out;
}

void Seq2Seq::save(const std::filesystem::path& dir) const {
  store_.save(dir, {{"kind", "acoustic"}, {"config", cfg_.to_json()}});
}

Seq2Seq Seq2Seq::load(const std::filesystem::path& dir) {
  const auto meta = num::ParamStore::read_metadata(dir);
  if (meta.value("kind", "") != "acoustic") throw IoError("not an acoustic checkpoint: " + dir.string());
  Seq2Seq m(AcousticConfig::from_json(meta.at("config")));
  m.store_.load(dir);
  return m;
}

nlohmann::json AcousticTrainConfig::to_json() const {
  return {{"epochs", epochs}, {"lr", lr}, {"batch_size", batch_size}, {"clip_norm", clip_norm}, {"seed", seed}};
}

AcousticTrainConfig AcousticTrainConfig::from_json(const nlohmann::json& j) {
  AcousticTrainConfig c;
  StrictObject o(j, "acoustic_train");
  o.get("epochs", c.epochs);
  o.get("lr", c.lr);
  o.get("batch_size", c.batch_size);
  o.get("clip_norm", c.clip_norm);
  o.get("seed", c.seed);
  o.finish();
  if (c.epochs < 0 || c.batch_size < 1 || c.lr < 0.0) throw ConfigError("acoustic_train: bad hyperparameters");
  return c;
}

double mean_loss(const Seq2Seq& model, const std::vector<Example>& examples, std::uint64_t dropout_seed) {
  if (examples.empty()) throw DataError("acoustic: no examples");
  num::Rng rng(dropout_seed);
  double total = 0.0;
  for (const auto& ex : examples) {
    num::Tape t(false);
    total += model.loss(t, ex.inputs, ex.target, &rng).total.scalar();
  }
  return total / static_cast<double>(examples.size());
}

double mean_output_l1(const Seq2Seq& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw DataError("acoustic: no examples");
  double total = 0.0;
  for (const auto& ex : examples) {
    num::Tape t(false);
    TeacherForced tf = model.teacher_forced(t, ex.inputs, ex.target, nullptr);
    Var out = tf.postnet.valid() ? tf.postnet : tf.frames;
    total += (out.value() - ex.target).cwiseAbs().mean();
  }
  return total / static_cast<double>(examples.size());
}

TrainReport train(Seq2Seq& model, const std::vector<Example>& train, const std::vector<Example>& val,
                  const AcousticTrainConfig& hyper) {
  if (train.empty() || val.empty()) throw DataError("acoustic train: train and val sets must be nonempty");
  constexpr std::uint64_t kEvalDropoutSeed = 0xd20b;
  num::ParamStore& store = model.store();
  TrainReport report;
  report.val_metric_name = "loss";
  report.initial_loss = mean_loss(model, train, kEvalDropoutSeed);
  report.best_val = mean_loss(model, val, kEvalDropoutSeed);
  auto best = store.snapshot();

  num::Rng order_rng(hyper.seed);
  num::Rng dropout_rng = order_rng.fork(1);
  const num::AdamOptions adam{hyper.lr};
  store.zero_grad();
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto order = shuffled_order(train.size(), order_rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
      Matrix seed(1, 1);
      seed(0, 0) = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const Example& ex = train[order[k]];
        num::Tape t;
        LossParts p = model.loss(t, ex.inputs, ex.target, &dropout_rng);
        if (!std::isfinite(p.total.scalar())) throw TrainingError("acoustic train: non-finite loss on " + ex.id);
        epoch_total += p.total.scalar();
        t.backward(p.total, seed);
      }
      if (hyper.clip_norm > 0.0) store.clip_grad_norm(hyper.clip_norm);
      store.adam_step(adam);
      ++report.steps;
    }
    report.epoch_loss.push_back(epoch_total / static_cast<double>(train.size()));
    const double v = mean_loss(model, val, kEvalDropoutSeed);
    report.val_metric.push_back(v);
    if (report.best_epoch < 0 || v < report.best_val) {
      report.best_val = v;
      report.best_epoch = epoch;
      best = store.snapshot();
    }
  }
  store.restore(best);
  return report;
}

Synthesis synthesize(const std::vector<int>& chars, const Seq2Seq* ttr_upr, const Seq2Seq* ttr_spr,
                     const Seq2Seq& rtm) {
  Synthesis out;
  std::vector<StreamInput> rtm_in;
  const std::vector<StreamInput> text{StreamInput::from_ids(chars)};
  for (const auto& s : rtm.config().streams) {
    const Seq2Seq* ttr = s.name == "upr" ? ttr_upr : ttr_spr;
    if (ttr == nullptr) throw ConfigError("synthesize: missing TTR model for stream " + s.name);
    Inference inf = ttr->infer(text);
    out.truncated = out.truncated || inf.truncated;
    (s.name == "upr" ? out.upr : out.spr) = inf.frames;
    rtm_in.push_back(StreamInput::from_dense(std::move(inf.frames)));
  }
  Inference mel = rtm.infer(rtm_in);
  out.truncated = out.truncated || mel.truncated;
  out.mel = std::move(mel.frames);
  return out;
}

}  // namespace phonseg::acoustic
