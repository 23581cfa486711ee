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

#include "phonseg/asr_model.hpp"

#include <cmath>

#include "phonseg/ctc.hpp"
#include "phonseg/error.hpp"
#include "phonseg/json_util.hpp"
#include "phonseg/metrics.hpp"

namespace phonseg::asr {

void AsrConfig::validate() const {
  if (feat_dim < 1 || num_phonemes < 1) throw ConfigError("asr: feat_dim and num_phonemes must be positive");
  if (conv_layers < 0 || lstm_layers < 1) throw ConfigError("asr: need >= 0 conv layers and >= 1 BiLSTM layer");
  if (conv_width < 1 || lstm_hidden < 1 || bottleneck_dim < 1) throw ConfigError("asr: widths must be positive");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("asr: conv_kernel must be odd");
  if (bottleneck_dim >= context_dim()) {
    throw ConfigError("asr: bottleneck_dim must be smaller than the context dim (2 * lstm_hidden)");
  }
  if (bottleneck_activation != "affine") throw ConfigError("asr: bottleneck_activation must be 'affine'");
}

nlohmann::json AsrConfig::to_json() const {
  return {{"feat_dim", feat_dim},       {"num_phonemes", num_phonemes},
          {"conv_layers", conv_layers}, {"conv_width", conv_width},
          {"conv_kernel", conv_kernel}, {"lstm_layers", lstm_layers},
          {"lstm_hidden", lstm_hidden}, {"bottleneck_dim", bottleneck_dim},
          {"bottleneck_activation", bottleneck_activation}, {"seed", seed}};
}

AsrConfig AsrConfig::from_json(const nlohmann::json& j) {
  AsrConfig c;
  StrictObject o(j, "asr");
  o.get("feat_dim", c.feat_dim);
  o.get("num_phonemes", c.num_phonemes);
  o.get("conv_layers", c.conv_layers);
  o.get("conv_width", c.conv_width);
  o.get("conv_kernel", c.conv_kernel);
  o.get("lstm_layers", c.lstm_layers);
  o.get("lstm_hidden", c.lstm_hidden);
  o.get("bottleneck_dim", c.bottleneck_dim);
  o.get("bottleneck_activation", c.bottleneck_activation);
  o.get("seed", c.seed);
  o.finish();
  return c;
}

nlohmann::json AsrTrainConfig::to_json() const {
  return {{"epochs", epochs}, {"lr", lr}, {"batch_size", batch_size}, {"clip_norm", clip_norm}, {"seed", seed}};
}

AsrTrainConfig AsrTrainConfig::from_json(const nlohmann::json& j) {
  AsrTrainConfig c;
  StrictObject o(j, "asr_train");
  o.get("epochs", c.epochs);
  o.get("lr", c.lr);
  o.get("batch_size", c.batch_size);
  o.get("clip_norm", c.clip_norm);
  o.get("seed", c.seed);
  o.finish();
  if (c.epochs < 0 || c.batch_size < 1 || c.lr < 0.0) throw ConfigError("asr_train: bad hyperparameters");
  return c;
}

AsrModel::AsrModel(const AsrConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  num::Rng rng(cfg_.seed);
  int width = cfg_.feat_dim;
  for (int i = 0; i < cfg_.conv_layers; ++i) {
    convs_.push_back(num::Conv1d::create(store_, "conv" + std::to_string(i), width, cfg_.conv_width,
                                         cfg_.conv_kernel, rng));
    width = cfg_.conv_width;
  }
  for (int i = 0; i < cfg_.lstm_layers; ++i) {
    lstms_.push_back(num::BiLstm::create(store_, "blstm" + std::to_string(i), width, cfg_.lstm_hidden, rng));
    width = cfg_.context_dim();
  }
  bottleneck_ = num::Linear::create(store_, "bottleneck", width, cfg_.bottleneck_dim, rng);
  classifier_ = num::Linear::create(store_, "classifier", cfg_.bottleneck_dim, cfg_.num_classes(), rng);
}

AsrVars AsrModel::forward(num::Tape& t, num::Var features) const {
  if (features.cols() != cfg_.feat_dim) {
    throw ConfigError("asr: features have " + std::to_string(features.cols()) + " dims, model expects " +
                      std::to_string(cfg_.feat_dim));
  }
  if (features.rows() < 1) throw DataError("asr: empty feature sequence");
  num::Var h = features;
  for (const auto& conv : convs_) h = num::relu(conv(t, h));
  for (const auto& lstm : lstms_) h = lstm(t, h);
  AsrVars v;
  v.context = h;
  v.bottleneck = bottleneck_(t, h);
  v.logits = classifier_(t, v.bottleneck);
  v.log_posteriors = num::log_softmax_rows(v.logits);
  return v;
}

AsrOutputs AsrModel::infer(const Matrix& features) const {
  num::Tape t(false);
  AsrVars v = forward(t, t.constant(features));
  return {v.context.value(), v.bottleneck.value(), v.log_posteriors.value()};
}

void AsrModel::save(const std::filesystem::path& dir) const {
  store_.save(dir, {{"kind", "asr"}, {"config", cfg_.to_json()}});
}

AsrModel AsrModel::load(const std::filesystem::path& dir) {
  const auto meta = num::ParamStore::read_metadata(dir);
  if (meta.value("kind", "") != "asr") throw IoError("not an ASR checkpoint: " + dir.string());
  AsrModel m(AsrConfig::from_json(meta.at("config")));
  m.store_.load(dir);
  return m;
}

double mean_ctc_loss(const AsrModel& model, const std::vector<synth::Utterance>& utts) {
  if (utts.empty()) throw DataError("asr: no utterances");
  double total = 0.0;
  for (const auto& u : utts) {
    num::Tape t(false);
    AsrVars v = model.forward(t, t.constant(u.features));
    total += ctc::ctc_loss(v.logits, u.phonemes).scalar();
  }
  return total / static_cast<double>(utts.size());
}

double greedy_per(const AsrModel& model, const std::vector<synth::Utterance>& utts) {
  metrics::RateAccumulator acc;
  for (const auto& u : utts) acc.add(ctc::greedy_decode(model.infer(u.features).log_posteriors), u.phonemes);
  return acc.rate();
}

TrainReport asr_train(AsrModel& model, const std::vector<synth::Utterance>& train,
                      const std::vector<synth::Utterance>& val, const AsrTrainConfig& hyper) {
  if (train.empty() || val.empty()) throw DataError("asr_train: train and val splits must be nonempty");
  for (const auto* split : {&train, &val}) {
    for (const auto& u : *split) {
      for (int p : u.phonemes) {
        if (p < 0 || p >= model.config().num_phonemes) throw DataError("asr_train: phoneme id outside [0, K)");
      }
    }
  }
  num::ParamStore& store = model.store();
  TrainReport report;
  report.val_metric_name = "per";
  report.initial_loss = mean_ctc_loss(model, train);
  report.best_val = greedy_per(model, val);
  auto best = store.snapshot();

  num::Rng rng(hyper.seed);
  const num::AdamOptions adam{hyper.lr};
  store.zero_grad();
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto order = shuffled_order(train.size(), rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
      Matrix seed(1, 1);
      seed(0, 0) = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto& u = train[order[k]];
        num::Tape t;
        AsrVars v = model.forward(t, t.constant(u.features));
        num::Var loss = ctc::ctc_loss(v.logits, u.phonemes);
        if (!std::isfinite(loss.scalar())) throw TrainingError("asr_train: non-finite CTC loss on " + u.id);
        epoch_total += loss.scalar();
        t.backward(loss, seed);
      }
      if (hyper.clip_norm > 0.0) store.clip_grad_norm(hyper.clip_norm);
      store.adam_step(adam);
      ++report.steps;
    }
    report.epoch_loss.push_back(epoch_total / static_cast<double>(train.size()));
    const double per = greedy_per(model, val);
    report.val_metric.push_back(per);
    if (report.best_epoch < 0 || per < report.best_val) {
      report.best_val = per;
      report.best_epoch = epoch;
      best = store.snapshot();
    }
  }
  store.restore(best);
  return report;
}

}  // namespace phonseg::asr
