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

#include "phonseg/reprext.hpp"

#include <cmath>

#include "phonseg/ctc.hpp"
#include "phonseg/error.hpp"
#include "phonseg/io.hpp"
#include "phonseg/json_util.hpp"
#include "phonseg/numcore/ptns.hpp"

namespace phonseg::rep {

FrameLabeled categorize(const asr::AsrOutputs& outputs) {
  if (outputs.bottleneck.rows() != outputs.log_posteriors.rows()) {
    throw DimensionError("categorize: bottleneck and posteriors disagree on T");
  }
  return {outputs.bottleneck, ctc::frame_argmax(outputs.log_posteriors), ctc::blank_id(outputs.log_posteriors)};
}

SprSeq merge(const FrameLabeled& fl) {
  const auto T = static_cast<int>(fl.labels.size());
  if (fl.bottleneck.rows() != T) throw DimensionError("merge: labels length must equal T");
  std::vector<Span> runs;
  std::vector<int> cats;
  for (int t = 0; t < T;) {
    int end = t + 1;
    while (end < T && fl.labels[static_cast<std::size_t>(end)] == fl.labels[static_cast<std::size_t>(t)]) ++end;
    const int label = fl.labels[static_cast<std::size_t>(t)];
    if (label != fl.blank) {
      runs.push_back({t, end});
      cats.push_back(label);
    }
    t = end;
  }
  SprSeq out;
  out.vectors = Matrix(static_cast<Eigen::Index>(runs.size()), fl.bottleneck.cols());
  for (std::size_t n = 0; n < runs.size(); ++n) {
    const Span& s = runs[n];
    out.vectors.row(static_cast<Eigen::Index>(n)) =
        fl.bottleneck.middleRows(s.start, s.end - s.start).colwise().mean();
  }
  out.categories = std::move(cats);
  out.spans = std::move(runs);
  return out;
}

SprSeq extract_spr(const asr::AsrModel& model, const Matrix& features) {
  return merge(categorize(model.infer(features)));
}

void UprConfig::validate() const {
  if (feat_dim < 1 || conv_width < 1 || lstm_hidden < 1 || upr_dim < 1) {
    throw ConfigError("upr: dims must be positive");
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("upr: conv_kernel must be odd");
}

nlohmann::json UprConfig::to_json() const {
  return {{"feat_dim", feat_dim},       {"conv_width", conv_width}, {"conv_kernel", conv_kernel},
          {"lstm_hidden", lstm_hidden}, {"upr_dim", upr_dim},       {"seed", seed}};
}

UprConfig UprConfig::from_json(const nlohmann::json& j) {
  UprConfig c;
  StrictObject o(j, "upr");
  o.get("feat_dim", c.feat_dim);
  o.get("conv_width", c.conv_width);
  o.get("conv_kernel", c.conv_kernel);
  o.get("lstm_hidden", c.lstm_hidden);
  o.get("upr_dim", c.upr_dim);
  o.get("seed", c.seed);
  o.finish();
  return c;
}

nlohmann::json UprTrainConfig::to_json() const {
  return {{"epochs", epochs},       {"lr", lr},          {"batch_size", batch_size},
          {"mask_prob", mask_prob}, {"clip_norm", clip_norm}, {"seed", seed}};
}

UprTrainConfig UprTrainConfig::from_json(const nlohmann::json& j) {
  UprTrainConfig c;
  StrictObject o(j, "upr_train");
  o.get("epochs", c.epochs);
  o.get("lr", c.lr);
  o.get("batch_size", c.batch_size);
  o.get("mask_prob", c.mask_prob);
  o.get("clip_norm", c.clip_norm);
  o.get("seed", c.seed);
  o.finish();
  if (c.epochs < 0 || c.batch_size < 1 || c.lr < 0.0 || c.mask_prob < 0.0 || c.mask_prob >= 1.0) {
    throw ConfigError("upr_train: bad hyperparameters");
  }
  return c;
}

UprEncoder::UprEncoder(const UprConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  num::Rng rng(cfg_.seed);
  conv_ = num::Conv1d::create(store_, "conv", cfg_.feat_dim, cfg_.conv_width, cfg_.conv_kernel, rng);
  lstm_ = num::BiLstm::create(store_, "blstm", cfg_.conv_width, cfg_.lstm_hidden, rng);
  latent_ = num::Linear::create(store_, "latent", lstm_.out_dim(), cfg_.upr_dim, rng);
  readout_ = num::Linear::create(store_, "readout", cfg_.upr_dim, cfg_.feat_dim, rng);
  norm_mean_ = &store_.zeros("norm.mean", 1, cfg_.upr_dim);
  norm_scale_ = &store_.create("norm.scale", Matrix::Ones(1, cfg_.upr_dim));
}

num::Var UprEncoder::encode(num::Tape& t, num::Var features) const {
  if (features.cols() != cfg_.feat_dim) throw ConfigError("upr: feature dim mismatch");
  if (features.rows() < 1) throw DataError("upr: empty feature sequence");
  return latent_(t, lstm_(t, num::relu(conv_(t, features))));
}

void UprEncoder::fit_normalization(const std::vector<synth::Utterance>& utts) {
  if (utts.empty()) throw DataError("upr: no utterances to fit normalization");
  const auto D = cfg_.upr_dim;
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(D);
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(D);
  double n = 0.0;
  for (const auto& u : utts) {
    num::Tape t(false);
    const Matrix z = encode(t, t.constant(u.features)).value();
    sum += z.colwise().sum();
    sq += z.array().square().matrix().colwise().sum();
    n += static_cast<double>(z.rows());
  }
  const Eigen::RowVectorXd mean = sum / n;
  const Eigen::RowVectorXd var = (sq / n - mean.cwiseAbs2()).cwiseMax(0.0);
  norm_mean_->value = mean;
  // Constant dimensions keep unit scale.
  norm_scale_->value = var.unaryExpr([](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; });
}

Matrix UprEncoder::standardize(const Matrix& latents) const {
  return ((latents.rowwise() - norm_mean_->value.row(0)).array().rowwise() * norm_scale_->value.row(0).array())
      .matrix();
}

num::Var UprEncoder::reconstruct(num::Tape& t, num::Var latents) const { return readout_(t, latents); }

num::Var UprEncoder::masked_loss(num::Tape& t, const Matrix& features, double mask_prob, num::Rng& rng) const {
  const auto T = static_cast<int>(features.rows());
  std::vector<int> masked;
  if (mask_prob > 0.0) {
    for (int i = 0; i < T; ++i) {
      if (rng.uniform() < mask_prob) masked.push_back(i);
    }
    if (masked.empty()) masked.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(T))));
  }
  Matrix input = features;
  for (int i : masked) input.row(i).setZero();
  num::Var recon = reconstruct(t, encode(t, t.constant(std::move(input))));
  if (masked.empty()) return num::mse(recon, t.constant(features));
  Matrix target(static_cast<Eigen::Index>(masked.size()), features.cols());
  for (std::size_t k = 0; k < masked.size(); ++k) target.row(static_cast<Eigen::Index>(k)) = features.row(masked[k]);
  return num::mse(num::gather_rows(recon, masked), t.constant(std::move(target)));
}

void UprEncoder::save(const std::filesystem::path& dir) const {
  store_.save(dir, {{"kind", "upr"}, {"config", cfg_.to_json()}});
}

UprEncoder UprEncoder::load(const std::filesystem::path& dir) {
  const auto meta = num::ParamStore::read_metadata(dir);
  if (meta.value("kind", "") != "upr") throw IoError("not a UPR checkpoint: " + dir.string());
  UprEncoder e(UprConfig::from_json(meta.at("config")));
  e.store_.load(dir);
  return e;
}

double mean_upr_loss(const UprEncoder& enc, const std::vector<synth::Utterance>& utts, double mask_prob,
                     std::uint64_t mask_seed) {
  if (utts.empty()) throw DataError("upr: no utterances");
  num::Rng rng(mask_seed);
  double total = 0.0;
  for (const auto& u : utts) {
    num::Tape t(false);
    total += enc.masked_loss(t, u.features, mask_prob, rng).scalar();
  }
  return total / static_cast<double>(utts.size());
}

TrainReport train_upr_encoder(UprEncoder& enc, const std::vector<synth::Utterance>& train,
                              const std::vector<synth::Utterance>& val, const UprTrainConfig& hyper) {
  if (train.empty() || val.empty()) throw DataError("train_upr: train and val splits must be nonempty");
  constexpr std::uint64_t kEvalMaskSeed = 0x5eed;
  num::ParamStore& store = enc.store();
  TrainReport report;
  report.val_metric_name = "masked_l2";
  report.initial_loss = mean_upr_loss(enc, train, hyper.mask_prob, kEvalMaskSeed);
  report.best_val = mean_upr_loss(enc, val, hyper.mask_prob, kEvalMaskSeed);
  auto best = store.snapshot();

  num::Rng order_rng(hyper.seed);
  num::Rng mask_rng = order_rng.fork(1);
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
        num::Tape t;
        num::Var loss = enc.masked_loss(t, train[order[k]].features, hyper.mask_prob, mask_rng);
        epoch_total += loss.scalar();
        t.backward(loss, seed);
      }
      if (hyper.clip_norm > 0.0) store.clip_grad_norm(hyper.clip_norm);
      store.adam_step(adam);
      ++report.steps;
    }
    report.epoch_loss.push_back(epoch_total / static_cast<double>(train.size()));
    const double v = mean_upr_loss(enc, val, hyper.mask_prob, kEvalMaskSeed);
    report.val_metric.push_back(v);
    if (report.best_epoch < 0 || v < report.best_val) {
      report.best_val = v;
      report.best_epoch = epoch;
      best = store.snapshot();
    }
  }
  store.restore(best);
  enc.fit_normalization(train);
  return report;
}

UprSeq extract_upr(const UprEncoder& enc, const Matrix& features) {
  num::Tape t(false);
  return {enc.standardize(enc.encode(t, t.constant(features)).value()), enc.config().receptive_radius()};
}

nlohmann::json spr_sidecar(const SprSeq& s, int frames) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& sp : s.spans) spans.push_back({sp.start, sp.end});
  return {{"kind", "spr"}, {"frames", frames}, {"categories", s.categories}, {"spans", spans}};
}

nlohmann::json upr_sidecar(const UprSeq& u) {
  return {{"kind", "upr"}, {"frames", u.size()}, {"receptive_radius", u.receptive_radius}};
}

namespace {

nlohmann::json read_sidecar(const std::filesystem::path& file, const char* kind) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(file));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad sidecar " + file.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("kind", "") != kind) throw IoError("sidecar kind mismatch: " + file.string());
  return j;
}

}  // namespace

void save_spr(const std::filesystem::path& dir, const std::string& id, const SprSeq& s, int frames) {
  num::save_matrix(dir / (id + ".ptns"), s.vectors);
  io::write_text(dir / (id + ".json"), spr_sidecar(s, frames).dump() + "\n");
}

SprSeq load_spr(const std::filesystem::path& dir, const std::string& id) {
  const auto j = read_sidecar(dir / (id + ".json"), "spr");
  SprSeq s;
  s.vectors = num::load_matrix(dir / (id + ".ptns"));
  s.categories = j.at("categories").get<std::vector<int>>();
  for (const auto& sp : j.at("spans")) s.spans.push_back({sp.at(0).get<int>(), sp.at(1).get<int>()});
  if (s.spans.size() != s.categories.size()) throw IoError("SPR sidecar spans/categories disagree: " + id);
  // An empty sequence has no columns on disk.
  if (s.categories.empty()) s.vectors.resize(0, s.vectors.cols());
  if (s.vectors.rows() != s.size()) throw IoError("SPR tensor rows disagree with sidecar: " + id);
  return s;
}

void save_upr(const std::filesystem::path& dir, const std::string& id, const UprSeq& u) {
  num::save_matrix(dir / (id + ".ptns"), u.vectors);
  io::write_text(dir / (id + ".json"), upr_sidecar(u).dump() + "\n");
}

UprSeq load_upr(const std::filesystem::path& dir, const std::string& id) {
  const auto j = read_sidecar(dir / (id + ".json"), "upr");
  UprSeq u{num::load_matrix(dir / (id + ".ptns")), j.at("receptive_radius").get<int>()};
  if (u.size() != j.at("frames").get<int>()) throw IoError("UPR tensor rows disagree with sidecar: " + id);
  return u;
}

}  // namespace phonseg::rep
