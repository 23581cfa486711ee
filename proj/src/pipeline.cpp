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

#include "phonseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <set>

#include "phonseg/ctc.hpp"
#include "phonseg/hash.hpp"
#include "phonseg/io.hpp"
#include "phonseg/json_util.hpp"
#include "phonseg/metrics.hpp"
#include "phonseg/numcore/ptns.hpp"

namespace phonseg::pipeline {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;
using acoustic::Example;
using acoustic::Seq2Seq;
using acoustic::StreamInput;
using num::Matrix;

const std::vector<std::string> kVariants{"proposed", "spr_only", "upr_only", "taco_char", "taco_phone"};
const char* kAggregateId = "__all__";

json patched(json base, const json& patch, const std::string& context) {
  if (!patch.is_object()) throw ConfigError(context + ": expected an object");
  base.merge_patch(patch);
  return base;
}

acoustic::AcousticTrainConfig acoustic_hyper(int epochs, int batch) {
  acoustic::AcousticTrainConfig h;
  h.epochs = epochs;
  h.lr = 3e-3;
  h.batch_size = batch;
  return h;
}

void derive_acoustic_defaults(ExperimentConfig& c) {
  const synth::ToyLangSpec spec = c.corpus.lang();
  c.ttr_upr = acoustic::ttr_config(spec.num_chars, c.upr.upr_dim);
  c.ttr_upr.frames_per_step = 4;
  c.ttr_upr_train = acoustic_hyper(30, 2);
  c.ttr_spr = acoustic::ttr_config(spec.num_chars, c.asr.bottleneck_dim);
  c.ttr_spr_train = acoustic_hyper(20, 8);
  if (c.variant == "taco_char") {
    c.rtm = acoustic::taco_config(spec.num_chars, spec.mel_dim);
  } else if (c.variant == "taco_phone") {
    c.rtm = acoustic::taco_config(spec.num_phonemes, spec.mel_dim);
  } else {
    c.rtm = acoustic::rtm_config(c.upr.upr_dim, c.asr.bottleneck_dim, spec.mel_dim,
                                 c.variant == "proposed" ? "none" : c.variant);
  }
  c.rtm_train = acoustic_hyper(20, 8);
}

void check_variant(const std::string& v) {
  if (std::find(kVariants.begin(), kVariants.end(), v) == kVariants.end()) {
    throw ConfigError("variant must be one of proposed, spr_only, upr_only, taco_char, taco_phone; got " + v);
  }
}

CorpusConfig parse_corpus(const json& j) {
  if (!j.is_object()) throw ConfigError("config.corpus: expected an object");
  CorpusConfig c;
  StrictObject o(j, "config.corpus");
  o.get("lang_seed", c.lang_seed);
  o.get("noise_sigma", c.noise_sigma);
  o.get("min_duration", c.min_duration);
  o.get("max_duration", c.max_duration);
  o.get("min_chars", c.min_chars);
  o.get("max_chars", c.max_chars);
  o.get("n_train", c.plan.n_train);
  o.get("n_val", c.plan.n_val);
  o.get("n_test", c.plan.n_test);
  o.get("unique_texts", c.plan.unique_texts);
  o.finish();
  return c;
}

json cluster_options_json(const analysis::ClusterOptions& a) {
  return {{"per_class", a.per_class}, {"max_classes", a.max_classes}, {"seed", a.seed}};
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void check_ttr(const acoustic::AcousticConfig& c, const std::string& name, int vocab, int out_dim) {
  c.validate();
  require(c.role == "ttr", name + ": role must be ttr");
  require(c.streams.size() == 1 && c.streams[0].kind == "embedding" && c.streams[0].vocab == vocab,
          name + ": needs one embedding stream over " + std::to_string(vocab) + " characters");
  require(c.out_dim == out_dim, name + ": out_dim " + std::to_string(c.out_dim) + " != representation dim " +
                                    std::to_string(out_dim));
}

// ---------------------------------------------------------------------------
// Stage execution

struct StageOutput {
  json metrics = json::object();
  std::string checkpoint;  // relative to the stage directory
  std::int64_t steps = 0;
};

std::vector<std::string> upstream(const ExperimentConfig& cfg, const std::string& stage) {
  if (stage == "gen_data") return {};
  if (stage == "train_asr" || stage == "train_upr") return {"gen_data"};
  if (stage == "extract_spr") return {"gen_data", "train_asr"};
  if (stage == "extract_upr") return {"gen_data", "train_upr"};
  if (stage == "train_ttr_upr") return {"gen_data", "extract_upr"};
  if (stage == "train_ttr_spr") return {"gen_data", "extract_spr"};
  if (stage == "train_rtm") {
    std::vector<std::string> u{"gen_data"};
    if (cfg.uses_upr()) u.push_back("extract_upr");
    if (cfg.uses_spr()) u.push_back("extract_spr");
    return u;
  }
  if (stage == "synth") {
    std::vector<std::string> u{"gen_data"};
    if (cfg.uses_upr()) u.push_back("train_ttr_upr");
    if (cfg.uses_spr()) u.push_back("train_ttr_spr");
    u.push_back("train_rtm");
    return u;
  }
  if (stage == "eval") return {"gen_data", "train_asr", "extract_spr", "extract_upr", "train_rtm", "synth"};
  if (stage == "analyze") return {"gen_data", "extract_spr", "extract_upr"};
  throw ConfigError("unknown stage " + stage);
}

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, fs::path root) : cfg_(cfg), root_(std::move(root)) {}

  const RunManifest& manifest() const { return manifest_; }
  fs::path dir_of(const std::string& stage) const { return root_ / done_.at(stage).dir; }
  const StageRecord& record(const std::string& stage) const { return done_.at(stage); }

  void run(const std::string& stage);

 private:
  StageOutput execute(const std::string& stage, const fs::path& dir);

  synth::Corpus corpus() const { return synth::load_corpus(dir_of("gen_data") / "corpus"); }
  std::vector<StreamInput> rtm_inputs(const synth::Utterance& u) const;
  std::vector<Example> rtm_examples(const std::vector<synth::Utterance>& utts, std::size_t* skipped) const;

  StageOutput gen_data(const fs::path& dir);
  StageOutput train_asr(const fs::path& dir);
  StageOutput train_upr(const fs::path& dir);
  StageOutput extract(const fs::path& dir, bool spr);
  StageOutput train_ttr(const fs::path& dir, bool upr);
  StageOutput train_rtm(const fs::path& dir);
  StageOutput synth(const fs::path& dir);
  StageOutput eval(const fs::path& dir);
  StageOutput analyze(const fs::path& dir);

  const ExperimentConfig& cfg_;
  fs::path root_;
  std::map<std::string, StageRecord> done_;
  RunManifest manifest_;
};

void Runner::run(const std::string& stage) {
  const auto ups = upstream(cfg_, stage);
  std::vector<std::string> hashes;
  std::vector<fs::path> roots;
  for (const auto& u : ups) {
    hashes.push_back(done_.at(u).config_hash);
    roots.push_back(dir_of(u));
  }
  const json conf = stage_config(cfg_, stage);
  StageRecord rec;
  rec.stage = stage;
  rec.config_hash = stage_hash(stage, conf, hashes);
  rec.dir = (fs::path("stages") / (stage + "-" + rec.config_hash)).generic_string();
  const fs::path dir = root_ / rec.dir;
  const fs::path marker = dir / "stage.json";
  const auto t0 = Clock::now();
  try {
    if (fs::exists(marker)) {
      io::ReadAudit audit({dir});
      const json j = json::parse(io::read_text(marker));
      if (j.at("config_hash").get<std::string>() != rec.config_hash) {
        throw IoError("stage marker hash mismatch in " + dir.string());
      }
      rec.metrics = j.at("metrics");
      rec.checkpoint = j.at("checkpoint").get<std::string>();
      rec.reads = j.at("reads").get<std::vector<std::string>>();
      rec.cached = true;
    } else {
      // Anything here is the residue of an interrupted run.
      fs::remove_all(dir);
      fs::create_directories(dir);
      roots.push_back(dir);
      StageOutput out;
      std::set<std::string> read_dirs;
      {
        io::ReadAudit audit(roots);
        out = execute(stage, dir);
        for (const auto& r : audit.reads()) {
          for (std::size_t i = 0; i < roots.size(); ++i) {
            if (io::path_within(r, roots[i])) {
              read_dirs.insert(i < ups.size() ? done_.at(ups[i]).dir : rec.dir);
              break;
            }
          }
        }
      }
      rec.reads.assign(read_dirs.begin(), read_dirs.end());
      rec.metrics = out.metrics;
      rec.steps = out.steps;
      if (!out.checkpoint.empty()) rec.checkpoint = (fs::path(rec.dir) / out.checkpoint).generic_string();
      json inputs = json::array();
      for (std::size_t i = 0; i < ups.size(); ++i) inputs.push_back({{"stage", ups[i]}, {"config_hash", hashes[i]}});
      const json j{{"schema_version", kSchemaVersion}, {"stage", stage},          {"config_hash", rec.config_hash},
                   {"config", conf},                   {"inputs", inputs},        {"metrics", rec.metrics},
                   {"checkpoint", rec.checkpoint}, {"reads", rec.reads}};
      io::write_text(marker, j.dump(2) + "\n");
    }
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.kind(), e.what());
  } catch (const json::exception& e) {
    throw StageError(stage, "io", e.what());
  } catch (const std::exception& e) {
    throw StageError(stage, "internal", e.what());
  }
  rec.wall_time = std::chrono::duration<double>(Clock::now() - t0).count();
  done_[stage] = rec;
  manifest_.stages.push_back(rec);
}

StageOutput Runner::execute(const std::string& stage, const fs::path& dir) {
  if (stage == "gen_data") return gen_data(dir);
  if (stage == "train_asr") return train_asr(dir);
  if (stage == "train_upr") return train_upr(dir);
  if (stage == "extract_spr") return extract(dir, true);
  if (stage == "extract_upr") return extract(dir, false);
  if (stage == "train_ttr_upr") return train_ttr(dir, true);
  if (stage == "train_ttr_spr") return train_ttr(dir, false);
  if (stage == "train_rtm") return train_rtm(dir);
  if (stage == "synth") return synth(dir);
  if (stage == "eval") return eval(dir);
  return analyze(dir);
}

StageOutput Runner::gen_data(const fs::path& dir) {
  const synth::ToyLangSpec spec = cfg_.corpus.lang();
  const synth::Corpus c = synth::gen_corpus(spec, cfg_.corpus.plan, cfg_.seed);
  synth::save_corpus(c, dir / "corpus");
  long frames = 0;
  for (const auto& u : c.train) frames += u.frames();
  StageOutput out;
  out.metrics = {{"n_train", c.train.size()}, {"n_val", c.val.size()}, {"n_test", c.test.size()},
                 {"train_frames", frames}};
  return out;
}

StageOutput Runner::train_asr(const fs::path& dir) {
  const synth::Corpus c = corpus();
  asr::AsrModel m(cfg_.asr);
  const TrainReport r = asr::asr_train(m, c.train, c.val, cfg_.asr_train);
  m.save(dir / "model");
  StageOutput out;
  out.metrics = {{"train", r.to_json()},
                 {"per_train", asr::greedy_per(m, c.train)},
                 {"per_val", asr::greedy_per(m, c.val)},
                 {"per_test", asr::greedy_per(m, c.test)}};
  out.checkpoint = "model";
  out.steps = r.steps;
  return out;
}

StageOutput Runner::train_upr(const fs::path& dir) {
  const synth::Corpus c = corpus();
  rep::UprEncoder enc(cfg_.upr);
  const TrainReport r = rep::train_upr_encoder(enc, c.train, c.val, cfg_.upr_train);
  enc.save(dir / "model");
  StageOutput out;
  out.metrics = {{"train", r.to_json()}};
  out.checkpoint = "model";
  out.steps = r.steps;
  return out;
}

StageOutput Runner::extract(const fs::path& dir, bool spr) {
  const synth::Corpus c = corpus();
  std::optional<asr::AsrModel> asr;
  std::optional<rep::UprEncoder> enc;
  if (spr) {
    asr.emplace(asr::AsrModel::load(dir_of("train_asr") / "model"));
  } else {
    enc.emplace(rep::UprEncoder::load(dir_of("train_upr") / "model"));
  }
  StageOutput out;
  for (const char* split : {"train", "val", "test"}) {
    std::vector<metrics::LengthPair> pairs;
    std::size_t empty = 0;
    for (const auto& u : c.split(split)) {
      int n = 0;
      if (spr) {
        const rep::SprSeq s = rep::extract_spr(*asr, u.features);
        rep::save_spr(dir / "reps", u.id, s, u.frames());
        n = s.size();
      } else {
        const rep::UprSeq s = rep::extract_upr(*enc, u.features);
        rep::save_upr(dir / "reps", u.id, s);
        n = s.size();
      }
      empty += n == 0;
      pairs.push_back(analysis::length_pair(n, u));
    }
    out.metrics[split] = {{"ld", metrics::length_difference(pairs)},
                          {"lmr", metrics::length_mismatch_rate(pairs)},
                          {"empty", empty}};
  }
  return out;
}

StageOutput Runner::train_ttr(const fs::path& dir, bool upr) {
  const synth::Corpus c = corpus();
  const fs::path reps = dir_of(upr ? "extract_upr" : "extract_spr") / "reps";
  std::size_t skipped = 0;
  auto examples = [&](const std::vector<synth::Utterance>& utts) {
    std::vector<Example> out;
    for (const auto& u : utts) {
      Matrix target = upr ? rep::load_upr(reps, u.id).vectors : rep::load_spr(reps, u.id).vectors;
      if (target.rows() == 0) {
        ++skipped;
        continue;
      }
      out.push_back({u.id, {StreamInput::from_ids(u.chars)}, std::move(target)});
    }
    return out;
  };
  const auto train = examples(c.train);
  const auto val = examples(c.val);
  Seq2Seq m(upr ? cfg_.ttr_upr : cfg_.ttr_spr);
  const TrainReport r = acoustic::train(m, train, val, upr ? cfg_.ttr_upr_train : cfg_.ttr_spr_train);
  m.save(dir / "model");
  StageOutput out;
  out.metrics = {{"train", r.to_json()}, {"skipped_empty", skipped}};
  out.checkpoint = "model";
  out.steps = r.steps;
  return out;
}

std::vector<StreamInput> Runner::rtm_inputs(const synth::Utterance& u) const {
  if (cfg_.variant == "taco_char") return {StreamInput::from_ids(u.chars)};
  if (cfg_.variant == "taco_phone") return {StreamInput::from_ids(u.phonemes)};
  std::vector<StreamInput> in;
  for (const auto& s : cfg_.rtm.streams) {
    if (s.name == "upr") {
      in.push_back(StreamInput::from_dense(rep::load_upr(dir_of("extract_upr") / "reps", u.id).vectors));
    } else {
      in.push_back(StreamInput::from_dense(rep::load_spr(dir_of("extract_spr") / "reps", u.id).vectors));
    }
  }
  return in;
}

std::vector<Example> Runner::rtm_examples(const std::vector<synth::Utterance>& utts, std::size_t* skipped) const {
  std::vector<Example> out;
  for (const auto& u : utts) {
    auto in = rtm_inputs(u);
    if (std::any_of(in.begin(), in.end(), [](const StreamInput& s) { return s.length() == 0; })) {
      if (skipped != nullptr) ++*skipped;
      continue;
    }
    out.push_back({u.id, std::move(in), u.mel});
  }
  return out;
}

StageOutput Runner::train_rtm(const fs::path& dir) {
  const synth::Corpus c = corpus();
  std::size_t skipped = 0;
  const auto train = rtm_examples(c.train, &skipped);
  const auto val = rtm_examples(c.val, &skipped);
  Seq2Seq m(cfg_.rtm);
  const TrainReport r = acoustic::train(m, train, val, cfg_.rtm_train);
  m.save(dir / "model");
  StageOutput out;
  out.metrics = {{"train", r.to_json()}, {"val_output_l1", acoustic::mean_output_l1(m, val)},
                 {"skipped_empty", skipped}};
  out.checkpoint = "model";
  out.steps = r.steps;
  return out;
}

struct Models {
  std::optional<Seq2Seq> ttr_upr;
  std::optional<Seq2Seq> ttr_spr;
  std::optional<Seq2Seq> rtm;
};

acoustic::Synthesis synthesize_with(const ExperimentConfig& cfg, const Models& m, const synth::ToyLangSpec& spec,
                                    const std::vector<int>& chars) {
  if (!cfg.is_taco()) {
    return acoustic::synthesize(chars, m.ttr_upr ? &*m.ttr_upr : nullptr, m.ttr_spr ? &*m.ttr_spr : nullptr, *m.rtm);
  }
  const std::vector<int> ids = cfg.variant == "taco_char" ? chars : synth::g2p_apply(spec, chars);
  acoustic::Inference inf = m.rtm->infer({StreamInput::from_ids(ids)});
  acoustic::Synthesis s;
  s.mel = std::move(inf.frames);
  s.truncated = inf.truncated;
  return s;
}

Models load_models(const ExperimentConfig& cfg, const std::function<fs::path(const std::string&)>& dir_of) {
  Models m;
  if (cfg.uses_upr()) m.ttr_upr.emplace(Seq2Seq::load(dir_of("train_ttr_upr") / "model"));
  if (cfg.uses_spr()) m.ttr_spr.emplace(Seq2Seq::load(dir_of("train_ttr_spr") / "model"));
  m.rtm.emplace(Seq2Seq::load(dir_of("train_rtm") / "model"));
  return m;
}

StageOutput Runner::synth(const fs::path& dir) {
  const synth::Corpus c = corpus();
  const Models m = load_models(cfg_, [this](const std::string& s) { return dir_of(s); });
  std::size_t truncated = 0;
  long frames = 0;
  for (const auto& u : c.test) {
    const acoustic::Synthesis s = synthesize_with(cfg_, m, c.spec, u.chars);
    truncated += s.truncated;
    frames += s.mel.rows();
    num::save_matrix(dir / "mel" / (u.id + ".ptns"), s.mel);
  }
  StageOutput out;
  out.metrics = {{"utterances", c.test.size()}, {"truncated", truncated}, {"frames", frames}};
  return out;
}

StageOutput Runner::eval(const fs::path& dir) {
  const synth::Corpus c = corpus();
  const asr::AsrModel asr = asr::AsrModel::load(dir_of("train_asr") / "model");
  const Seq2Seq rtm = Seq2Seq::load(dir_of("train_rtm") / "model");
  std::vector<metrics::MetricRow> rows;
  metrics::RateAccumulator per;
  metrics::RateAccumulator cer;
  std::vector<metrics::LengthPair> pairs;
  double l1_sum = 0.0;
  std::size_t l1_count = 0;
  for (const auto& u : c.test) {
    const auto hyp = ctc::greedy_decode(asr.infer(u.features).log_posteriors);
    per.add(hyp, u.phonemes);
    rows.push_back({u.id, "per", metrics::error_rate(hyp, u.phonemes)});

    long n = 0;
    if (cfg_.variant == "taco_char") {
      n = static_cast<long>(u.chars.size());
    } else if (cfg_.variant == "taco_phone") {
      n = static_cast<long>(u.phonemes.size());
    } else if (cfg_.variant == "upr_only") {
      n = rep::load_upr(dir_of("extract_upr") / "reps", u.id).size();
    } else {
      n = rep::load_spr(dir_of("extract_spr") / "reps", u.id).size();
    }
    const metrics::LengthPair pair = analysis::length_pair(static_cast<int>(n), u);
    pairs.push_back(pair);
    rows.push_back({u.id, "ld", metrics::length_difference(std::span(&pair, 1))});
    rows.push_back({u.id, "lmr", metrics::length_mismatch_rate(std::span(&pair, 1))});

    const auto ex = rtm_examples({u}, nullptr);
    if (!ex.empty()) {
      const double l1 = acoustic::mean_output_l1(rtm, ex);
      l1_sum += l1;
      ++l1_count;
      rows.push_back({u.id, "mel_l1", l1});
    }

    const Matrix mel = num::load_matrix(dir_of("synth") / "mel" / (u.id + ".ptns"));
    const auto decoded = toy_decode(c.spec, mel);
    cer.add(decoded, u.phonemes);
    rows.push_back({u.id, "toy_cer", metrics::error_rate(decoded, u.phonemes)});
  }
  if (l1_count == 0) throw DataError("eval: no test utterance has non-empty acoustic inputs");
  const json agg{{"per", per.rate()},
                 {"ld", metrics::length_difference(pairs)},
                 {"lmr", metrics::length_mismatch_rate(pairs)},
                 {"mel_l1", l1_sum / static_cast<double>(l1_count)},
                 {"toy_cer", cer.rate()}};
  for (const char* k : {"per", "ld", "lmr", "mel_l1", "toy_cer"}) rows.push_back({kAggregateId, k, agg.at(k)});
  io::write_text(dir / "eval.csv", metrics::metric_rows_csv(rows));
  StageOutput out;
  out.metrics = agg;
  return out;
}

StageOutput Runner::analyze(const fs::path& dir) {
  const synth::Corpus c = corpus();
  std::vector<analysis::LabeledRep> spr;
  std::vector<analysis::LabeledRep> upr;
  std::size_t spr_total = 0;
  std::size_t upr_total = 0;
  std::vector<metrics::LengthPair> spr_len;
  std::vector<metrics::LengthPair> upr_len;
  for (const auto& u : c.train) {
    const rep::SprSeq s = rep::load_spr(dir_of("extract_spr") / "reps", u.id);
    const rep::UprSeq p = rep::load_upr(dir_of("extract_upr") / "reps", u.id);
    spr_total += static_cast<std::size_t>(s.size());
    upr_total += static_cast<std::size_t>(p.size());
    spr_len.push_back(analysis::length_pair(s.size(), u));
    upr_len.push_back(analysis::length_pair(p.size(), u));
    for (auto& r : analysis::assign_categories(analysis::spr_fields(s), u.alignment, u.frames(), "SPR", u.id)) {
      spr.push_back(std::move(r));
    }
    for (auto& r : analysis::assign_categories(analysis::upr_fields(p), u.alignment, u.frames(), "UPR", u.id)) {
      upr.push_back(std::move(r));
    }
  }
  const auto& opts = cfg_.analysis;
  const analysis::ClusterStats spr_stats = analysis::cluster_stats(spr, opts);
  const analysis::ClusterStats upr_stats = analysis::cluster_stats(upr, opts);
  const double spr_perm = analysis::cluster_stats(analysis::shuffle_labels(spr, opts.seed + 1), opts).silhouette;
  const double upr_perm = analysis::cluster_stats(analysis::shuffle_labels(upr, opts.seed + 1), opts).silhouette;
  auto fraction = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / b; };
  const json stats{
      {"split", "train"},
      {"spr", spr_stats.to_json()},
      {"upr", upr_stats.to_json()},
      {"spr_permuted_silhouette", spr_perm},
      {"upr_permuted_silhouette", upr_perm},
      {"spr_silhouette_exceeds_upr", spr_stats.silhouette > upr_stats.silhouette},
      {"assigned_fraction", {{"spr", fraction(spr.size(), spr_total)}, {"upr", fraction(upr.size(), upr_total)}}},
      {"granularity",
       {{"spr", {{"ld", metrics::length_difference(spr_len)}, {"lmr", metrics::length_mismatch_rate(spr_len)}}},
        {"upr", {{"ld", metrics::length_difference(upr_len)}, {"lmr", metrics::length_mismatch_rate(upr_len)}}}}}};
  io::write_text(dir / "stats.json", stats.dump(2) + "\n");

  std::vector<analysis::LabeledRep> all = spr;
  all.insert(all.end(), upr.begin(), upr.end());
  io::write_text(dir / "labeled_reps.csv", analysis::labeled_reps_csv(all));
  const std::string spr_pca = analysis::pca_csv(spr, analysis::pca_project(analysis::stack_vectors(spr), 2));
  const std::string upr_pca = analysis::pca_csv(upr, analysis::pca_project(analysis::stack_vectors(upr), 2));
  io::write_text(dir / "pca.csv", spr_pca + upr_pca.substr(upr_pca.find('\n') + 1));

  StageOutput out;
  out.metrics = {{"spr_silhouette", spr_stats.silhouette},
                 {"upr_silhouette", upr_stats.silhouette},
                 {"spr_permuted_silhouette", spr_perm},
                 {"upr_permuted_silhouette", upr_perm}};
  return out;
}

RunManifest run_plan(const ExperimentConfig& cfg, const fs::path& root, const fs::path& report,
                     const std::string& target) {
  cfg.validate();
  const auto plan = stage_plan(cfg);
  if (target != "all" && std::find(plan.begin(), plan.end(), target) == plan.end()) {
    throw ConfigError("stage " + target + " is not part of the " + cfg.variant + " plan");
  }
  Runner runner(cfg, root);
  for (const auto& stage : plan) {
    runner.run(stage);
    if (stage == target) break;
  }
  io::write_text(report / "manifest.json", runner.manifest().to_json().dump(2) + "\n");
  io::write_text(report / "run_log.json", runner.manifest().run_log().dump(2) + "\n");
  return runner.manifest();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

synth::ToyLangSpec CorpusConfig::lang() const {
  synth::ToyLangSpec spec = synth::default_lang(lang_seed);
  spec.noise_sigma = noise_sigma;
  spec.min_duration = min_duration;
  spec.max_duration = max_duration;
  spec.min_chars = min_chars;
  spec.max_chars = max_chars;
  return spec;
}

json CorpusConfig::to_json() const {
  return {{"lang_seed", lang_seed},       {"noise_sigma", noise_sigma}, {"min_duration", min_duration},
          {"max_duration", max_duration}, {"min_chars", min_chars},     {"max_chars", max_chars},
          {"n_train", plan.n_train},      {"n_val", plan.n_val},        {"n_test", plan.n_test},
          {"unique_texts", plan.unique_texts}};
}

ExperimentConfig default_config(const std::string& variant) {
  check_variant(variant);
  ExperimentConfig c;
  c.name = variant;
  c.variant = variant;
  const synth::ToyLangSpec spec = c.corpus.lang();
  c.asr.feat_dim = spec.feat_dim;
  c.asr.num_phonemes = spec.num_phonemes;
  c.upr.feat_dim = spec.feat_dim;
  derive_acoustic_defaults(c);
  return c;
}

json ExperimentConfig::to_json() const {
  return {{"schema_version", kSchemaVersion},
          {"name", name},
          {"variant", variant},
          {"seed", seed},
          {"corpus", corpus.to_json()},
          {"asr", asr.to_json()},
          {"asr_train", asr_train.to_json()},
          {"upr", upr.to_json()},
          {"upr_train", upr_train.to_json()},
          {"ttr_upr", ttr_upr.to_json()},
          {"ttr_upr_train", ttr_upr_train.to_json()},
          {"ttr_spr", ttr_spr.to_json()},
          {"ttr_spr_train", ttr_spr_train.to_json()},
          {"rtm", rtm.to_json()},
          {"rtm_train", rtm_train.to_json()},
          {"analysis", cluster_options_json(analysis)}};
}

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected an object");
  StrictObject o(j, "config");
  if (!o.has("schema_version")) throw ConfigError("config.schema_version: missing");
  int version = 0;
  o.get("schema_version", version);
  if (version != kSchemaVersion) {
    throw ConfigError("config.schema_version: expected " + std::to_string(kSchemaVersion) + ", got " +
                      std::to_string(version));
  }
  std::string variant = "proposed";
  o.get("variant", variant);
  ExperimentConfig c = default_config(variant);
  o.get("name", c.name);
  o.get("seed", c.seed);
  if (o.has("corpus")) c.corpus = parse_corpus(o.at("corpus"));
  const synth::ToyLangSpec spec = c.corpus.lang();
  c.asr.feat_dim = spec.feat_dim;
  c.asr.num_phonemes = spec.num_phonemes;
  c.upr.feat_dim = spec.feat_dim;
  if (o.has("asr")) c.asr = asr::AsrConfig::from_json(patched(c.asr.to_json(), o.at("asr"), "config.asr"));
  if (o.has("asr_train")) {
    c.asr_train = asr::AsrTrainConfig::from_json(patched(c.asr_train.to_json(), o.at("asr_train"), "config.asr_train"));
  }
  if (o.has("upr")) c.upr = rep::UprConfig::from_json(patched(c.upr.to_json(), o.at("upr"), "config.upr"));
  if (o.has("upr_train")) {
    c.upr_train = rep::UprTrainConfig::from_json(patched(c.upr_train.to_json(), o.at("upr_train"), "config.upr_train"));
  }
  derive_acoustic_defaults(c);
  auto model = [&](const char* key, acoustic::AcousticConfig& m) {
    if (o.has(key)) m = acoustic::AcousticConfig::from_json(patched(m.to_json(), o.at(key), std::string("config.") + key));
  };
  auto hyper = [&](const char* key, acoustic::AcousticTrainConfig& h) {
    if (o.has(key)) {
      h = acoustic::AcousticTrainConfig::from_json(patched(h.to_json(), o.at(key), std::string("config.") + key));
    }
  };
  model("ttr_upr", c.ttr_upr);
  hyper("ttr_upr_train", c.ttr_upr_train);
  model("ttr_spr", c.ttr_spr);
  hyper("ttr_spr_train", c.ttr_spr_train);
  model("rtm", c.rtm);
  hyper("rtm_train", c.rtm_train);
  if (o.has("analysis")) {
    const json& a = o.at("analysis");
    if (!a.is_object()) throw ConfigError("config.analysis: expected an object");
    StrictObject ao(a, "config.analysis");
    ao.get("per_class", c.analysis.per_class);
    ao.get("max_classes", c.analysis.max_classes);
    ao.get("seed", c.analysis.seed);
    ao.finish();
  }
  o.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

void ExperimentConfig::validate() const {
  check_variant(variant);
  const synth::ToyLangSpec spec = corpus.lang();
  try {
    synth::validate(spec);
  } catch (const SpecError& e) {
    throw ConfigError(std::string("corpus: ") + e.what());
  }
  const auto& p = corpus.plan;
  require(p.n_train > 0 && p.n_val > 0 && p.n_test > 0, "corpus: every split needs at least one utterance");

  asr.validate();
  require(asr.feat_dim == spec.feat_dim, "asr.feat_dim must equal the corpus feature dim");
  require(asr.num_phonemes == spec.num_phonemes, "asr.num_phonemes must equal the corpus phoneme inventory");
  upr.validate();
  require(upr.feat_dim == spec.feat_dim, "upr.feat_dim must equal the corpus feature dim");

  if (uses_upr()) check_ttr(ttr_upr, "ttr_upr", spec.num_chars, upr.upr_dim);
  if (uses_spr()) check_ttr(ttr_spr, "ttr_spr", spec.num_chars, asr.bottleneck_dim);

  rtm.validate();
  require(rtm.out_dim == spec.mel_dim, "rtm.out_dim must equal the corpus mel dim");
  if (is_taco()) {
    const int vocab = variant == "taco_char" ? spec.num_chars : spec.num_phonemes;
    require(rtm.role == "taco", "rtm: role must be taco for " + variant);
    require(rtm.streams.size() == 1 && rtm.streams[0].kind == "embedding" && rtm.streams[0].vocab == vocab,
            "rtm: " + variant + " needs one embedding stream over " + std::to_string(vocab) + " symbols");
    return;
  }
  require(rtm.role == "rtm", "rtm: role must be rtm for " + variant);
  std::set<std::string> names;
  for (const auto& s : rtm.streams) {
    require(s.kind == "dense", "rtm: stream " + s.name + " must be dense");
    if (s.name == "upr") {
      require(s.input_dim == upr.upr_dim, "rtm: upr stream input_dim must equal upr.upr_dim");
    } else if (s.name == "spr") {
      require(s.input_dim == asr.bottleneck_dim, "rtm: spr stream input_dim must equal asr.bottleneck_dim");
    } else {
      throw ConfigError("rtm: unknown stream " + s.name);
    }
    require(names.insert(s.name).second, "rtm: duplicate stream " + s.name);
  }
  require(names.count("upr") == (uses_upr() ? 1u : 0u) && names.count("spr") == (uses_spr() ? 1u : 0u),
          "rtm: streams do not match variant " + variant);
}

// ---------------------------------------------------------------------------
// Manifest

const StageRecord& RunManifest::at(const std::string& stage) const {
  for (const auto& s : stages) {
    if (s.stage == stage) return s;
  }
  throw ConfigError("manifest has no stage " + stage);
}

bool RunManifest::contains(const std::string& stage) const {
  return std::any_of(stages.begin(), stages.end(), [&](const StageRecord& s) { return s.stage == stage; });
}

std::int64_t RunManifest::steps() const {
  std::int64_t n = 0;
  for (const auto& s : stages) n += s.steps;
  return n;
}

json RunManifest::to_json() const {
  json out = json::array();
  for (const auto& s : stages) {
    out.push_back({{"stage", s.stage},
                   {"config_hash", s.config_hash},
                   {"dir", s.dir},
                   {"checkpoint", s.checkpoint},
                   {"reads", s.reads},
                   {"metrics", s.metrics}});
  }
  return {{"schema_version", kSchemaVersion}, {"stages", out}};
}

json RunManifest::run_log() const {
  json out = json::array();
  for (const auto& s : stages) {
    out.push_back({{"stage", s.stage}, {"wall_time", s.wall_time}, {"cached", s.cached}, {"steps", s.steps}});
  }
  return {{"stages", out}};
}

std::vector<std::string> stage_plan(const ExperimentConfig& cfg) {
  std::vector<std::string> plan{"gen_data", "train_asr", "train_upr", "extract_spr", "extract_upr"};
  if (cfg.uses_upr()) plan.push_back("train_ttr_upr");
  if (cfg.uses_spr()) plan.push_back("train_ttr_spr");
  for (const char* s : {"train_rtm", "synth", "eval", "analyze"}) plan.push_back(s);
  return plan;
}

std::vector<std::string> stage_inputs(const ExperimentConfig& cfg, const std::string& stage) {
  return upstream(cfg, stage);
}

std::map<std::string, std::string> plan_hashes(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& stage : stage_plan(cfg)) {
    std::vector<std::string> ups;
    for (const auto& u : upstream(cfg, stage)) ups.push_back(out.at(u));
    out[stage] = stage_hash(stage, stage_config(cfg, stage), ups);
  }
  return out;
}

std::string stage_hash(const std::string& stage, const json& config, const std::vector<std::string>& upstream_hashes) {
  const json key{{"schema_version", kSchemaVersion}, {"stage", stage}, {"config", config}, {"inputs", upstream_hashes}};
  return hex64(fnv1a(key.dump()));
}

json stage_config(const ExperimentConfig& cfg, const std::string& stage) {
  if (stage == "gen_data") return {{"seed", cfg.seed}, {"corpus", cfg.corpus.to_json()}};
  if (stage == "train_asr") return {{"model", cfg.asr.to_json()}, {"train", cfg.asr_train.to_json()}};
  if (stage == "train_upr") return {{"model", cfg.upr.to_json()}, {"train", cfg.upr_train.to_json()}};
  if (stage == "extract_spr" || stage == "extract_upr") return json::object();
  if (stage == "train_ttr_upr") return {{"model", cfg.ttr_upr.to_json()}, {"train", cfg.ttr_upr_train.to_json()}};
  if (stage == "train_ttr_spr") return {{"model", cfg.ttr_spr.to_json()}, {"train", cfg.ttr_spr_train.to_json()}};
  if (stage == "train_rtm") {
    return {{"variant", cfg.variant}, {"model", cfg.rtm.to_json()}, {"train", cfg.rtm_train.to_json()}};
  }
  if (stage == "synth" || stage == "eval") return {{"variant", cfg.variant}};
  if (stage == "analyze") return cluster_options_json(cfg.analysis);
  throw ConfigError("unknown stage " + stage);
}

RunManifest run_stages(const ExperimentConfig& cfg, const fs::path& out, const std::string& target) {
  return run_plan(cfg, out, out, target);
}

void publish_outputs(const RunManifest& m, const fs::path& out) {
  const auto copy = [&](const std::string& stage, const char* file, const fs::path& to) {
    fs::create_directories(to.parent_path());
    fs::copy_file(out / m.at(stage).dir / file, to, fs::copy_options::overwrite_existing);
  };
  if (m.contains("eval")) copy("eval", "eval.csv", out / "eval.csv");
  if (m.contains("analyze")) {
    for (const char* f : {"labeled_reps.csv", "stats.json", "pca.csv"}) copy("analyze", f, out / "analysis" / f);
  }
}

RunManifest run_experiment(const ExperimentConfig& cfg, const fs::path& out) {
  RunManifest m = run_stages(cfg, out, "all");
  publish_outputs(m, out);
  return m;
}

// ---------------------------------------------------------------------------
// Comparison

std::vector<VariantRow> compare_variants(const std::vector<ExperimentConfig>& configs, const fs::path& out) {
  if (configs.size() < 2) throw ComparisonError("compare needs at least two variants");
  const std::string corpus_hash = stage_hash("gen_data", stage_config(configs.front(), "gen_data"), {});
  for (const auto& c : configs) {
    if (stage_hash("gen_data", stage_config(c, "gen_data"), {}) != corpus_hash) {
      throw ComparisonError("variant " + c.name + " uses a different corpus than " + configs.front().name);
    }
  }
  std::vector<VariantRow> rows;
  for (const auto& c : configs) {
    const RunManifest m = run_plan(c, out, out / "variants" / c.name, "all");
    const json& e = m.at("eval").metrics;
    rows.push_back({c.name, e.at("per").get<double>(), e.at("ld").get<double>(), e.at("lmr").get<double>(),
                    e.at("mel_l1").get<double>(), e.at("toy_cer").get<double>()});
  }
  return rows;
}

std::string comparison_csv(const std::vector<VariantRow>& rows) {
  std::string out = "variant,per,ld,lmr,mel_l1,toy_cer\n";
  for (const auto& r : rows) {
    out += r.variant + "," + io::format_double(r.per) + "," + io::format_double(r.ld) + "," +
           io::format_double(r.lmr) + "," + io::format_double(r.mel_l1) + "," + io::format_double(r.toy_cer) + "\n";
  }
  return out;
}

std::vector<ExperimentConfig> parse_comparison(const json& j) {
  if (!j.is_object()) throw ConfigError("comparison: expected an object");
  StrictObject o(j, "comparison");
  if (!o.has("schema_version")) throw ConfigError("comparison.schema_version: missing");
  int version = 0;
  o.get("schema_version", version);
  if (version != kSchemaVersion) throw ConfigError("comparison.schema_version: unsupported");
  json base = json::object();
  if (o.has("base")) base = o.at("base");
  if (!base.is_object()) throw ConfigError("comparison.base: expected an object");
  base["schema_version"] = kSchemaVersion;
  if (!o.has("variants") || !o.at("variants").is_array()) throw ConfigError("comparison.variants: expected an array");
  std::vector<ExperimentConfig> out;
  for (const auto& v : o.at("variants")) {
    json cfg = base;
    if (v.is_string()) {
      cfg["variant"] = v;
      cfg["name"] = v;
    } else if (v.is_object()) {
      cfg.merge_patch(v);
    } else {
      throw ConfigError("comparison.variants: entries are names or objects");
    }
    out.push_back(parse_config(cfg));
  }
  o.finish();
  return out;
}

acoustic::Synthesis synthesize_text(const ExperimentConfig& cfg, const fs::path& out, const std::string& text) {
  const RunManifest m = run_stages(cfg, out, "train_rtm");
  const synth::ToyLangSpec spec = cfg.corpus.lang();
  const std::vector<int> chars = synth::text_to_chars(spec, text);
  const Models models = load_models(cfg, [&](const std::string& s) { return out / m.at(s).dir; });
  return synthesize_with(cfg, models, spec, chars);
}

std::vector<int> toy_decode(const synth::ToyLangSpec& spec, const num::Matrix& mel) {
  return ctc::collapse(synth::nearest_prototype_labels(spec.mel_prototypes, mel), -1);
}

}  // namespace phonseg::pipeline
