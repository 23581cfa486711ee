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
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phonseg/acoustic.hpp"
#include "phonseg/analysis.hpp"
#include "phonseg/asr_model.hpp"
#include "phonseg/error.hpp"
#include "phonseg/reprext.hpp"
#include "phonseg/synthdata.hpp"

namespace phonseg::pipeline {

namespace fs = std::filesystem;

constexpr int kSchemaVersion = 1;

/// A stage failure keeps the cause's error kind and names the stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& kind, const std::string& message)
      : Error(kind, "stage " + stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct CorpusConfig {
  std::uint64_t lang_seed = 2024;
  double noise_sigma = 0.05;
  int min_duration = 3;
  int max_duration = 8;
  int min_chars = 3;
  int max_chars = 12;
  synth::CorpusPlan plan;

  synth::ToyLangSpec lang() const;
  nlohmann::json to_json() const;
};

/// variant: "proposed" (UPR + SPR), "spr_only", "upr_only", "taco_char",
/// "taco_phone". The last two reuse the RTM decoder over symbol embeddings.
struct ExperimentConfig {
  std::string name = "proposed";
  std::string variant = "proposed";
  std::uint64_t seed = 7;  // corpus seed
  CorpusConfig corpus;
  asr::AsrConfig asr;
  asr::AsrTrainConfig asr_train;
  rep::UprConfig upr;
  rep::UprTrainConfig upr_train;
  acoustic::AcousticConfig ttr_upr;
  acoustic::AcousticTrainConfig ttr_upr_train;
  acoustic::AcousticConfig ttr_spr;
  acoustic::AcousticTrainConfig ttr_spr_train;
  acoustic::AcousticConfig rtm;  // role "taco" for the taco variants
  acoustic::AcousticTrainConfig rtm_train;
  analysis::ClusterOptions analysis;

  bool uses_upr() const { return variant == "proposed" || variant == "upr_only"; }
  bool uses_spr() const { return variant == "proposed" || variant == "spr_only"; }
  bool is_taco() const { return variant == "taco_char" || variant == "taco_phone"; }

  /// Throws ConfigError on any dimension or role mismatch between stages.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Defaults for every section; sections sized from the corpus and upstream
/// model configs.
ExperimentConfig default_config(const std::string& variant = "proposed");

/// Strict parse: schema_version must match, unknown keys are errors, each
/// section is a patch over the defaults derived from the sections above it
/// (corpus, then asr/upr, then the acoustic models). Validates.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const fs::path& path);

struct StageRecord {
  std::string stage;
  std::string config_hash;
  std::string dir;         // relative to the run directory
  std::string checkpoint;  // relative to the run directory, empty if none
  nlohmann::json metrics;
  double wall_time = 0.0;
  bool cached = false;
  std::int64_t steps = 0;  // training steps executed by this invocation
  std::vector<std::string> reads;  // stage dirs read while running, sorted
};

struct RunManifest {
  std::vector<StageRecord> stages;  // execution order

  const StageRecord& at(const std::string& stage) const;
  bool contains(const std::string& stage) const;
  std::int64_t steps() const;
  /// Deterministic part: stage, config_hash, dir, checkpoint, reads, metrics.
  nlohmann::json to_json() const;
  /// wall_time, cached and steps per stage.
  nlohmann::json run_log() const;
};

/// Stage names in execution order for the config's variant.
std::vector<std::string> stage_plan(const ExperimentConfig& cfg);

/// Runs the plan up to and including `target` ("all" for everything) under
/// `out`, reusing any stage whose hash over (stage config, upstream hashes)
/// matches a completed stage directory. Writes manifest.json and
/// run_log.json. Each stage may read only its upstream stage directories.
RunManifest run_stages(const ExperimentConfig& cfg, const fs::path& out, const std::string& target);

/// Copies eval.csv to `out` and the analysis outputs to `out`/analysis for
/// whichever of those stages the manifest holds.
void publish_outputs(const RunManifest& m, const fs::path& out);

/// Full run followed by publish_outputs.
RunManifest run_experiment(const ExperimentConfig& cfg, const fs::path& out);

/// Content-addressed hash of one stage.
std::string stage_hash(const std::string& stage, const nlohmann::json& config,
                       const std::vector<std::string>& upstream_hashes);

/// Stage -> hash for the whole plan, without running anything.
std::map<std::string, std::string> plan_hashes(const ExperimentConfig& cfg);

/// Upstream stages a stage may read.
std::vector<std::string> stage_inputs(const ExperimentConfig& cfg, const std::string& stage);

/// Section of the config each stage hashes.
nlohmann::json stage_config(const ExperimentConfig& cfg, const std::string& stage);

struct VariantRow {
  std::string variant;
  double per = 0.0;
  double ld = 0.0;
  double lmr = 0.0;
  double mel_l1 = 0.0;
  double toy_cer = 0.0;
};

/// One row per config, in order, all runs sharing `out` (and so any common
/// stages). Throws ComparisonError with fewer than two configs or if the
/// corpora differ.
std::vector<VariantRow> compare_variants(const std::vector<ExperimentConfig>& configs, const fs::path& out);
std::string comparison_csv(const std::vector<VariantRow>& rows);

/// {"schema_version", "base": <experiment>, "variants": [name | patch]}.
/// A string entry sets the variant (and name); an object is merged over the
/// base.
std::vector<ExperimentConfig> parse_comparison(const nlohmann::json& j);

/// Trains or reuses the models under `out`, then synthesizes one text.
acoustic::Synthesis synthesize_text(const ExperimentConfig& cfg, const fs::path& out, const std::string& text);

/// Nearest mel prototype per frame, then repeats collapsed.
std::vector<int> toy_decode(const synth::ToyLangSpec& spec, const num::Matrix& mel);

}  // namespace phonseg::pipeline
