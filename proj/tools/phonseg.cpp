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

// phonseg: command-line driver for the staged experiment pipeline.
//
// Every subcommand takes --config <json> --out <dir> --seed <u64> and runs
// the pipeline up to its stage, reusing cached stages under --out. On
// failure a JSON object {"error": {...}} goes to stderr and the exit code is
// nonzero (1 for pipeline errors, 2 for usage errors).

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "phonseg/io.hpp"
#include "phonseg/numcore/ptns.hpp"
#include "phonseg/pipeline.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
namespace pl = phonseg::pipeline;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config JSON (defaults when omitted)");
  cmd->add_option("--out", c.out, "run directory")->required();
  cmd->add_option("--seed", c.seed, "corpus seed; overrides the config");
}

json read_config_json(const Common& c) {
  if (c.config.empty()) return {{"schema_version", pl::kSchemaVersion}};
  try {
    return json::parse(phonseg::io::read_text(c.config));
  } catch (const json::exception& e) {
    throw phonseg::ConfigError(c.config + ": " + e.what());
  }
}

pl::ExperimentConfig experiment(const Common& c, const std::optional<std::string>& variant = std::nullopt) {
  json j = read_config_json(c);
  if (!j.is_object()) throw phonseg::ConfigError("config: expected an object");
  if (c.seed) j["seed"] = *c.seed;
  if (variant) j["variant"] = *variant;
  return pl::parse_config(j);
}

json summary(const std::string& command, const fs::path& out, const pl::RunManifest& m) {
  json stages = json::array();
  for (const auto& s : m.stages) {
    stages.push_back({{"stage", s.stage}, {"config_hash", s.config_hash}, {"cached", s.cached}, {"dir", s.dir}});
  }
  return {{"command", command}, {"out", out.string()}, {"stages", stages}};
}

void emit_error(const std::string& kind, const std::string& message, const std::string& stage = "") {
  json e{{"kind", kind}, {"message", message}};
  if (!stage.empty()) e["stage"] = stage;
  std::cerr << json{{"error", e}}.dump() << std::endl;
}

// Rejects --ablate outside the proposed variant; maps it to the surviving stream.
std::optional<std::string> ablation_variant(const Common& c, const std::string& ablate) {
  if (ablate.empty()) return std::nullopt;
  const pl::ExperimentConfig base = experiment(c);
  if (base.variant != "proposed") {
    throw phonseg::ConfigError("--ablate applies to the proposed variant, config has " + base.variant);
  }
  return ablate == "upr" ? "spr_only" : "upr_only";
}

json synth_text_file(const pl::ExperimentConfig& cfg, const fs::path& out, const std::string& text_file) {
  std::istringstream lines(phonseg::io::read_text(text_file));
  json index = json::array();
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto s = pl::synthesize_text(cfg, out, line);
    char name[32];
    std::snprintf(name, sizeof(name), "%04d.ptns", n++);
    phonseg::num::save_matrix(out / "text_synth" / name, s.mel);
    index.push_back({{"text", line}, {"file", std::string("text_synth/") + name}, {"frames", s.mel.rows()},
                     {"truncated", s.truncated}});
  }
  phonseg::io::write_text(out / "text_synth" / "index.json", index.dump(2) + "\n");
  return index;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phonseg: toy-scale speech synthesis via phonetic representations"};
  app.require_subcommand(1);
  Common c;
  std::string stream;
  std::string ablate;
  std::string text_file;

  struct Target {
    const char* command;
    const char* stage;
    const char* help;
  };
  const Target simple[] = {
      {"gen-data", "gen_data", "generate the toy corpus"},
      {"train-asr", "train_asr", "train the phoneme recognizer"},
      {"train-upr", "train_upr", "train the unsupervised representation encoder"},
      {"extract-spr", "extract_spr", "extract supervised phonetic representations"},
      {"extract-upr", "extract_upr", "extract unsupervised phonetic representations"},
      {"eval", "eval", "evaluate the test split and write eval.csv"},
      {"analyze", "analyze", "cluster statistics and exports under analysis/"},
  };
  std::map<CLI::App*, std::string> targets;
  for (const auto& t : simple) targets[app.add_subcommand(t.command, t.help)] = t.stage;
  for (auto& [cmd, stage] : targets) add_common(cmd, c);

  auto* ttr = app.add_subcommand("train-ttr", "train a text-to-representation model");
  add_common(ttr, c);
  ttr->add_option("--stream", stream, "representation stream")->required()->check(CLI::IsMember({"upr", "spr"}));
  auto* rtm = app.add_subcommand("train-rtm", "train the representation-to-mel model");
  add_common(rtm, c);
  rtm->add_option("--ablate", ablate, "drop one stream")->check(CLI::IsMember({"upr", "spr"}));
  auto* syn = app.add_subcommand("synth", "synthesize the test split, or each line of --text");
  add_common(syn, c);
  syn->add_option("--text", text_file, "text file, one utterance per line");
  auto* run = app.add_subcommand("run", "run every stage");
  add_common(run, c);
  auto* compare = app.add_subcommand("compare", "run several variants and write compare.csv");
  add_common(compare, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return 2;
  }

  try {
    const fs::path out = c.out;
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    json result;
    if (targets.count(cmd) != 0) {
      const auto cfg = experiment(c);
      const auto m = pl::run_stages(cfg, out, targets[cmd]);
      pl::publish_outputs(m, out);
      result = summary(name, out, m);
    } else if (cmd == ttr) {
      const auto cfg = experiment(c);
      result = summary(name, out, pl::run_stages(cfg, out, "train_ttr_" + stream));
    } else if (cmd == rtm) {
      const auto cfg = experiment(c, ablation_variant(c, ablate));
      result = summary(name, out, pl::run_stages(cfg, out, "train_rtm"));
    } else if (cmd == syn) {
      const auto cfg = experiment(c);
      if (text_file.empty()) {
        result = summary(name, out, pl::run_stages(cfg, out, "synth"));
      } else {
        result = {{"command", name}, {"out", out.string()}, {"utterances", synth_text_file(cfg, out, text_file)}};
      }
    } else if (cmd == run) {
      result = summary(name, out, pl::run_experiment(experiment(c), out));
    } else {
      json j = read_config_json(c);
      if (c.seed) j["base"]["seed"] = *c.seed;
      const auto rows = pl::compare_variants(pl::parse_comparison(j), out);
      phonseg::io::write_text(out / "compare.csv", pl::comparison_csv(rows));
      result = {{"command", name}, {"out", out.string()}, {"csv", (out / "compare.csv").string()},
                {"variants", rows.size()}};
    }
    std::cout << result.dump(2) << std::endl;
    return 0;
  } catch (const pl::StageError& e) {
    emit_error(e.kind(), e.what(), e.stage());
  } catch (const phonseg::Error& e) {
    emit_error(e.kind(), e.what());
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
  }
  return 1;
}
