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

#include "phonseg/synthdata.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

#include "phonseg/error.hpp"
#include "phonseg/io.hpp"
#include "phonseg/json_util.hpp"
#include "phonseg/numcore/ptns.hpp"

namespace phonseg::synth {

std::vector<G2PRule> default_rules() {
  std::vector<G2PRule> rules;
  for (int c = 0; c < 10; ++c) rules.push_back({{c}, {c}});
  rules.push_back({{10}, {10, 11}});
  rules.push_back({{11}, {12}});
  rules.push_back({{0, 1}, {13}});     // ab
  rules.push_back({{2, 0}, {14, 0}});  // ca: c is pronounced differently before a
  rules.push_back({{4, 5}, {15}});     // ef
  rules.push_back({{7, 10}, {7, 11}}); // hk: k loses its first phoneme after h
  return rules;
}

void sample_prototypes(ToyLangSpec& spec, std::uint64_t seed) {
  num::Rng feat_rng = num::Rng(seed).fork(1);
  num::Rng mel_rng = num::Rng(seed).fork(2);
  spec.feat_prototypes = Matrix(spec.num_phonemes, spec.feat_dim);
  spec.mel_prototypes = Matrix(spec.num_phonemes, spec.mel_dim);
  for (Eigen::Index i = 0; i < spec.feat_prototypes.size(); ++i) {
    spec.feat_prototypes.data()[i] = feat_rng.normal();
  }
  for (Eigen::Index i = 0; i < spec.mel_prototypes.size(); ++i) {
    spec.mel_prototypes.data()[i] = mel_rng.normal();
  }
}

ToyLangSpec default_lang(std::uint64_t seed) {
  ToyLangSpec spec;
  spec.rules = default_rules();
  sample_prototypes(spec, seed);
  return spec;
}

namespace {

void check_separation(const Matrix& protos, double sigma, const char* what) {
  const double min_dist = 6.0 * sigma;
  for (Eigen::Index i = 0; i < protos.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < protos.rows(); ++j) {
      const double d = (protos.row(i) - protos.row(j)).norm();
      if (!(d > min_dist)) {
        throw SpecError(std::string(what) + " prototypes " + std::to_string(i) + " and " +
                        std::to_string(j) + " are not separated by more than 6 sigma");
      }
    }
  }
}

bool has_adjacent_repeat(const PhonemeSeq& p) {
  return std::adjacent_find(p.begin(), p.end()) != p.end();
}

}  // namespace

void validate(const ToyLangSpec& spec) {
  if (spec.num_phonemes < 1 || spec.num_chars < 1) throw SpecError("inventories must be nonempty");
  if (spec.num_chars > 26) throw SpecError("at most 26 characters are printable");
  if (spec.feat_dim < 1 || spec.mel_dim < 1) throw SpecError("feature dims must be positive");
  if (spec.min_duration < 1 || spec.max_duration < spec.min_duration) {
    throw SpecError("duration range must satisfy 1 <= min <= max");
  }
  if (spec.min_chars < 1 || spec.max_chars < spec.min_chars) {
    throw SpecError("text length range must satisfy 1 <= min <= max");
  }
  if (!(spec.noise_sigma >= 0.0)) throw SpecError("noise sigma must be >= 0");
  std::set<std::vector<int>> keys;
  std::vector<bool> unigram(static_cast<std::size_t>(spec.num_chars), false);
  bool contextual = false;
  for (const auto& r : spec.rules) {
    if (r.chars.empty() || r.phonemes.empty()) throw SpecError("G2P rules must be nonempty");
    for (int c : r.chars) {
      if (c < 0 || c >= spec.num_chars) throw SpecError("G2P rule uses unknown character");
    }
    for (int p : r.phonemes) {
      if (p < 0 || p >= spec.num_phonemes) throw SpecError("G2P rule emits unknown phoneme");
    }
    if (!keys.insert(r.chars).second) throw SpecError("duplicate G2P rule key");
    if (r.chars.size() == 1) unigram[static_cast<std::size_t>(r.chars[0])] = true;
    if (r.chars.size() > 1) contextual = true;
  }
  for (int c = 0; c < spec.num_chars; ++c) {
    if (!unigram[static_cast<std::size_t>(c)]) {
      throw SpecError("character '" + chars_to_text(std::vector<int>{c}) + "' has no unigram rule");
    }
  }
  if (spec.num_chars > 1 && !contextual) throw SpecError("at least one contextual G2P rule is required");
  if (spec.feat_prototypes.rows() != spec.num_phonemes || spec.feat_prototypes.cols() != spec.feat_dim) {
    throw SpecError("feature prototype matrix has wrong shape");
  }
  if (spec.mel_prototypes.rows() != spec.num_phonemes || spec.mel_prototypes.cols() != spec.mel_dim) {
    throw SpecError("mel prototype matrix has wrong shape");
  }
  check_separation(spec.feat_prototypes, spec.noise_sigma, "feature");
  check_separation(spec.mel_prototypes, spec.noise_sigma, "mel");
}

PhonemeSeq g2p_apply(const ToyLangSpec& spec, std::span<const int> chars) {
  std::size_t longest = 1;
  for (const auto& r : spec.rules) longest = std::max(longest, r.chars.size());
  PhonemeSeq out;
  std::size_t i = 0;
  while (i < chars.size()) {
    if (chars[i] < 0 || chars[i] >= spec.num_chars) {
      throw G2PError("character id " + std::to_string(chars[i]) + " is not in the inventory");
    }
    const G2PRule* best = nullptr;
    for (const auto& r : spec.rules) {
      if (r.chars.size() > chars.size() - i) continue;
      if (best != nullptr && r.chars.size() <= best->chars.size()) continue;
      if (std::equal(r.chars.begin(), r.chars.end(), chars.begin() + static_cast<std::ptrdiff_t>(i))) {
        best = &r;
        if (best->chars.size() == longest) break;
      }
    }
    if (best == nullptr) {
      throw G2PError("no G2P rule covers character '" + chars_to_text(chars.subspan(i, 1)) + "'");
    }
    out.insert(out.end(), best->phonemes.begin(), best->phonemes.end());
    i += best->chars.size();
  }
  return out;
}

std::string chars_to_text(std::span<const int> chars) {
  std::string s;
  for (int c : chars) s.push_back(static_cast<char>('a' + c));
  return s;
}

CharSeq text_to_chars(const ToyLangSpec& spec, const std::string& text) {
  CharSeq out;
  for (char ch : text) {
    const int c = ch - 'a';
    if (c < 0 || c >= spec.num_chars) {
      throw G2PError(std::string("character '") + ch + "' is not in the inventory");
    }
    out.push_back(c);
  }
  return out;
}

const std::vector<Utterance>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val" || name == "validation") return val;
  if (name == "test") return test;
  throw DataError("unknown split: " + name);
}

const Utterance& Corpus::find(const std::string& id) const {
  for (const auto* s : {&train, &val, &test}) {
    for (const auto& u : *s) {
      if (u.id == id) return u;
    }
  }
  throw DataError("unknown utterance id: " + id);
}

Utterance render_utterance(const ToyLangSpec& spec, std::string id, CharSeq chars,
                           std::span<const int> durations, num::Rng& rng) {
  Utterance u;
  u.id = std::move(id);
  u.phonemes = g2p_apply(spec, chars);
  u.chars = std::move(chars);
  if (durations.size() != u.phonemes.size()) throw DataError("one duration per phoneme required");
  int total = 0;
  for (std::size_t k = 0; k < durations.size(); ++k) {
    if (durations[k] < 1) throw DataError("durations must be positive");
    u.alignment.push_back({u.phonemes[k], total, total + durations[k]});
    total += durations[k];
  }
  u.features = Matrix(total, spec.feat_dim);
  u.mel = Matrix(total, spec.mel_dim);
  for (const auto& seg : u.alignment) {
    for (int t = seg.start; t < seg.end; ++t) {
      for (int d = 0; d < spec.feat_dim; ++d) {
        u.features(t, d) = spec.feat_prototypes(seg.phoneme, d) + spec.noise_sigma * rng.normal();
      }
      for (int d = 0; d < spec.mel_dim; ++d) {
        u.mel(t, d) = spec.mel_prototypes(seg.phoneme, d) + spec.noise_sigma * rng.normal();
      }
    }
  }
  return u;
}

namespace {

constexpr int kMaxDrawsPerUtterance = 100000;
constexpr int kMaxCoverageAttempts = 1000;

std::vector<Utterance> gen_split(const ToyLangSpec& spec, const std::string& prefix, int n,
                                 bool unique, std::set<CharSeq>& used, num::Rng rng) {
  std::vector<Utterance> out;
  for (int k = 0; k < n; ++k) {
    CharSeq chars;
    PhonemeSeq phon;
    int draws = 0;
    while (true) {
      if (++draws > kMaxDrawsPerUtterance) {
        throw DataError("cannot draw enough distinct admissible texts for split " + prefix);
      }
      chars.assign(static_cast<std::size_t>(rng.range(spec.min_chars, spec.max_chars)), 0);
      for (int& c : chars) c = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.num_chars)));
      phon = g2p_apply(spec, chars);
      if (!spec.allow_adjacent_repeats && has_adjacent_repeat(phon)) continue;
      if (unique && used.count(chars) != 0) continue;
      break;
    }
    used.insert(chars);
    std::vector<int> durations(phon.size());
    for (int& d : durations) d = rng.range(spec.min_duration, spec.max_duration);
    char id[32];
    std::snprintf(id, sizeof(id), "%s-%04d", prefix.c_str(), k);
    out.push_back(render_utterance(spec, id, std::move(chars), durations, rng));
  }
  return out;
}

bool covers_inventory(const std::vector<Utterance>& utts, int num_phonemes) {
  std::vector<bool> seen(static_cast<std::size_t>(num_phonemes), false);
  for (const auto& u : utts) {
    for (int p : u.phonemes) seen[static_cast<std::size_t>(p)] = true;
  }
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

}  // namespace

Corpus gen_corpus(const ToyLangSpec& spec, const CorpusPlan& plan, std::uint64_t seed) {
  validate(spec);
  if (plan.n_train < 1 || plan.n_val < 1 || plan.n_test < 1) {
    throw DataError("every split needs at least one utterance");
  }
  Corpus corpus;
  corpus.spec = spec;
  corpus.seed = seed;
  const num::Rng root(seed);
  std::set<CharSeq> used;
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxCoverageAttempts) {
      throw DataError("training split never covered the phoneme inventory");
    }
    std::set<CharSeq> trial_used;
    auto train = gen_split(spec, "train", plan.n_train, plan.unique_texts, trial_used,
                           root.fork(100 + static_cast<std::uint64_t>(attempt)));
    if (covers_inventory(train, spec.num_phonemes)) {
      corpus.train = std::move(train);
      used = std::move(trial_used);
      break;
    }
  }
  corpus.val = gen_split(spec, "val", plan.n_val, plan.unique_texts, used, root.fork(2));
  corpus.test = gen_split(spec, "test", plan.n_test, plan.unique_texts, used, root.fork(3));
  return corpus;
}

json spec_to_json(const ToyLangSpec& spec) {
  json rules = json::array();
  for (const auto& r : spec.rules) rules.push_back({{"chars", r.chars}, {"phonemes", r.phonemes}});
  return {{"num_phonemes", spec.num_phonemes},
          {"num_chars", spec.num_chars},
          {"rules", rules},
          {"min_duration", spec.min_duration},
          {"max_duration", spec.max_duration},
          {"feat_dim", spec.feat_dim},
          {"mel_dim", spec.mel_dim},
          {"noise_sigma", spec.noise_sigma},
          {"min_chars", spec.min_chars},
          {"max_chars", spec.max_chars},
          {"allow_adjacent_repeats", spec.allow_adjacent_repeats},
          {"feat_prototypes", matrix_to_json(spec.feat_prototypes)},
          {"mel_prototypes", matrix_to_json(spec.mel_prototypes)}};
}

ToyLangSpec spec_from_json(const json& j) {
  ToyLangSpec s;
  StrictObject o(j, "spec");
  o.get("num_phonemes", s.num_phonemes);
  o.get("num_chars", s.num_chars);
  o.get("min_duration", s.min_duration);
  o.get("max_duration", s.max_duration);
  o.get("feat_dim", s.feat_dim);
  o.get("mel_dim", s.mel_dim);
  o.get("noise_sigma", s.noise_sigma);
  o.get("min_chars", s.min_chars);
  o.get("max_chars", s.max_chars);
  o.get("allow_adjacent_repeats", s.allow_adjacent_repeats);
  for (const auto& r : o.at("rules")) {
    s.rules.push_back({r.at("chars").get<std::vector<int>>(), r.at("phonemes").get<std::vector<int>>()});
  }
  s.feat_prototypes = matrix_from_json(o.at("feat_prototypes"));
  s.mel_prototypes = matrix_from_json(o.at("mel_prototypes"));
  o.finish();
  return s;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  json manifest;
  manifest["format"] = "phonseg-corpus/1";
  manifest["seed"] = corpus.seed;
  manifest["spec"] = spec_to_json(corpus.spec);
  json splits = json::object();
  json utts = json::object();
  for (const char* name : {"train", "val", "test"}) {
    json ids = json::array();
    for (const auto& u : corpus.split(name)) {
      ids.push_back(u.id);
      json align = json::array();
      for (const auto& s : u.alignment) align.push_back({s.phoneme, s.start, s.end});
      const std::string feat = "feat/" + u.id + ".ptns";
      const std::string mel = "mel/" + u.id + ".ptns";
      num::save_matrix(dir / feat, u.features);
      num::save_matrix(dir / mel, u.mel);
      utts[u.id] = {{"text", chars_to_text(u.chars)},
                    {"chars", u.chars},
                    {"phonemes", u.phonemes},
                    {"frames", u.frames()},
                    {"alignment", align},
                    {"features", feat},
                    {"mel", mel}};
    }
    splits[name] = ids;
  }
  manifest["splits"] = splits;
  manifest["utterances"] = utts;
  io::write_text(dir / "manifest.json", manifest.dump(1) + "\n");
}

Corpus load_corpus(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(io::read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IoError("bad corpus manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "phonseg-corpus/1") throw IoError("not a corpus: " + dir.string());
  Corpus c;
  c.seed = manifest.at("seed").get<std::uint64_t>();
  c.spec = spec_from_json(manifest.at("spec"));
  const auto& utts = manifest.at("utterances");
  const std::pair<const char*, std::vector<Utterance>*> splits[] = {
      {"train", &c.train}, {"val", &c.val}, {"test", &c.test}};
  for (const auto& [name, split] : splits) {
    for (const auto& id : manifest.at("splits").at(name)) {
      const auto& m = utts.at(id.get<std::string>());
      Utterance u;
      u.id = id.get<std::string>();
      u.chars = m.at("chars").get<CharSeq>();
      u.phonemes = m.at("phonemes").get<PhonemeSeq>();
      for (const auto& a : m.at("alignment")) u.alignment.push_back({a[0].get<int>(), a[1].get<int>(), a[2].get<int>()});
      u.features = num::load_matrix(dir / m.at("features").get<std::string>());
      u.mel = num::load_matrix(dir / m.at("mel").get<std::string>());
      split->push_back(std::move(u));
    }
  }
  return c;
}

int nearest_prototype(const Matrix& prototypes, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index p = 0; p < prototypes.rows(); ++p) {
    const double d = (prototypes.row(p) - row).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(p);
    }
  }
  return best;
}

std::vector<int> nearest_prototype_labels(const Matrix& prototypes, const Matrix& frames) {
  std::vector<int> out(static_cast<std::size_t>(frames.rows()));
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    out[static_cast<std::size_t>(t)] = nearest_prototype(prototypes, frames.row(t));
  }
  return out;
}

}  // namespace phonseg::synth
