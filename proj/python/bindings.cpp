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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "phonseg/analysis.hpp"
#include "phonseg/ctc.hpp"
#include "phonseg/metrics.hpp"
#include "phonseg/pipeline.hpp"
#include "phonseg/reprext.hpp"
#include "phonseg/synthdata.hpp"

namespace py = pybind11;
using namespace phonseg;
using num::Matrix;

namespace {

py::dict utterance_dict(const synth::Utterance& u) {
  py::list alignment;
  for (const auto& s : u.alignment) alignment.append(py::make_tuple(s.phoneme, s.start, s.end));
  py::dict d;
  d["id"] = u.id;
  d["chars"] = u.chars;
  d["phonemes"] = u.phonemes;
  d["features"] = u.features;
  d["mel"] = u.mel;
  d["alignment"] = alignment;
  return d;
}

py::dict spr_dict(const rep::SprSeq& s) {
  py::list spans;
  for (const auto& sp : s.spans) spans.append(py::make_tuple(sp.start, sp.end));
  py::dict d;
  d["vectors"] = s.vectors;
  d["categories"] = s.categories;
  d["spans"] = spans;
  return d;
}

std::vector<metrics::LengthPair> pairs_from(const std::vector<std::pair<long, long>>& p) {
  std::vector<metrics::LengthPair> out;
  for (const auto& [rep, ipa] : p) out.push_back({rep, ipa});
  return out;
}

pipeline::ExperimentConfig config_from(const std::string& text) {
  return pipeline::parse_config(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "phonseg C++ core";

  // Instances carry the library's error kind as `.kind`.
  py::exception<Error>(m, "PhonsegError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object type = py::module_::import("phonseg._core").attr("PhonsegError");
      py::object err = type(e.what());
      err.attr("kind") = e.kind();
      PyErr_SetObject(type.ptr(), err.ptr());
    }
  });

  m.def(
      "gen_corpus",
      [](int n_train, int n_val, int n_test, std::uint64_t seed, double noise_sigma, std::uint64_t lang_seed) {
        synth::ToyLangSpec spec = synth::default_lang(lang_seed);
        spec.noise_sigma = noise_sigma;
        synth::CorpusPlan plan;
        plan.n_train = n_train;
        plan.n_val = n_val;
        plan.n_test = n_test;
        const synth::Corpus c = synth::gen_corpus(spec, plan, seed);
        py::dict out;
        for (const char* split : {"train", "val", "test"}) {
          py::list l;
          for (const auto& u : c.split(split)) l.append(utterance_dict(u));
          out[split] = l;
        }
        out["mel_prototypes"] = c.spec.mel_prototypes;
        out["feat_prototypes"] = c.spec.feat_prototypes;
        return out;
      },
      py::arg("n_train") = 200, py::arg("n_val") = 30, py::arg("n_test") = 30, py::arg("seed") = 7,
      py::arg("noise_sigma") = 0.05, py::arg("lang_seed") = 2024);

  m.def("ctc_loss", &ctc::ctc_neg_log_likelihood, py::arg("log_probs"), py::arg("target"),
        "Negative log-likelihood of target under T x (K+1) log posteriors; blank is the last column.");
  m.def(
      "ctc_loss_and_grad",
      [](const Matrix& logits, const std::vector<int>& target) {
        num::Tape t;
        num::Var x = t.variable(logits);
        num::Var loss = ctc::ctc_loss(x, target);
        t.backward(loss);
        return py::make_tuple(loss.scalar(), t.grad(x));
      },
      py::arg("logits"), py::arg("target"), "CTC loss over row-wise softmax of logits, and its gradient.");
  m.def("brute_force_ctc", &ctc::brute_force_ctc, py::arg("log_probs"), py::arg("target"));
  m.def("greedy_decode", &ctc::greedy_decode, py::arg("log_posteriors"));

  m.def(
      "merge",
      [](const Matrix& bottleneck, const std::vector<int>& labels, int blank) {
        return spr_dict(rep::merge({bottleneck, labels, blank}));
      },
      py::arg("bottleneck"), py::arg("labels"), py::arg("blank"),
      "Average bottleneck frames over runs of equal non-blank labels.");

  m.def("edit_distance", [](const std::vector<int>& a, const std::vector<int>& b) { return metrics::edit_distance(a, b); });
  m.def("error_rate", [](const std::vector<int>& hyp, const std::vector<int>& ref) { return metrics::error_rate(hyp, ref); });
  m.def("length_difference",
        [](const std::vector<std::pair<long, long>>& p) { return metrics::length_difference(pairs_from(p)); });
  m.def("length_mismatch_rate",
        [](const std::vector<std::pair<long, long>>& p) { return metrics::length_mismatch_rate(pairs_from(p)); });

  m.def("silhouette", &analysis::silhouette, py::arg("x"), py::arg("labels"));
  m.def(
      "pca_project",
      [](const Matrix& x, int dims) {
        const analysis::Projection p = analysis::pca_project(x, dims);
        py::dict d;
        d["coords"] = p.coords;
        d["components"] = p.components;
        d["eigenvalues"] = p.eigenvalues;
        d["mean"] = p.mean;
        d["degenerate"] = p.degenerate;
        return d;
      },
      py::arg("x"), py::arg("dims") = 2);

  m.def(
      "default_config", [](const std::string& variant) { return pipeline::default_config(variant).to_json().dump(); },
      py::arg("variant") = "proposed");
  m.def(
      "resolve_config", [](const std::string& text) { return config_from(text).to_json().dump(); },
      py::arg("config_json"));
  m.def(
      "run_stages",
      [](const std::string& text, const std::string& out, const std::string& target) {
        const auto cfg = config_from(text);
        py::gil_scoped_release release;
        const auto m = pipeline::run_stages(cfg, out, target);
        pipeline::publish_outputs(m, out);
        nlohmann::json j = m.to_json();
        j["run_log"] = m.run_log();
        return j.dump();
      },
      py::arg("config_json"), py::arg("out"), py::arg("target") = "all");
  m.def(
      "synthesize_text",
      [](const std::string& text, const std::string& out, const std::string& utterance) {
        const auto cfg = config_from(text);
        py::gil_scoped_release release;
        return pipeline::synthesize_text(cfg, out, utterance).mel;
      },
      py::arg("config_json"), py::arg("out"), py::arg("text"));
}
