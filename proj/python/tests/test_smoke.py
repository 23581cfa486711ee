# Copyright 2026 The phonseg Authors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import itertools
import math

import numpy as np
import pytest

import phonseg


def log_softmax(x):
    x = x - x.max(axis=1, keepdims=True)
    return x - np.log(np.exp(x).sum(axis=1, keepdims=True))


def test_corpus_shapes_and_alignment():
    c = phonseg.gen_corpus(n_train=10, n_val=1, n_test=1, seed=3)
    u = c["train"][0]
    assert u["features"].shape[1] == 20
    assert u["mel"].shape == u["features"].shape
    assert [p for p, _, _ in u["alignment"]] == u["phonemes"]
    assert u["alignment"][-1][2] == u["features"].shape[0]
    assert c["mel_prototypes"].shape == (16, 20)


def test_ctc_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(20):
        t, k = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        lp = log_softmax(rng.normal(size=(t, k + 1)))
        target = [int(v) for v in rng.integers(0, k, size=int(rng.integers(0, 3)))]
        if len(target) > t:
            continue
        # Python oracle: sum over every frame path that collapses to target.
        total = 0.0
        for path in itertools.product(range(k + 1), repeat=t):
            collapsed = [p for i, p in enumerate(path) if p != k and (i == 0 or path[i - 1] != p)]
            if collapsed == target:
                total += math.exp(sum(lp[i, p] for i, p in enumerate(path)))
        if total == 0.0:
            continue
        assert phonseg.ctc_loss(lp, target) == pytest.approx(-math.log(total), abs=1e-9)


def test_ctc_gradient_finite_difference():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(5, 4))
    loss, grad = phonseg.ctc_loss_and_grad(logits, [0, 2])
    h = 1e-6
    for i, j in [(0, 0), (2, 3), (4, 1)]:
        up, down = logits.copy(), logits.copy()
        up[i, j] += h
        down[i, j] -= h
        fd = (phonseg.ctc_loss_and_grad(up, [0, 2])[0] - phonseg.ctc_loss_and_grad(down, [0, 2])[0]) / (2 * h)
        assert grad[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-8)
    assert loss == pytest.approx(phonseg.ctc_loss(log_softmax(logits), [0, 2]))


def test_merge_worked_example():
    blank = 4
    labels = [blank, 0, 0, 1, blank, 2, 3]
    b = np.arange(14, dtype=float).reshape(7, 2)
    s = phonseg.merge(b, labels, blank)
    assert s["categories"] == [0, 1, 2, 3]
    assert s["spans"] == [(1, 3), (3, 4), (5, 6), (6, 7)]
    np.testing.assert_allclose(s["vectors"][0], b[1:3].mean(axis=0))


def test_metrics():
    assert phonseg.edit_distance([1, 2, 3], [1, 3]) == 1
    assert phonseg.length_difference([(11, 10)]) == 1.0
    assert phonseg.length_mismatch_rate([(11, 10)]) == pytest.approx(10.0)
    with pytest.raises(phonseg.PhonsegError) as err:
        phonseg.error_rate([1], [])
    assert err.value.kind == "undefined_rate"


def test_silhouette_and_pca():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 4.0], [3.0, 4.0]])
    assert phonseg.silhouette(x, [0, 0, 1, 1]) == 1.0
    p = phonseg.pca_project(np.random.default_rng(2).normal(size=(30, 4)), 2)
    assert p["coords"].shape == (30, 2)
    np.testing.assert_allclose(p["coords"].mean(axis=0), 0.0, atol=1e-10)


def test_config_is_strict():
    cfg = phonseg.default_config("spr_only")
    assert phonseg.resolve_config(cfg) == cfg
    with pytest.raises(phonseg.PhonsegError) as err:
        phonseg.resolve_config({"schema_version": 1, "bogus": 1})
    assert err.value.kind == "config"


def test_tiny_pipeline_run(tmp_path):
    cfg = phonseg.default_config("taco_phone")
    cfg["corpus"].update(n_train=10, n_val=2, n_test=2, max_chars=5)
    cfg["asr_train"]["epochs"] = 1
    cfg["upr_train"]["epochs"] = 1
    cfg["rtm_train"]["epochs"] = 1
    cfg["rtm"]["max_decode_steps"] = 10
    cfg["analysis"]["per_class"] = 10
    first = phonseg.run_stages(cfg, tmp_path)
    assert first["stages"][-1]["stage"] == "analyze"
    again = phonseg.run_stages(cfg, tmp_path)
    assert all(s["cached"] for s in again["run_log"]["stages"])
    assert (tmp_path / "eval.csv").read_text().splitlines()[0] == "utterance_id,metric,value"
    mel = phonseg.synthesize_text(cfg, tmp_path, "abc")
    assert mel.shape[1] == 20
