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

"""Python bindings for the phonseg C++ core.

Configs cross the boundary as JSON; the wrappers below accept and return
plain dicts.
"""

import json as _json

from . import _core
from ._core import (
    PhonsegError,
    brute_force_ctc,
    ctc_loss,
    ctc_loss_and_grad,
    edit_distance,
    error_rate,
    gen_corpus,
    greedy_decode,
    length_difference,
    length_mismatch_rate,
    merge,
    pca_project,
    silhouette,
)

__all__ = [
    "PhonsegError",
    "brute_force_ctc",
    "ctc_loss",
    "ctc_loss_and_grad",
    "default_config",
    "edit_distance",
    "error_rate",
    "gen_corpus",
    "greedy_decode",
    "length_difference",
    "length_mismatch_rate",
    "merge",
    "pca_project",
    "resolve_config",
    "run_stages",
    "silhouette",
    "synthesize_text",
]


def default_config(variant="proposed"):
    return _json.loads(_core.default_config(variant))


def resolve_config(config):
    """Strictly parse a (partial) config dict and return it with defaults filled in."""
    return _json.loads(_core.resolve_config(_json.dumps(config)))


def run_stages(config, out, target="all"):
    """Run the pipeline up to `target` under `out`; returns the manifest dict."""
    return _json.loads(_core.run_stages(_json.dumps(config), str(out), target))


def synthesize_text(config, out, text):
    return _core.synthesize_text(_json.dumps(config), str(out), text)
