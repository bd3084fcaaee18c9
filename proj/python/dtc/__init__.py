# Copyright 2026 The DTC Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Layout-and-caption conditioned image synthesis on a synthetic shapes world."""

import json as _json

from ._dtc import (
    build_dataset,
    config_hash,
    frechet_distance,
    init_checkpoint,
    parse_caption,
    preset_config,
    sample_layout,
)
from ._dtc import Service as _Service
from ._dtc import evaluate as _evaluate

__all__ = [
    "Service",
    "build_dataset",
    "config_hash",
    "evaluate",
    "frechet_distance",
    "init_checkpoint",
    "parse_caption",
    "preset_config",
    "sample_layout",
]


class Service:
    """In-process equivalent of the HTTP service.

    Each call returns (status, payload); JSON bodies are decoded.
    """

    def __init__(self, checkpoint):
        self._impl = _Service(str(checkpoint))

    @property
    def model_hash(self):
        return self._impl.model_hash

    def generate(self, request):
        body = request if isinstance(request, str) else _json.dumps(request)
        status, text = self._impl.generate(body)
        return status, _json.loads(text)

    def meta(self):
        status, text = self._impl.meta()
        return status, _json.loads(text)

    def health(self):
        return self._impl.health()


def evaluate(checkpoint, data_root, split="test", seed=0, candidates=10):
    """Metrics report of a checkpoint on one split, as a dict."""
    return _json.loads(_evaluate(str(checkpoint), str(data_root), split, seed, candidates))
