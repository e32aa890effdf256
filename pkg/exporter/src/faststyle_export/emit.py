"""Writer for the engine's model format: model.json + weights.bin.

Kept free of any engine import on purpose: the format is the contract, and
this module proves it is writable from the source ecosystem alone.  Blobs
are packed consecutively in add order, params in sorted name order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
MANIFEST_NAME = "model.json"
WEIGHTS_NAME = "weights.bin"


class ExportError(RuntimeError):
    """A source layer or checkpoint cannot be represented in the format."""


class ManifestWriter:
    def __init__(self, input_id: str, input_shape, preprocessing=None):
        self.input_id = input_id
        self.input_shape = [int(v) for v in input_shape]
        self.preprocessing = preprocessing  # (mean, std) vectors or None
        self._nodes = []
        self._chunks: list[bytes] = []
        self._offset = 0

    def add_node(self, node_id: str, op: str, inputs, attrs=None, params=None) -> str:
        params_json = {}
        for name in sorted(params or {}):
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            params_json[name] = {"offset": self._offset, "shape": list(arr.shape)}
            raw = arr.tobytes()
            self._chunks.append(raw)
            self._offset += len(raw)
        self._nodes.append(
            {
                "id": node_id,
                "op": op,
                "inputs": list(inputs),
                "attrs": dict(attrs or {}),
                "params": params_json,
            }
        )
        return node_id

    def finish(self, outputs) -> tuple[bytes, bytes]:
        manifest = {
            "format_version": FORMAT_VERSION,
            "input": {"id": self.input_id, "shape": self.input_shape},
            "outputs": list(outputs),
            "preprocessing": None
            if self.preprocessing is None
            else {
                "mean": [float(v) for v in self.preprocessing[0]],
                "std": [float(v) for v in self.preprocessing[1]],
            },
            "nodes": self._nodes,
        }
        text = json.dumps(manifest, indent=2, sort_keys=True).encode() + b"\n"
        return text, b"".join(self._chunks)

    def write_dir(self, path, outputs) -> None:
        d = Path(path)
        d.mkdir(parents=True, exist_ok=True)
        manifest, weights = self.finish(outputs)
        (d / MANIFEST_NAME).write_bytes(manifest)
        (d / WEIGHTS_NAME).write_bytes(weights)
