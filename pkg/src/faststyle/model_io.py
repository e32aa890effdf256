"""Model files: a JSON manifest plus one little-endian float32 weights blob.

The manifest describes the graph and, per weight blob, a byte offset and
shape into the weights file.  Blobs must tile the weights file exactly:
non-overlapping, in range, and summing to the full length.  Unknown manifest
fields are rejected so an exporter and this engine cannot disagree silently.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .graph import Graph, GraphError, Node, Preprocessing, validate

FORMAT_VERSION = 1
MANIFEST_NAME = "model.json"
WEIGHTS_NAME = "weights.bin"


class ModelFormatError(ValueError):
    """Manifest or weights file violates the model format."""


def _require_keys(obj: dict, required: set[str], optional: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ModelFormatError(f"{where}: expected an object, got {type(obj).__name__}")
    missing = required - set(obj)
    if missing:
        raise ModelFormatError(f"{where}: missing fields {sorted(missing)}")
    unknown = set(obj) - required - optional
    if unknown:
        raise ModelFormatError(f"{where}: unknown fields {sorted(unknown)}")


def save_model(g: Graph) -> tuple[bytes, bytes]:
    """Serialize to (manifest_bytes, weights_bytes).

    Blobs are packed consecutively in node order, params in sorted name
    order, so saving a just-loaded graph reproduces the weights file byte
    for byte.
    """
    validate(g)
    chunks: list[bytes] = []
    offset = 0
    nodes_json = []
    for node in g.nodes:
        params_json = {}
        for name in sorted(node.params):
            arr = node.params[name]
            raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            params_json[name] = {"offset": offset, "shape": list(arr.shape)}
            chunks.append(raw)
            offset += len(raw)
        nodes_json.append(
            {
                "id": node.id,
                "op": node.op,
                "inputs": list(node.inputs),
                "attrs": dict(node.attrs),
                "params": params_json,
            }
        )
    manifest = {
        "format_version": FORMAT_VERSION,
        "input": {"id": g.input_id, "shape": list(g.input_shape)},
        "outputs": list(g.outputs),
        "preprocessing": None
        if g.preprocessing is None
        else {
            "mean": [float(v) for v in g.preprocessing.mean],
            "std": [float(v) for v in g.preprocessing.std],
        },
        "nodes": nodes_json,
    }
    manifest_bytes = json.dumps(manifest, indent=2, sort_keys=True).encode() + b"\n"
    return manifest_bytes, b"".join(chunks)


def load_model(manifest_bytes: bytes, weights_bytes: bytes) -> Graph:
    """Parse and validate a model; all parameters are materialized."""
    try:
        doc = json.loads(manifest_bytes)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"manifest is not valid JSON: {exc}") from exc
    _require_keys(
        doc,
        {"format_version", "input", "outputs", "nodes"},
        {"preprocessing"},
        "manifest",
    )
    if doc["format_version"] != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format_version {doc['format_version']!r}, expected {FORMAT_VERSION}"
        )
    _require_keys(doc["input"], {"id", "shape"}, set(), "manifest.input")
    input_shape = tuple(int(v) for v in doc["input"]["shape"])
    if len(input_shape) != 4:
        raise ModelFormatError(f"input shape must have 4 entries, got {list(input_shape)}")

    preprocessing = None
    pre = doc.get("preprocessing")
    if pre is not None:
        _require_keys(pre, {"mean", "std"}, set(), "manifest.preprocessing")
        preprocessing = Preprocessing(np.array(pre["mean"]), np.array(pre["std"]))

    file_len = len(weights_bytes)
    ranges: list[tuple[int, int, str]] = []
    nodes: list[Node] = []
    if not isinstance(doc["nodes"], list):
        raise ModelFormatError("manifest.nodes must be a list")
    for entry in doc["nodes"]:
        _require_keys(entry, {"id", "op", "inputs"}, {"attrs", "params"}, "manifest node")
        node_id = entry["id"]
        params = {}
        for name, blob in entry.get("params", {}).items():
            where = f"node {node_id!r} blob {name!r}"
            _require_keys(blob, {"offset", "shape"}, set(), where)
            shape = tuple(int(v) for v in blob["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = int(blob["offset"])
            stop = start + 4 * count
            if start < 0 or stop > file_len:
                raise ModelFormatError(
                    f"{where}: byte range [{start}, {stop}) exceeds weights file of {file_len} bytes"
                )
            arr = np.frombuffer(weights_bytes, dtype="<f4", count=count, offset=start)
            params[name] = arr.reshape(shape)
            ranges.append((start, stop, where))
        nodes.append(
            Node(
                id=node_id,
                op=entry["op"],
                inputs=tuple(entry["inputs"]),
                attrs=dict(entry.get("attrs", {})),
                params=params,
            )
        )

    ranges.sort()
    for (s0, e0, w0), (s1, e1, w1) in zip(ranges, ranges[1:]):
        if s1 < e0:
            raise ModelFormatError(f"overlapping weight blobs: {w0} and {w1}")
    total = sum(e - s for s, e, _ in ranges)
    if total != file_len:
        raise ModelFormatError(
            f"weight blobs cover {total} bytes but the weights file has {file_len}"
        )

    g = Graph(
        nodes=tuple(nodes),
        input_id=doc["input"]["id"],
        input_shape=input_shape,
        outputs=tuple(doc["outputs"]),
        preprocessing=preprocessing,
    )
    try:
        validate(g)
    except GraphError as exc:
        raise ModelFormatError(f"manifest describes an invalid graph: {exc}") from exc
    return g


def save_model_dir(g: Graph, path) -> None:
    """Write model.json + weights.bin into a directory (created if needed)."""
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    manifest, weights = save_model(g)
    (d / MANIFEST_NAME).write_bytes(manifest)
    (d / WEIGHTS_NAME).write_bytes(weights)


def load_model_dir(path) -> Graph:
    d = Path(path)
    manifest = (d / MANIFEST_NAME).read_bytes()
    weights = (d / WEIGHTS_NAME).read_bytes()
    return load_model(manifest, weights)
