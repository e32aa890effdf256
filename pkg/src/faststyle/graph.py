"""Computation graphs: typed nodes, validation, shape inference and execution.

A Graph is an immutable DAG over the op set {conv2d, batch_norm, relu, relu6,
maxpool, avgpool, upsample, concat, add}.  Node order is the execution order
and must be topological (every consumed id is produced earlier or is the
graph input).  Batch size is fixed to 1 end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    Tensor4,
    ShapeError,
    _as_f32,
    activation,
    add,
    batch_norm,
    concat_channels,
    conv2d,
    conv2d_fast,
    pool,
    upsample_nearest,
)

OPS = frozenset(
    {"conv2d", "batch_norm", "relu", "relu6", "maxpool", "avgpool", "upsample", "concat", "add"}
)

# required attrs (with defaults for the optional ones) per op
_ATTR_SPEC = {
    "conv2d": {"stride": 1, "padding": 0, "groups": 1},
    "batch_norm": {"eps": 1e-5},
    "relu": {},
    "relu6": {},
    "maxpool": {"kernel": None, "stride": None, "padding": 0, "ceil": False},
    "avgpool": {"kernel": None, "stride": None},
    "upsample": {"factor": None},
    "concat": {},
    "add": {},
}

_PARAM_SPEC = {
    "conv2d": ({"weight"}, {"bias"}),
    "batch_norm": ({"gamma", "beta", "mean", "var"}, set()),
}


class GraphError(ValueError):
    """Graph is malformed; carries the offending node id when known."""

    def __init__(self, message: str, node_id: str | None = None):
        self.node_id = node_id
        if node_id is not None:
            message = f"node {node_id!r}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Node:
    id: str
    op: str
    inputs: tuple[str, ...]
    attrs: dict
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        frozen = {}
        for name, arr in self.params.items():
            a = _as_f32(arr)
            a.flags.writeable = False
            frozen[name] = a
        object.__setattr__(self, "params", frozen)

    def param_count(self) -> int:
        return sum(int(p.size) for p in self.params.values())


@dataclass(frozen=True)
class Preprocessing:
    """Per-channel (x - mean) / std applied once to the graph input."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        m, s = _as_f32(self.mean), _as_f32(self.std)
        if m.ndim != 1 or m.shape != s.shape:
            raise GraphError("preprocessing mean/std must be equal-length vectors")
        if np.any(s <= 0):
            raise GraphError("preprocessing std must be strictly positive")
        m.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "std", s)


@dataclass(frozen=True)
class Graph:
    nodes: tuple[Node, ...]
    input_id: str
    input_shape: tuple[int, int, int, int]  # declared reference shape (1, c, h, w)
    outputs: tuple[str, ...]
    preprocessing: Preprocessing | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise GraphError(f"no node with id {node_id!r}")

    def structure_key(self) -> tuple:
        """Topology fingerprint used to match a PrunePlan to its graph."""
        return tuple((n.id, n.op, n.inputs) for n in self.nodes) + (self.input_id, self.input_shape)


def _check_attrs(node: Node) -> dict:
    spec = _ATTR_SPEC[node.op]
    unknown = set(node.attrs) - set(spec)
    if unknown:
        raise GraphError(f"unknown attrs {sorted(unknown)} for op {node.op}", node.id)
    attrs = {}
    for key, default in spec.items():
        if key in node.attrs:
            attrs[key] = node.attrs[key]
        elif default is None:
            raise GraphError(f"missing required attr {key!r} for op {node.op}", node.id)
        else:
            attrs[key] = default
    return attrs


def _check_params(node: Node):
    required, optional = _PARAM_SPEC.get(node.op, (set(), set()))
    names = set(node.params)
    missing = required - names
    if missing:
        raise GraphError(f"missing params {sorted(missing)}", node.id)
    extra = names - required - optional
    if extra:
        raise GraphError(f"unexpected params {sorted(extra)}", node.id)


def _infer_node_shape(node: Node, in_shapes: list[tuple]) -> tuple:
    attrs = _check_attrs(node)
    op = node.op
    if op == "conv2d":
        (n, c, h, w), = in_shapes
        wshape = node.params["weight"].shape
        if len(wshape) != 4:
            raise GraphError(f"conv weight must be rank 4, got {wshape}", node.id)
        o, ig, kh, kw = wshape
        s, p, g = attrs["stride"], attrs["padding"], attrs["groups"]
        if g < 1 or c != ig * g or o % g:
            raise GraphError(
                f"channel mismatch: input {c}, weight in-channels {ig}, groups {g}, out {o}",
                node.id,
            )
        if "bias" in node.params and node.params["bias"].shape != (o,):
            raise GraphError(f"bias shape {node.params['bias'].shape} != ({o},)", node.id)
        ho = (h + 2 * p - kh) // s + 1
        wo = (w + 2 * p - kw) // s + 1
        if ho < 1 or wo < 1:
            raise GraphError(f"kernel {kh}x{kw} exceeds padded input {h + 2 * p}x{w + 2 * p}", node.id)
        return (n, o, ho, wo)
    if op == "batch_norm":
        (n, c, h, w), = in_shapes
        for name in ("gamma", "beta", "mean", "var"):
            if node.params[name].shape != (c,):
                raise GraphError(f"{name} length {node.params[name].shape} != ({c},)", node.id)
        if attrs["eps"] < 0:
            raise GraphError("eps must be non-negative", node.id)
        return (n, c, h, w)
    if op in ("relu", "relu6"):
        return in_shapes[0]
    if op in ("maxpool", "avgpool"):
        (n, c, h, w), = in_shapes
        k, s = attrs["kernel"], attrs["stride"]
        p = attrs.get("padding", 0)
        ceil = attrs.get("ceil", False)
        if op == "avgpool" and (p or ceil):
            raise GraphError("avgpool supports neither padding nor ceil", node.id)
        if k < 1 or s < 1 or p < 0 or p > k // 2:
            raise GraphError(f"bad pool attrs kernel={k} stride={s} padding={p}", node.id)
        span_h = h + 2 * p - k
        span_w = w + 2 * p - k
        if span_h < 0 or span_w < 0:
            raise GraphError(f"pool kernel {k} exceeds input {h}x{w}", node.id)
        if ceil:
            ho = -(-span_h // s) + 1
            wo = -(-span_w // s) + 1
            if (ho - 1) * s >= h + p:
                ho -= 1
            if (wo - 1) * s >= w + p:
                wo -= 1
        else:
            ho = span_h // s + 1
            wo = span_w // s + 1
        return (n, c, ho, wo)
    if op == "upsample":
        (n, c, h, w), = in_shapes
        f = attrs["factor"]
        if f < 1:
            raise GraphError(f"upsample factor must be >= 1, got {f}", node.id)
        return (n, c, h * f, w * f)
    if op == "concat":
        n, _, h, w = in_shapes[0]
        for shp in in_shapes[1:]:
            if (shp[0], shp[2], shp[3]) != (n, h, w):
                raise GraphError(f"concat inputs disagree on (n, h, w): {in_shapes}", node.id)
        return (n, sum(shp[1] for shp in in_shapes), h, w)
    if op == "add":
        a, b = in_shapes
        if a != b:
            raise GraphError(f"add inputs differ: {a} vs {b}", node.id)
        return a
    raise GraphError(f"unsupported op {op!r}", node.id)


def infer_shapes(g: Graph, input_shape: tuple | None = None) -> dict[str, tuple]:
    """Shapes of the graph input and of every node output.

    Raises GraphError naming the offending node on any inconsistency.
    """
    shape = tuple(input_shape) if input_shape is not None else g.input_shape
    if len(shape) != 4 or shape[0] != 1:
        raise GraphError(f"input shape must be (1, c, h, w), got {shape}")
    shapes: dict[str, tuple] = {g.input_id: shape}
    for node in g.nodes:
        ins = []
        for src in node.inputs:
            if src not in shapes:
                raise GraphError(f"input {src!r} is not produced earlier in the graph", node.id)
            ins.append(shapes[src])
        n_in = {"concat": None, "add": 2}.get(node.op, 1)
        if n_in is not None and len(ins) != n_in:
            raise GraphError(f"op {node.op} takes {n_in} input(s), got {len(ins)}", node.id)
        if node.op == "concat" and not ins:
            raise GraphError("concat needs at least one input", node.id)
        shapes[node.id] = _infer_node_shape(node, ins)
    return shapes


def validate(g: Graph) -> dict[str, tuple]:
    """Full structural validation; returns the inferred shape map."""
    if not g.nodes:
        raise GraphError("graph has no nodes")
    seen = {g.input_id}
    for node in g.nodes:
        if node.op not in OPS:
            raise GraphError(f"unsupported op {node.op!r}", node.id)
        if node.id in seen:
            raise GraphError("duplicate id", node.id)
        seen.add(node.id)
        _check_params(node)
    if not g.outputs:
        raise GraphError("graph declares no outputs")
    for out in g.outputs:
        if out not in seen:
            raise GraphError(f"declared output {out!r} does not exist")
    if g.preprocessing is not None and len(g.preprocessing.mean) != g.input_shape[1]:
        raise GraphError("preprocessing vectors do not match the input channel count")
    return infer_shapes(g)


def _apply_node(node: Node, ins: list[Tensor4], fast: bool) -> Tensor4:
    attrs = _check_attrs(node)
    op = node.op
    if op == "conv2d":
        kernel = conv2d_fast if fast else conv2d
        return kernel(
            ins[0],
            Tensor4(node.params["weight"]),
            node.params.get("bias"),
            stride=attrs["stride"],
            padding=attrs["padding"],
            groups=attrs["groups"],
        )
    if op == "batch_norm":
        p = node.params
        return batch_norm(ins[0], p["gamma"], p["beta"], p["mean"], p["var"], eps=attrs["eps"])
    if op in ("relu", "relu6"):
        return activation(ins[0], op)
    if op == "maxpool":
        return pool(ins[0], "max", attrs["kernel"], attrs["stride"], attrs["padding"], attrs["ceil"])
    if op == "avgpool":
        return pool(ins[0], "avg", attrs["kernel"], attrs["stride"])
    if op == "upsample":
        return upsample_nearest(ins[0], attrs["factor"])
    if op == "concat":
        return concat_channels(ins)
    if op == "add":
        return add(ins[0], ins[1])
    raise GraphError(f"unsupported op {op!r}", node.id)


def execute(
    g: Graph,
    x: Tensor4,
    taps: tuple[str, ...] = (),
    fast: bool = False,
) -> dict[str, Tensor4]:
    """Run the graph on one input; return every requested tap plus all outputs.

    The input must match the declared batch (1) and channel count; spatial
    size may differ from the reference shape.  Preprocessing, when declared,
    is applied to the input exactly once.  Intermediates are freed as soon as
    their last consumer has run.
    """
    if x.n != 1:
        raise GraphError(f"batch size is fixed to 1, got n = {x.n}")
    if x.c != g.input_shape[1]:
        raise GraphError(f"input has {x.c} channels, graph declares {g.input_shape[1]}")
    known = {g.input_id} | {n.id for n in g.nodes}
    for t in taps:
        if t not in known:
            raise GraphError(f"unknown tap id {t!r}")
    wanted = set(taps) | set(g.outputs)

    if g.preprocessing is not None:
        c = x.c
        mean = g.preprocessing.mean.reshape(1, c, 1, 1)
        std = g.preprocessing.std.reshape(1, c, 1, 1)
        x = Tensor4((x.data - mean) / std)

    last_use: dict[str, int] = {}
    for idx, node in enumerate(g.nodes):
        for src in node.inputs:
            last_use[src] = idx

    env: dict[str, Tensor4] = {g.input_id: x}
    results: dict[str, Tensor4] = {}
    if g.input_id in wanted:
        results[g.input_id] = x
    for idx, node in enumerate(g.nodes):
        try:
            ins = [env[src] for src in node.inputs]
        except KeyError as exc:
            raise GraphError(f"input {exc.args[0]!r} missing at execution time", node.id)
        try:
            out = _apply_node(node, ins, fast)
        except ShapeError as exc:
            raise GraphError(str(exc), node.id) from exc
        env[node.id] = out
        if node.id in wanted:
            results[node.id] = out
        for src in node.inputs:
            if last_use.get(src) == idx and src not in wanted:
                env.pop(src, None)
    return results


def count_params(g: Graph) -> int:
    """Total stored weight elements (conv kernels, biases, BN vectors)."""
    return sum(node.param_count() for node in g.nodes)


def count_flops(g: Graph, input_shape: tuple | None = None) -> int:
    """FLOPs for one forward pass under a 1 MAC = 2 FLOPs convention.

    conv: 2*Kh*Kw*(Cin/groups)*Cout*Hout*Wout; batch_norm: 2 per element;
    relu/relu6: 1 per element; pooling: kernel area per output element;
    add: 1 per element; upsample and concat are counted as free copies.
    """
    shapes = infer_shapes(g, input_shape)
    total = 0
    for node in g.nodes:
        out = shapes[node.id]
        elems = int(np.prod(out))
        if node.op == "conv2d":
            o, ig, kh, kw = node.params["weight"].shape
            total += 2 * kh * kw * ig * out[1] * out[2] * out[3]
        elif node.op == "batch_norm":
            total += 2 * elems
        elif node.op in ("relu", "relu6", "add"):
            total += elems
        elif node.op in ("maxpool", "avgpool"):
            k = _check_attrs(node)["kernel"]
            total += k * k * elems
        # upsample/concat: pure data movement
    return total


class GraphBuilder:
    """Incremental construction of a validated Graph.

    Each method appends one node and returns its id so calls can be chained.
    """

    def __init__(self, input_id: str = "image", input_shape=(1, 3, 32, 32), preprocessing=None):
        self.input_id = input_id
        self.input_shape = tuple(input_shape)
        self.preprocessing = preprocessing
        self._nodes: list[Node] = []

    def _push(self, node_id, op, inputs, attrs, params=None) -> str:
        self._nodes.append(Node(node_id, op, tuple(inputs), attrs, params or {}))
        return node_id

    def conv2d(self, node_id, src, weight, bias=None, stride=1, padding=0, groups=1) -> str:
        params = {"weight": weight}
        if bias is not None:
            params["bias"] = bias
        attrs = {"stride": int(stride), "padding": int(padding), "groups": int(groups)}
        return self._push(node_id, "conv2d", [src], attrs, params)

    def batch_norm(self, node_id, src, gamma, beta, mean, var, eps=1e-5) -> str:
        params = {"gamma": gamma, "beta": beta, "mean": mean, "var": var}
        return self._push(node_id, "batch_norm", [src], {"eps": float(eps)}, params)

    def relu(self, node_id, src) -> str:
        return self._push(node_id, "relu", [src], {})

    def relu6(self, node_id, src) -> str:
        return self._push(node_id, "relu6", [src], {})

    def maxpool(self, node_id, src, kernel, stride, padding=0, ceil=False) -> str:
        attrs = {"kernel": int(kernel), "stride": int(stride), "padding": int(padding), "ceil": bool(ceil)}
        return self._push(node_id, "maxpool", [src], attrs)

    def avgpool(self, node_id, src, kernel, stride) -> str:
        return self._push(node_id, "avgpool", [src], {"kernel": int(kernel), "stride": int(stride)})

    def upsample(self, node_id, src, factor) -> str:
        return self._push(node_id, "upsample", [src], {"factor": int(factor)})

    def concat(self, node_id, srcs) -> str:
        return self._push(node_id, "concat", list(srcs), {})

    def add(self, node_id, a, b) -> str:
        return self._push(node_id, "add", [a, b], {})

    def graph(self, outputs) -> Graph:
        g = Graph(
            nodes=tuple(self._nodes),
            input_id=self.input_id,
            input_shape=self.input_shape,
            outputs=tuple(outputs) if not isinstance(outputs, str) else (outputs,),
            preprocessing=self.preprocessing,
        )
        validate(g)
        return g
