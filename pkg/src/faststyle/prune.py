"""Zero-channel pruning: detect dead ReLU channels, propagate keep-masks,
rewrite the graph, and verify functional equivalence.

A channel is "dead" when its activation is zero (up to tau) at a ReLU output
for every calibration input.  Dead channels are removed together with the
producing convolution filters and batch-norm entries; consuming convolutions
drop the matching kernel slices.  Only convolutions can change a tensor's
channel count, so keep-masks are equal along every chain of per-channel ops
(BN, activations, pooling, upsampling, depthwise conv) and across `add`,
while `concat` splices them; that equivalence is solved with a channel-level
union-find.  Any channel that cannot be proven removable is kept and the
reversion reported, so the pass is total on every supported graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, GraphError, Node, count_flops, count_params, execute, infer_shapes, validate
from .tensor import Tensor4


class PruneError(ValueError):
    """Pruning inputs are inconsistent (masks, plan/graph mismatch, ...)."""


@dataclass(frozen=True)
class KeepMask:
    """Per-channel keep bits (True = keep) anchored at a relu/relu6 node."""

    node_id: str
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool).copy()
        if b.ndim != 1:
            raise PruneError(f"mask for {self.node_id!r} must be a 1-D vector")
        if not b.any():
            raise PruneError(f"mask for {self.node_id!r} prunes every channel")
        b.flags.writeable = False
        object.__setattr__(self, "bits", b)

    def as_string(self) -> str:
        return "".join("1" if v else "0" for v in self.bits)

    @property
    def pruned(self) -> int:
        return int((~self.bits).sum())


@dataclass(frozen=True)
class PrunePlan:
    """Resolved keep-masks for every tensor plus per-node slice directives.

    Invariants: both inputs of any `add` carry the same mask as its output,
    and a concat output mask is the concatenation of its input masks.
    """

    masks: dict[str, np.ndarray]  # tensor id (input or node) -> bool keep vector
    reverted: dict[str, np.ndarray]  # relu id -> bool vector, detected dead but kept
    graph_key: tuple

    def keep_indices(self, tensor_id: str) -> np.ndarray:
        return np.flatnonzero(self.masks[tensor_id])

    @property
    def reverted_count(self) -> int:
        return int(sum(v.sum() for v in self.reverted.values()))

    def is_identity(self) -> bool:
        return all(m.all() for m in self.masks.values())


@dataclass
class PruneReport:
    """Channel/parameter/FLOP accounting for one pruning pass."""

    removed_per_node: dict[str, tuple[int, int]]  # id -> (removed, total)
    params_before: int
    params_after: int
    flops_before: int
    flops_after: int
    reverted_channels: int = 0
    max_deviation: float | None = None
    deviation_tol: float | None = None
    deviation_inputs: int = 0

    @property
    def channels_removed(self) -> int:
        return sum(r for r, _ in self.removed_per_node.values())

    def to_text(self) -> str:
        lines = ["zero-channel prune report"]
        for node_id, (removed, total) in self.removed_per_node.items():
            if removed:
                lines.append(f"  {node_id}: removed {removed}/{total} channels")
        lines.append(f"  channels removed: {self.channels_removed}")
        if self.reverted_channels:
            lines.append(f"  channels reverted to keep (not provably removable): {self.reverted_channels}")
        pct = 0.0 if not self.params_before else 100.0 * (1 - self.params_after / self.params_before)
        lines.append(f"  params: {self.params_before} -> {self.params_after} (-{pct:.1f}%)")
        lines.append(f"  flops:  {self.flops_before} -> {self.flops_after}")
        if self.max_deviation is None:
            lines.append("  equivalence: not verified")
        else:
            lines.append(
                f"  equivalence: max deviation {self.max_deviation:.3e} over "
                f"{self.deviation_inputs} inputs (tol {self.deviation_tol:g})"
            )
        return "\n".join(lines)


@dataclass(frozen=True)
class EquivalenceReport:
    max_deviation: float
    tol: float
    inputs_checked: int

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def relu_nodes(g: Graph) -> list[Node]:
    return [n for n in g.nodes if n.op in ("relu", "relu6")]


def detect_zero_channels(g: Graph, calibration: list[Tensor4], tau: float = 0.0) -> list[KeepMask]:
    """Keep-masks for every relu/relu6 node: bit c is 0 iff the peak
    |activation| of channel c over all calibration inputs is <= tau.

    If every channel of a node falls below tau, the channel with the largest
    peak is kept (masks never prune a whole tensor).
    """
    if not calibration:
        raise PruneError("calibration set is empty")
    if tau < 0:
        raise PruneError(f"tau must be non-negative, got {tau}")
    ids = [n.id for n in relu_nodes(g)]
    if not ids:
        return []
    peak: dict[str, np.ndarray] = {}
    for x in calibration:
        outs = execute(g, x, taps=tuple(ids))
        for node_id in ids:
            a = np.abs(outs[node_id].data).reshape(outs[node_id].c, -1).max(axis=1)
            peak[node_id] = a if node_id not in peak else np.maximum(peak[node_id], a)
    masks = []
    for node_id in ids:
        bits = peak[node_id] > tau
        if not bits.any():
            bits = bits.copy()
            bits[int(np.argmax(peak[node_id]))] = True
        masks.append(KeepMask(node_id, bits))
    return masks


class _ChannelUnion:
    """Union-find over (tensor, channel) pairs."""

    def __init__(self, sizes: dict[str, int]):
        self.base: dict[str, int] = {}
        total = 0
        for tid, c in sizes.items():
            self.base[tid] = total
            total += c
        self.parent = list(range(total))

    def index(self, tid: str, c: int) -> int:
        return self.base[tid] + c

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[rj] = ri

    def union_tensors(self, a: str, b: str, count: int) -> None:
        for c in range(count):
            self.union(self.index(a, c), self.index(b, c))


def _is_depthwise(node: Node, in_channels: int) -> bool:
    groups = node.attrs.get("groups", 1)
    out_channels = node.params["weight"].shape[0]
    return groups > 1 and groups == in_channels and out_channels == in_channels


def propagate_masks(g: Graph, detected: list[KeepMask]) -> PrunePlan:
    """Resolve detected relu masks into a consistent per-tensor keep plan.

    Rules: a relu mask prunes the producing conv filters and BN entries;
    consuming convs drop the matching input slices; per-channel ops pass
    masks through; concat splices; `add` keeps the union of its sides;
    depthwise convs pass masks 1:1.  Channels whose removal is not provably
    output-preserving (graph inputs, declared outputs, grouped convs with
    1 < groups < channels, any nonzero value read by a conv) are kept.
    """
    shapes = infer_shapes(g)
    channels = {tid: shapes[tid][1] for tid in shapes}
    detected_map: dict[str, KeepMask] = {}
    for m in detected:
        node = g.node(m.node_id)
        if node.op not in ("relu", "relu6"):
            raise PruneError(f"mask anchored at {m.node_id!r}, which is a {node.op}, not a relu")
        if len(m.bits) != channels[m.node_id]:
            raise PruneError(
                f"mask for {m.node_id!r} has {len(m.bits)} bits, tensor has {channels[m.node_id]} channels"
            )
        detected_map[m.node_id] = m

    uf = _ChannelUnion(channels)
    zero = {tid: np.zeros(channels[tid], dtype=bool) for tid in channels}
    forced: list[tuple[str, int]] = [(g.input_id, c) for c in range(channels[g.input_id])]
    for out_id in g.outputs:
        forced.extend((out_id, c) for c in range(channels[out_id]))

    for node in g.nodes:
        cin = channels[node.inputs[0]] if node.inputs else 0
        if node.op == "conv2d":
            groups = node.attrs.get("groups", 1)
            if groups == 1:
                pass  # decouples input and output masks; acts as an exit below
            elif _is_depthwise(node, cin):
                uf.union_tensors(node.inputs[0], node.id, cin)
                if "bias" not in node.params:
                    zero[node.id] = zero[node.inputs[0]].copy()
            else:
                # grouped conv with 1 < groups < channels: slicing would move
                # group boundaries, so both sides stay intact (reported below)
                forced.extend((node.inputs[0], c) for c in range(cin))
                forced.extend((node.id, c) for c in range(channels[node.id]))
        elif node.op == "batch_norm":
            uf.union_tensors(node.inputs[0], node.id, cin)
        elif node.op in ("relu", "relu6"):
            uf.union_tensors(node.inputs[0], node.id, cin)
            if node.id in detected_map:
                zero[node.id] = ~detected_map[node.id].bits
            else:
                zero[node.id] = zero[node.inputs[0]].copy()
        elif node.op in ("maxpool", "avgpool", "upsample"):
            uf.union_tensors(node.inputs[0], node.id, cin)
            zero[node.id] = zero[node.inputs[0]].copy()
        elif node.op == "concat":
            off = 0
            parts = []
            for src in node.inputs:
                for c in range(channels[src]):
                    uf.union(uf.index(src, c), uf.index(node.id, off + c))
                parts.append(zero[src])
                off += channels[src]
            zero[node.id] = np.concatenate(parts)
        elif node.op == "add":
            a, b = node.inputs
            uf.union_tensors(a, node.id, cin)
            uf.union_tensors(b, node.id, cin)
            zero[node.id] = zero[a] & zero[b]

    keep_class = np.zeros(len(uf.parent), dtype=bool)
    for tid, c in forced:
        keep_class[uf.find(uf.index(tid, c))] = True
    # exits: a conv reading a channel whose value is not provably zero pins it
    for node in g.nodes:
        if node.op == "conv2d" and node.attrs.get("groups", 1) == 1:
            src = node.inputs[0]
            for c in np.flatnonzero(~zero[src]):
                keep_class[uf.find(uf.index(src, int(c)))] = True

    masks = {
        tid: np.array([keep_class[uf.find(uf.index(tid, c))] for c in range(channels[tid])])
        for tid in channels
    }
    # never prune a tensor down to zero channels
    changed = True
    while changed:
        changed = False
        for tid, mask in masks.items():
            if not mask.any():
                keep_class[uf.find(uf.index(tid, 0))] = True
                changed = True
        if changed:
            masks = {
                tid: np.array([keep_class[uf.find(uf.index(tid, c))] for c in range(channels[tid])])
                for tid in channels
            }

    reverted = {}
    for node_id, m in detected_map.items():
        kept_dead = (~m.bits) & masks[node_id]
        if kept_dead.any():
            reverted[node_id] = kept_dead
    return PrunePlan(masks=masks, reverted=reverted, graph_key=g.structure_key())


def apply_prune(g: Graph, plan: PrunePlan) -> tuple[Graph, PruneReport]:
    """Rewrite the graph with sliced weights; kept channels keep their order."""
    if plan.graph_key != g.structure_key():
        raise PruneError("plan was derived from a different graph")
    shapes = infer_shapes(g)
    new_nodes = []
    removed: dict[str, tuple[int, int]] = {}
    for node in g.nodes:
        total = shapes[node.id][1]
        kout = plan.keep_indices(node.id)
        removed[node.id] = (total - len(kout), total)
        params = dict(node.params)
        attrs = dict(node.attrs)
        if node.op == "conv2d":
            groups = node.attrs.get("groups", 1)
            kin = plan.keep_indices(node.inputs[0])
            if groups == 1:
                params["weight"] = node.params["weight"][kout][:, kin]
                if "bias" in params:
                    params["bias"] = node.params["bias"][kout]
            elif _is_depthwise(node, shapes[node.inputs[0]][1]):
                params["weight"] = node.params["weight"][kout]
                if "bias" in params:
                    params["bias"] = node.params["bias"][kout]
                attrs["groups"] = len(kout)
            # other grouped convs were forced intact by the plan
        elif node.op == "batch_norm":
            for name in ("gamma", "beta", "mean", "var"):
                params[name] = node.params[name][kout]
        new_nodes.append(Node(node.id, node.op, node.inputs, attrs, params))
    pruned = Graph(
        nodes=tuple(new_nodes),
        input_id=g.input_id,
        input_shape=g.input_shape,
        outputs=g.outputs,
        preprocessing=g.preprocessing,
    )
    validate(pruned)
    report = PruneReport(
        removed_per_node=removed,
        params_before=count_params(g),
        params_after=count_params(pruned),
        flops_before=count_flops(g),
        flops_after=count_flops(pruned),
        reverted_channels=plan.reverted_count,
    )
    return pruned, report


def verify_equivalence(
    original: Graph,
    pruned: Graph,
    inputs: list[Tensor4],
    tol: float = 1e-5,
) -> EquivalenceReport:
    """Max |original - pruned| over all declared outputs and inputs.

    Pruning must never change output shapes; a mismatch is an error, not a
    deviation.
    """
    if not inputs:
        raise PruneError("verify_equivalence needs at least one input")
    worst = 0.0
    for x in inputs:
        a = execute(original, x)
        b = execute(pruned, x)
        for out_id in original.outputs:
            ta, tb = a[out_id], b[out_id]
            if ta.shape != tb.shape:
                raise GraphError(
                    f"output shape changed by pruning: {ta.shape} vs {tb.shape}", out_id
                )
            worst = max(worst, float(np.max(np.abs(ta.data - tb.data))) if ta.data.size else 0.0)
    return EquivalenceReport(max_deviation=worst, tol=tol, inputs_checked=len(inputs))


def prune_graph(
    g: Graph,
    calibration: list[Tensor4],
    tau: float = 0.0,
    verify_inputs: list[Tensor4] | None = None,
    tol: float = 1e-5,
) -> tuple[Graph, PruneReport]:
    """Detect, propagate and apply in one step; optionally verify."""
    masks = detect_zero_channels(g, calibration, tau)
    plan = propagate_masks(g, masks)
    pruned, report = apply_prune(g, plan)
    if verify_inputs:
        eq = verify_equivalence(g, pruned, verify_inputs, tol)
        report.max_deviation = eq.max_deviation
        report.deviation_tol = eq.tol
        report.deviation_inputs = eq.inputs_checked
    return pruned, report
