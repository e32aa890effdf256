"""Rank-4 tensors (n, c, h, w) and the numeric kernels every graph node needs.

Everything is float32 and every kernel is a pure function.  Convolution and
average pooling accumulate in a fixed, documented order (bias first, then
in-channel, then kernel row, then kernel column) so that removing channels
whose values are exactly zero reproduces the original outputs bit for bit.
That property is what makes tight pruned-vs-unpruned equivalence tolerances
possible; keep it in mind before "optimizing" these loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_DEFAULT = 1e-5

_F32 = np.float32


class ShapeError(ValueError):
    """Operand shapes or attributes are inconsistent with an operation."""


def _as_f32(a, name: str = "array") -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype != np.float32:
        arr = arr.astype(np.float32)
    return np.ascontiguousarray(arr)


@dataclass(frozen=True)
class Tensor4:
    """Dense (n, c, h, w) float32 array, frozen read-only on construction.

    The constructor adopts the given array: it is marked non-writeable (a
    copy is made only if dtype or layout conversion requires one).
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _as_f32(self.data)
        if arr.ndim != 4:
            raise ShapeError(f"Tensor4 expects rank-4 data, got rank {arr.ndim}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]

    @property
    def h(self) -> int:
        return self.data.shape[2]

    @property
    def w(self) -> int:
        return self.data.shape[3]


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean and standard deviation across the spatial axes."""

    mean: np.ndarray  # shape (c,)
    std: np.ndarray  # shape (c,), strictly positive when eps > 0

    def __post_init__(self):
        m = _as_f32(self.mean)
        s = _as_f32(self.std)
        if m.ndim != 1 or s.shape != m.shape:
            raise ShapeError("ChannelStats mean/std must be 1-D vectors of equal length")
        m.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "std", s)

    def __len__(self) -> int:
        return self.mean.shape[0]


def channel_stats(f: Tensor4, eps: float = EPS_DEFAULT) -> ChannelStats:
    """Population mean/std per channel; std = sqrt(var + eps).

    Requires n == 1 and a non-empty spatial extent.  Accumulates in float64
    so downstream moment-matching guarantees hold at float32 resolution.
    """
    if f.n != 1:
        raise ShapeError(f"channel_stats requires n == 1, got n = {f.n}")
    if f.h * f.w < 1:
        raise ShapeError("channel_stats requires a non-empty spatial extent")
    if eps < 0:
        raise ShapeError("eps must be non-negative")
    x = f.data[0].reshape(f.c, -1)
    mean = x.mean(axis=1, dtype=np.float64)
    var = x.var(axis=1, dtype=np.float64)
    std = np.sqrt(var + eps)
    return ChannelStats(mean=mean, std=std)


def conv2d(
    x: Tensor4,
    weight: Tensor4,
    bias=None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor4:
    """2-D convolution, NCHW input against OIHW weights, zero padding.

    Per output element the sum is accumulated as: bias term first, then
    in-channel-major, kernel-row, kernel-column.  This is the reference
    summation order for the whole engine.
    """
    xa, wa = x.data, weight.data
    n, c, h, w = xa.shape
    o, ig, kh, kw = wa.shape
    s, p, g = int(stride), int(padding), int(groups)
    if s < 1 or p < 0 or g < 1:
        raise ShapeError(f"conv2d: bad stride/padding/groups ({s}, {p}, {g})")
    if c != ig * g:
        raise ShapeError(f"conv2d: input has {c} channels, weights expect {ig} x {g} groups")
    if o % g:
        raise ShapeError(f"conv2d: {o} output channels not divisible by {g} groups")
    b = None
    if bias is not None:
        b = _as_f32(bias)
        if b.shape != (o,):
            raise ShapeError(f"conv2d: bias shape {b.shape} != ({o},)")
    ho = (h + 2 * p - kh) // s + 1
    wo = (w + 2 * p - kw) // s + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} exceeds padded input {h + 2 * p}x{w + 2 * p}")
    if p:
        xa = np.pad(xa, ((0, 0), (0, 0), (p, p), (p, p)))
    og = o // g
    out = np.empty((n, o, ho, wo), _F32)
    for gi in range(g):
        acc = np.zeros((n, og, ho, wo), _F32)
        if b is not None:
            acc += b[gi * og:(gi + 1) * og].reshape(1, -1, 1, 1)
        wg = wa[gi * og:(gi + 1) * og]
        xg = xa[:, gi * ig:(gi + 1) * ig]
        for i in range(ig):
            xi = xg[:, i]
            for dh in range(kh):
                rows = xi[:, dh:dh + (ho - 1) * s + 1:s]
                for dw in range(kw):
                    patch = rows[:, :, dw:dw + (wo - 1) * s + 1:s]
                    acc += wg[:, i, dh, dw].reshape(1, -1, 1, 1) * patch[:, None]
        out[:, gi * og:(gi + 1) * og] = acc
    return Tensor4(out)


def conv2d_fast(
    x: Tensor4,
    weight: Tensor4,
    bias=None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor4:
    """im2col + matmul convolution.

    Same contract as conv2d but the summation order is whatever BLAS does,
    so results agree with conv2d only to float32 rounding, not bitwise.
    """
    xa, wa = x.data, weight.data
    n, c, h, w = xa.shape
    o, ig, kh, kw = wa.shape
    s, p, g = int(stride), int(padding), int(groups)
    if s < 1 or p < 0 or g < 1:
        raise ShapeError(f"conv2d: bad stride/padding/groups ({s}, {p}, {g})")
    if c != ig * g:
        raise ShapeError(f"conv2d: input has {c} channels, weights expect {ig} x {g} groups")
    if o % g:
        raise ShapeError(f"conv2d: {o} output channels not divisible by {g} groups")
    b = None
    if bias is not None:
        b = _as_f32(bias)
        if b.shape != (o,):
            raise ShapeError(f"conv2d: bias shape {b.shape} != ({o},)")
    ho = (h + 2 * p - kh) // s + 1
    wo = (w + 2 * p - kw) // s + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} exceeds padded input {h + 2 * p}x{w + 2 * p}")
    if p:
        xa = np.pad(xa, ((0, 0), (0, 0), (p, p), (p, p)))
    windows = np.lib.stride_tricks.sliding_window_view(xa, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::s, ::s]  # (n, c, ho, wo, kh, kw)
    og = o // g
    out = np.empty((n, o, ho, wo), _F32)
    for gi in range(g):
        cols = windows[:, gi * ig:(gi + 1) * ig].transpose(0, 2, 3, 1, 4, 5)
        cols = cols.reshape(n * ho * wo, ig * kh * kw)
        wmat = wa[gi * og:(gi + 1) * og].reshape(og, -1)
        res = cols @ wmat.T  # (n*ho*wo, og)
        if b is not None:
            res = res + b[gi * og:(gi + 1) * og]
        out[:, gi * og:(gi + 1) * og] = res.reshape(n, ho, wo, og).transpose(0, 3, 1, 2)
    return Tensor4(out)


def batch_norm(
    x: Tensor4,
    gamma,
    beta,
    running_mean,
    running_var,
    eps: float = EPS_DEFAULT,
) -> Tensor4:
    """Inference-mode batch norm: gamma * (x - mean) / sqrt(var + eps) + beta."""
    xa = x.data
    c = xa.shape[1]
    ga, be, rm, rv = (_as_f32(v) for v in (gamma, beta, running_mean, running_var))
    for name, v in (("gamma", ga), ("beta", be), ("mean", rm), ("var", rv)):
        if v.shape != (c,):
            raise ShapeError(f"batch_norm: {name} shape {v.shape} != ({c},)")
    if np.any(rv < 0):
        raise ShapeError("batch_norm: negative running variance")
    denom = np.sqrt(rv + _F32(eps))
    shape = (1, c, 1, 1)
    y = ga.reshape(shape) * (xa - rm.reshape(shape)) / denom.reshape(shape) + be.reshape(shape)
    return Tensor4(y)


def activation(x: Tensor4, kind: str) -> Tensor4:
    if kind == "relu":
        return Tensor4(np.maximum(x.data, _F32(0)))
    if kind == "relu6":
        return Tensor4(np.minimum(np.maximum(x.data, _F32(0)), _F32(6)))
    raise ShapeError(f"unknown activation kind {kind!r}")


def _pool_out_len(size: int, kernel: int, stride: int, padding: int, ceil_mode: bool) -> int:
    span = size + 2 * padding - kernel
    if span < 0:
        raise ShapeError(f"pool: kernel {kernel} exceeds padded extent {size + 2 * padding}")
    if ceil_mode:
        out = -(-span // stride) + 1
        # last window must start inside the input or its left padding
        if (out - 1) * stride >= size + padding:
            out -= 1
        return out
    return span // stride + 1


def pool(
    x: Tensor4,
    kind: str,
    kernel: int,
    stride: int,
    padding: int = 0,
    ceil_mode: bool = False,
) -> Tensor4:
    """Max or average pooling with square windows.

    Max pooling pads with -inf, so padded and (in ceil mode) clipped windows
    reduce over real elements only.  Average pooling supports neither padding
    nor ceil mode; its window sum runs in kernel-row, kernel-column order.
    """
    xa = x.data
    n, c, h, w = xa.shape
    k, s, p = int(kernel), int(stride), int(padding)
    if k < 1 or s < 1 or p < 0:
        raise ShapeError(f"pool: bad kernel/stride/padding ({k}, {s}, {p})")
    if p > k // 2:
        raise ShapeError(f"pool: padding {p} larger than half the kernel {k}")
    if kind == "avg":
        if p or ceil_mode:
            raise ShapeError("avg pooling supports neither padding nor ceil mode")
        ho = _pool_out_len(h, k, s, 0, False)
        wo = _pool_out_len(w, k, s, 0, False)
        acc = np.zeros((n, c, ho, wo), _F32)
        for dh in range(k):
            rows = xa[:, :, dh:dh + (ho - 1) * s + 1:s]
            for dw in range(k):
                acc += rows[:, :, :, dw:dw + (wo - 1) * s + 1:s]
        acc /= _F32(k * k)
        return Tensor4(acc)
    if kind != "max":
        raise ShapeError(f"unknown pool kind {kind!r}")
    ho = _pool_out_len(h, k, s, p, ceil_mode)
    wo = _pool_out_len(w, k, s, p, ceil_mode)
    pad_h = max((ho - 1) * s + k - h - p, 0)
    pad_w = max((wo - 1) * s + k - w - p, 0)
    if p or pad_h or pad_w:
        xa = np.pad(xa, ((0, 0), (0, 0), (p, pad_h), (p, pad_w)), constant_values=-np.inf)
    out = None
    for dh in range(k):
        rows = xa[:, :, dh:dh + (ho - 1) * s + 1:s]
        for dw in range(k):
            win = rows[:, :, :, dw:dw + (wo - 1) * s + 1:s]
            out = win.copy() if out is None else np.maximum(out, win, out=out)
    return Tensor4(out)


def upsample_nearest(x: Tensor4, factor: int) -> Tensor4:
    f = int(factor)
    if f < 1:
        raise ShapeError(f"upsample: factor must be >= 1, got {f}")
    return Tensor4(np.repeat(np.repeat(x.data, f, axis=2), f, axis=3))


def concat_channels(xs: list[Tensor4]) -> Tensor4:
    if not xs:
        raise ShapeError("concat: need at least one input")
    n, _, h, w = xs[0].shape
    for i, t in enumerate(xs):
        if (t.n, t.h, t.w) != (n, h, w):
            raise ShapeError(
                f"concat: input {i} has (n, h, w) = {(t.n, t.h, t.w)}, expected {(n, h, w)}"
            )
    return Tensor4(np.concatenate([t.data for t in xs], axis=1))


def add(x: Tensor4, y: Tensor4) -> Tensor4:
    if x.shape != y.shape:
        raise ShapeError(f"add: shape mismatch {x.shape} vs {y.shape}")
    return Tensor4(x.data + y.data)
