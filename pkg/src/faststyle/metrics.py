"""Evaluation and timing: Gram statistics, edge-map SSIM, and a wall-clock
benchmark for graph execution.

The content-preservation metric is SSIM computed on Sobel gradient-magnitude
maps ("edge-SSIM (Sobel)").  It is a stand-in for learned edge detectors, so
its absolute values are not comparable to published numbers that used one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from statistics import mean, median

import numpy as np

from .graph import Graph, execute, infer_shapes
from .tensor import ShapeError, Tensor4

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)
_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True)
class GramMatrix:
    """C x C channel inner-product matrix; normalized divides by C*H*W."""

    values: np.ndarray
    normalized: bool = True

    @property
    def channels(self) -> int:
        return self.values.shape[0]


def gram(f: Tensor4) -> GramMatrix:
    """G = F F^T / (C*H*W) with F the C x (H*W) unfolding of the feature."""
    if f.n != 1:
        raise ShapeError(f"gram requires n == 1, got n = {f.n}")
    mat = f.data[0].reshape(f.c, -1).astype(np.float64)
    g = mat @ mat.T / float(f.c * f.h * f.w)
    return GramMatrix(values=g)


def gram_distance(a: GramMatrix, b: GramMatrix) -> float:
    """Frobenius norm of the difference."""
    if a.channels != b.channels:
        raise ShapeError(f"gram_distance: channel mismatch {a.channels} vs {b.channels}")
    return float(np.linalg.norm(a.values - b.values))


def _gray(img: Tensor4) -> np.ndarray:
    if img.n != 1 or img.c != 3:
        raise ShapeError(f"expected a (1, 3, h, w) image, got {img.shape}")
    return np.tensordot(_LUMA, img.data[0].astype(np.float64), axes=1)


def _conv2_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape
    windows = np.lib.stride_tricks.sliding_window_view(img, (kh, kw))
    return np.einsum("ijkl,kl->ij", windows, kernel)


def sobel_edges(img: Tensor4) -> np.ndarray:
    """Gradient-magnitude map of the luma channel, interior pixels only."""
    g = _gray(img)
    if g.shape[0] < 3 or g.shape[1] < 3:
        raise ShapeError(f"image {g.shape} too small for a 3x3 Sobel filter")
    gx = _conv2_valid(g, _SOBEL_X)
    gy = _conv2_valid(g, _SOBEL_Y)
    return np.sqrt(gx * gx + gy * gy)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    t = np.lib.stride_tricks.sliding_window_view(img, len(g), axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(t, len(g), axis=1) @ g


def ssim(
    x: np.ndarray,
    y: np.ndarray,
    data_range: float,
    win_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Gaussian-weighted SSIM over all fully interior windows, population
    covariance, averaged to a scalar."""
    if x.shape != y.shape:
        raise ShapeError(f"ssim: size mismatch {x.shape} vs {y.shape}")
    if min(x.shape) < win_size:
        raise ShapeError(f"ssim: inputs {x.shape} smaller than the {win_size}x{win_size} window")
    g = _gaussian_window(win_size, sigma)
    ux = _filter_valid(x, g)
    uy = _filter_valid(y, g)
    vx = _filter_valid(x * x, g) - ux * ux
    vy = _filter_valid(y * y, g) - uy * uy
    cxy = _filter_valid(x * y, g) - ux * uy
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    s = ((2 * ux * uy + c1) * (2 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
    return float(s.mean())


def edge_ssim(a: Tensor4, b: Tensor4) -> float:
    """SSIM between Sobel edge responses of two equally sized RGB images.

    The dynamic range is the observed maximum over both edge maps; two
    edge-free images compare as 1.
    """
    if a.shape != b.shape:
        raise ShapeError(f"edge_ssim: size mismatch {a.shape} vs {b.shape}")
    ea = sobel_edges(a)
    eb = sobel_edges(b)
    rng = float(max(ea.max(), eb.max()))
    if rng == 0.0:
        return 1.0
    return ssim(ea, eb, data_range=rng)


@dataclass(frozen=True)
class BenchResult:
    mean_s: float
    median_s: float
    min_s: float
    runs: int
    warmup: int
    input_shape: tuple[int, int, int, int]
    fixed_input: bool = False
    fast: bool = False

    def to_text(self) -> str:
        n, c, h, w = self.input_shape
        mode = "parallel" if self.fast else "single-threaded deterministic"
        lines = [
            f"benchmark: input {n}x{c}x{h}x{w}, {self.runs} runs, {self.warmup} warmup, {mode} kernels",
            f"  mean:   {self.mean_s:.6f} s",
            f"  median: {self.median_s:.6f} s",
            f"  min:    {self.min_s:.6f} s",
            f"  throughput: {1.0 / self.median_s:.2f} runs/s (median)",
        ]
        if self.fixed_input:
            lines.insert(1, "  input: fixed across runs")
        return "\n".join(lines)


def benchmark(
    g: Graph,
    input_shape: tuple[int, int, int, int],
    iters: int,
    warmup: int = 0,
    fixed_input: bool = False,
    fast: bool = False,
    seed: int = 0,
) -> BenchResult:
    """Time execute() only: input generation, decode and model load are out.

    A fresh random input is drawn per run unless fixed_input is set.
    """
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    infer_shapes(g, input_shape)  # fail fast on an invalid shape
    rng = np.random.default_rng(seed)

    def draw() -> Tensor4:
        return Tensor4(rng.random(input_shape, dtype=np.float32))

    x = draw()
    for _ in range(warmup):
        execute(g, x, fast=fast)
        if not fixed_input:
            x = draw()
    times = []
    for _ in range(iters):
        t0 = time.perf_counter()
        execute(g, x, fast=fast)
        times.append(time.perf_counter() - t0)
        if not fixed_input:
            x = draw()
    return BenchResult(
        mean_s=mean(times),
        median_s=median(times),
        min_s=min(times),
        runs=iters,
        warmup=warmup,
        input_shape=tuple(input_shape),
        fixed_input=fixed_input,
        fast=fast,
    )
