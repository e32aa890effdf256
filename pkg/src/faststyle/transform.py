"""Feature transfer: normalize/colorize, AdaIN, patch swap, and the
AdaIN-swap-AdaIN cascade, plus multi-block feature aggregation.

The swap replaces every content patch with the style patch of highest
normalized cross-correlation and rebuilds the map by averaging overlapping
contributions.  The cascade runs the swap in the style feature's space (a
prior AdaIN) and realigns channel statistics afterwards (a posterior AdaIN),
so output means and stds match the style feature by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import EPS_DEFAULT, ChannelStats, ShapeError, Tensor4, channel_stats, pool

MODES = ("adain", "swap", "s2", "adain_swap", "swap_adain")


@dataclass(frozen=True)
class TransferConfig:
    patch_size: int = 3
    patch_stride: int = 1
    eps: float = EPS_DEFAULT
    mode: str = "s2"
    blend_alpha: float = 1.0

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")
        if not 1 <= self.patch_stride <= self.patch_size:
            raise ValueError(
                f"patch_stride must be in [1, patch_size], got {self.patch_stride}"
            )
        if not 0.0 <= self.blend_alpha <= 1.0:
            raise ValueError(f"blend_alpha must be in [0, 1], got {self.blend_alpha}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


def normalize(f: Tensor4, eps: float = EPS_DEFAULT) -> tuple[Tensor4, ChannelStats]:
    """Remove per-channel mean/std; returns the whitened map and the stats."""
    stats = channel_stats(f, eps)
    c = f.c
    out = (f.data - stats.mean.reshape(1, c, 1, 1)) / stats.std.reshape(1, c, 1, 1)
    return Tensor4(out), stats


def colorize(f_norm: Tensor4, target: ChannelStats) -> Tensor4:
    """Rescale and shift a whitened map to the target per-channel stats."""
    if f_norm.c != len(target):
        raise ShapeError(
            f"colorize: feature has {f_norm.c} channels, stats have {len(target)}"
        )
    c = f_norm.c
    out = f_norm.data * target.std.reshape(1, c, 1, 1) + target.mean.reshape(1, c, 1, 1)
    return Tensor4(out)


def adain(f_c: Tensor4, f_s: Tensor4, eps: float = EPS_DEFAULT) -> Tensor4:
    """Match the content feature's per-channel mean/std to the style's."""
    if f_c.c != f_s.c:
        raise ShapeError(f"adain: channel mismatch {f_c.c} vs {f_s.c}")
    norm, _ = normalize(f_c, eps)
    return colorize(norm, channel_stats(f_s, eps))


def _patch_starts(size: int, patch: int, stride: int) -> np.ndarray:
    """Strided start offsets, extended so the last patch touches the border."""
    starts = list(range(0, size - patch + 1, stride))
    if starts[-1] != size - patch:
        starts.append(size - patch)
    return np.asarray(starts)


def _extract_patches(f: Tensor4, patch: int, stride: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(patches, ys, xs): row-major patch matrix of shape (N, c*patch*patch)."""
    c, h, w = f.c, f.h, f.w
    ys = _patch_starts(h, patch, stride)
    xs = _patch_starts(w, patch, stride)
    windows = np.lib.stride_tricks.sliding_window_view(f.data[0], (patch, patch), axis=(1, 2))
    grid = windows[:, ys][:, :, xs]  # (c, ny, nx, patch, patch)
    mat = grid.transpose(1, 2, 0, 3, 4).reshape(len(ys) * len(xs), c * patch * patch)
    return np.ascontiguousarray(mat), ys, xs


def _match_patches(f_c, f_s, k, s, eps):
    """Best style patch per content location; ties go to the lowest index."""
    if f_c.n != 1 or f_s.n != 1:
        raise ShapeError("style_swap requires n == 1 features")
    if f_c.c != f_s.c:
        raise ShapeError(f"style_swap: channel mismatch {f_c.c} vs {f_s.c}")
    if not 1 <= s <= k:
        raise ShapeError(f"style_swap: stride must be in [1, patch_size], got {s}")
    if min(f_c.h, f_c.w, f_s.h, f_s.w) < k:
        raise ShapeError(
            f"style_swap: patch {k} exceeds a feature map "
            f"({f_c.h}x{f_c.w} content, {f_s.h}x{f_s.w} style)"
        )
    style_patches, _, _ = _extract_patches(f_s, k, s)
    content_patches, ys, xs = _extract_patches(f_c, k, s)
    norms = np.sqrt((style_patches.astype(np.float64) ** 2).sum(axis=1))
    norms = np.maximum(norms, eps).astype(np.float32)
    scores = content_patches @ (style_patches / norms[:, None]).T
    best = np.argmax(scores, axis=1)  # first index wins ties
    return best, style_patches, ys, xs


def swap_selections(
    f_c: Tensor4,
    f_s: Tensor4,
    patch_size: int = 3,
    patch_stride: int = 1,
    eps: float = EPS_DEFAULT,
) -> np.ndarray:
    """The style-patch index chosen for each content location, row-major.

    This is exactly the selection table style_swap reconstructs from.
    """
    best, _, ys, xs = _match_patches(f_c, f_s, int(patch_size), int(patch_stride), eps)
    return best.reshape(len(ys), len(xs))


def style_swap(
    f_c: Tensor4,
    f_s: Tensor4,
    patch_size: int = 3,
    patch_stride: int = 1,
    eps: float = EPS_DEFAULT,
) -> Tensor4:
    """Replace each content patch with the best-matching style patch.

    Matching maximizes <p_c, p_s/max(|p_s|, eps)>; content patches stay
    unnormalized, which leaves the per-location argmax unchanged.  Ties go to
    the lowest style-patch index.  Output pixels average every overlapping
    selected patch and the spatial size equals the content feature's.
    """
    k, s = int(patch_size), int(patch_stride)
    best, style_patches, ys, xs = _match_patches(f_c, f_s, k, s, eps)

    c = f_c.c
    out = np.zeros((c, f_c.h, f_c.w), np.float32)
    cover = np.zeros((f_c.h, f_c.w), np.float32)
    chosen = style_patches[best].reshape(-1, c, k, k)
    loc = 0
    for y in ys:
        for x in xs:
            out[:, y:y + k, x:x + k] += chosen[loc]
            cover[y:y + k, x:x + k] += 1.0
            loc += 1
    out /= cover
    return Tensor4(out[None])


def sandwich_swap(f_c: Tensor4, f_s: Tensor4, cfg: TransferConfig) -> Tensor4:
    """AdaIN, then patch swap in the style feature's space, then AdaIN again.

    The final stats match the style feature; with blend_alpha < 1 the result
    is mixed back toward the content feature (equal spatial sizes required).
    """
    projected = adain(f_c, f_s, cfg.eps)
    swapped = style_swap(projected, f_s, cfg.patch_size, cfg.patch_stride, cfg.eps)
    out = adain(swapped, f_s, cfg.eps)
    return _blend(out, f_c, cfg.blend_alpha)


def _blend(out: Tensor4, f_c: Tensor4, alpha: float) -> Tensor4:
    if alpha >= 1.0:
        return out
    if out.shape != f_c.shape:
        raise ShapeError(
            f"blending needs equal shapes, got {out.shape} vs {f_c.shape}"
        )
    a = np.float32(alpha)
    return Tensor4(a * out.data + (np.float32(1) - a) * f_c.data)


def transfer(f_c: Tensor4, f_s: Tensor4, cfg: TransferConfig) -> Tensor4:
    """Dispatch one of the transfer arms (full cascade or an ablation)."""
    if cfg.mode == "s2":
        return sandwich_swap(f_c, f_s, cfg)
    if cfg.mode == "adain":
        out = adain(f_c, f_s, cfg.eps)
    elif cfg.mode == "swap":
        out = style_swap(f_c, f_s, cfg.patch_size, cfg.patch_stride, cfg.eps)
    elif cfg.mode == "adain_swap":
        out = style_swap(adain(f_c, f_s, cfg.eps), f_s, cfg.patch_size, cfg.patch_stride, cfg.eps)
    elif cfg.mode == "swap_adain":
        out = adain(style_swap(f_c, f_s, cfg.patch_size, cfg.patch_stride, cfg.eps), f_s, cfg.eps)
    else:  # pragma: no cover - TransferConfig already validated
        raise ValueError(f"unknown mode {cfg.mode!r}")
    return _blend(out, f_c, cfg.blend_alpha)


@dataclass(frozen=True)
class AggregateLayout:
    """Where each block landed in the aggregate: (start, stop, source hw)."""

    ranges: tuple[tuple[int, int, tuple[int, int]], ...]


def aggregate_features(taps: list[Tensor4], target_hw: tuple[int, int]) -> tuple[Tensor4, AggregateLayout]:
    """Average-pool every tap to target_hw and concatenate along channels."""
    if not taps:
        raise ShapeError("aggregate_features needs at least one tap")
    th, tw = target_hw
    pooled = []
    ranges = []
    start = 0
    for i, t in enumerate(taps):
        if t.h % th or t.w % tw:
            raise ShapeError(
                f"tap {i} size {t.h}x{t.w} is not an integer multiple of target {th}x{tw}"
            )
        rh, rw = t.h // th, t.w // tw
        if rh != rw:
            raise ShapeError(f"tap {i} pooling ratio differs per axis: {rh} vs {rw}")
        p = t if rh == 1 else pool(t, "avg", kernel=rh, stride=rh)
        pooled.append(p.data)
        ranges.append((start, start + t.c, (t.h, t.w)))
        start += t.c
    agg = Tensor4(np.concatenate(pooled, axis=1))
    return agg, AggregateLayout(tuple(ranges))


def split_aggregate(f: Tensor4, layout: AggregateLayout) -> list[Tensor4]:
    """Invert the channel concatenation (the pooling is not undone)."""
    stop = layout.ranges[-1][1]
    if f.c != stop:
        raise ShapeError(f"aggregate has {f.c} channels, layout expects {stop}")
    return [Tensor4(f.data[:, a:b]) for a, b, _ in layout.ranges]
