"""Image-to-image stylization: encoder taps -> aggregate -> transfer ->
bottleneck slice -> decoder, plus PPM/PNG image I/O.

Binary PPM (P6, maxval 255) is the native format; PNG and other 8-bit RGB
formats go through Pillow under the same read/write contract.  Images are
(1, 3, h, w) tensors in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, execute, infer_shapes
from .tensor import ShapeError, Tensor4
from .transform import TransferConfig, aggregate_features, split_aggregate, transfer


class ImageError(ValueError):
    """File is not a readable 8-bit RGB image."""


class PipelineError(ValueError):
    """Stylization job is inconsistent (sizes, tap list, decoder width)."""


def _read_ppm(raw: bytes, path) -> np.ndarray:
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(raw):
            if raw[pos:pos + 1].isspace():
                pos += 1
            elif raw[pos:pos + 1] == b"#":
                while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageError(f"{path}: truncated PPM header")
        return raw[start:pos]

    if token() != b"P6":
        raise ImageError(f"{path}: not a binary PPM (P6) file")
    try:
        w, h, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise ImageError(f"{path}: malformed PPM header") from exc
    if maxval != 255:
        raise ImageError(f"{path}: PPM maxval must be 255, got {maxval}")
    pos += 1  # single whitespace after maxval
    pixels = raw[pos:pos + 3 * w * h]
    if len(pixels) != 3 * w * h:
        raise ImageError(f"{path}: PPM pixel data truncated")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3)


def read_image(path) -> Tensor4:
    """Load an 8-bit RGB image as a (1, 3, h, w) tensor scaled to [0, 1]."""
    p = Path(path)
    if p.suffix.lower() == ".ppm":
        arr = _read_ppm(p.read_bytes(), p)
    else:
        from PIL import Image

        with Image.open(p) as im:
            if im.mode != "RGB":
                raise ImageError(f"{p}: expected an RGB image, got mode {im.mode!r}")
            arr = np.asarray(im, dtype=np.uint8)
    chw = arr.astype(np.float32).transpose(2, 0, 1) / np.float32(255)
    return Tensor4(chw[None])


def write_image(t: Tensor4, path) -> None:
    """Clamp to [0, 1], quantize round-to-nearest, write PPM or PNG."""
    if t.n != 1 or t.c != 3:
        raise ImageError(f"images are (1, 3, h, w) tensors, got {t.shape}")
    q = np.rint(np.clip(t.data[0], 0.0, 1.0) * 255.0).astype(np.uint8)
    hwc = q.transpose(1, 2, 0)
    p = Path(path)
    if p.suffix.lower() == ".ppm":
        header = f"P6\n{t.w} {t.h}\n255\n".encode()
        p.write_bytes(header + hwc.tobytes())
    else:
        from PIL import Image

        Image.fromarray(hwc, mode="RGB").save(p)


def encoder_stride(g: Graph, taps: tuple[str, ...]) -> tuple[int, int]:
    """Total downsampling factor from image to the deepest tap."""
    shapes = infer_shapes(g)
    for t in taps:
        if t not in shapes:
            raise PipelineError(f"tap {t!r} does not exist in the encoder")
    _, _, h0, w0 = g.input_shape
    _, _, hb, wb = shapes[taps[-1]]
    if h0 % hb or w0 % wb:
        raise PipelineError(
            f"deepest tap shape {hb}x{wb} does not evenly divide the declared input {h0}x{w0}"
        )
    return h0 // hb, w0 // wb


def encode(g: Graph, img: Tensor4, taps: tuple[str, ...], fast: bool = False) -> list[Tensor4]:
    """Tap features for one image; dimensions must divide the total stride."""
    if not taps:
        raise PipelineError("encode needs at least one tap")
    sh, sw = encoder_stride(g, tuple(taps))
    if img.h % sh or img.w % sw:
        raise PipelineError(
            f"image size {img.h}x{img.w} is not divisible by the encoder stride; "
            f"height must be a multiple of {sh} and width a multiple of {sw}"
        )
    outs = execute(g, img, taps=tuple(taps), fast=fast)
    return [outs[t] for t in taps]


@dataclass
class StyleJob:
    content_image: Tensor4
    style_image: Tensor4
    encoder: Graph
    decoder: Graph
    taps: tuple[str, ...]
    cfg: TransferConfig

    def __post_init__(self):
        self.taps = tuple(self.taps)


def stylize(job: StyleJob, fast: bool = False) -> Tensor4:
    """Run the full transfer; the output has the content image's dimensions.

    Both images are encoded with the same encoder, all tap features are
    pooled to each image's bottleneck size and concatenated, the configured
    transfer arm runs on the aggregates, and the decoder consumes the
    bottleneck slice of the result.
    """
    c_feats = encode(job.encoder, job.content_image, job.taps, fast=fast)
    s_feats = encode(job.encoder, job.style_image, job.taps, fast=fast)
    bottleneck_c = c_feats[-1]
    bottleneck_s = s_feats[-1]
    agg_c, layout = aggregate_features(c_feats, (bottleneck_c.h, bottleneck_c.w))
    agg_s, _ = aggregate_features(s_feats, (bottleneck_s.h, bottleneck_s.w))

    transferred = transfer(agg_c, agg_s, job.cfg)
    slices = split_aggregate(transferred, layout)
    bottleneck = slices[-1]

    dec_channels = job.decoder.input_shape[1]
    if bottleneck.c != dec_channels:
        raise PipelineError(
            f"decoder expects {dec_channels} input channels, "
            f"bottleneck slice has {bottleneck.c}"
        )
    try:
        out = execute(job.decoder, bottleneck, fast=fast)[job.decoder.outputs[0]]
    except ShapeError as exc:
        raise PipelineError(f"decoder failed: {exc}") from exc
    if out.shape != job.content_image.shape:
        raise PipelineError(
            f"decoder produced {out.shape}, content image is {job.content_image.shape}"
        )
    return out
