"""Command-line surface: inspect, prune, stylize, bench, metrics.

Exit codes: 0 success, 2 usage error, 3 missing or unreadable input file,
4 invalid model file, 5 engine error (shapes, failed verification), 6 out
of memory.  Errors print a single machine-parsable line on stderr:
``faststyle: error: <category>: <message>``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .graph import Graph, GraphError, count_flops, count_params, execute, infer_shapes
from .metrics import benchmark, edge_ssim, gram, gram_distance
from .model_io import ModelFormatError, load_model_dir, save_model_dir
from .pipeline import ImageError, PipelineError, StyleJob, read_image, stylize, write_image
from .prune import PruneError, apply_prune, detect_zero_channels, propagate_masks, verify_equivalence
from .tensor import ShapeError, Tensor4
from .transform import MODES, TransferConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FILE = 3
EXIT_MODEL = 4
EXIT_ENGINE = 5
EXIT_MEMORY = 6

_EPILOG = """\
exit codes:
  0  success
  2  usage error (unknown flag or subcommand)
  3  missing or unreadable input file
  4  invalid model file (manifest or weights)
  5  engine error (shape mismatch, failed verification)
  6  out of memory
"""


class CliError(Exception):
    def __init__(self, code: int, category: str, message: str):
        super().__init__(message)
        self.code = code
        self.category = category


def _load_model(path: str) -> Graph:
    d = Path(path)
    try:
        return load_model_dir(d)
    except FileNotFoundError as exc:
        raise CliError(EXIT_FILE, "file", f"{exc.filename}: not found")
    except OSError as exc:
        raise CliError(EXIT_FILE, "file", str(exc))
    except (ModelFormatError, GraphError) as exc:
        raise CliError(EXIT_MODEL, "model", f"{d}: {exc}")


def _load_image(path: str) -> Tensor4:
    try:
        return read_image(path)
    except FileNotFoundError:
        raise CliError(EXIT_FILE, "file", f"{path}: not found")
    except OSError as exc:
        raise CliError(EXIT_FILE, "file", f"{path}: {exc}")
    except ImageError as exc:
        raise CliError(EXIT_FILE, "file", str(exc))


def _load_calibration(directory: str) -> list[Tensor4]:
    d = Path(directory)
    if not d.is_dir():
        raise CliError(EXIT_FILE, "file", f"{directory}: not a directory")
    paths = sorted(p for p in d.iterdir() if p.suffix.lower() in (".ppm", ".png"))
    if not paths:
        raise CliError(EXIT_FILE, "file", f"{directory}: no .ppm or .png calibration images")
    return [_load_image(str(p)) for p in paths]


def _held_out_inputs(g: Graph, count: int, seed: int) -> list[Tensor4]:
    rng = np.random.default_rng(seed)
    shape = g.input_shape
    return [Tensor4(rng.random(shape, dtype=np.float32)) for _ in range(count)]


def cmd_inspect(args) -> int:
    g = _load_model(args.model)
    calib = _load_calibration(args.calib)
    masks = detect_zero_channels(g, calib, tau=args.tau)
    shapes = infer_shapes(g)
    total = 0
    dead = 0
    print(f"model: {args.model}")
    print(f"  nodes: {len(g.nodes)}, params: {count_params(g)}, "
          f"flops@{'x'.join(str(v) for v in g.input_shape)}: {count_flops(g)}")
    print(f"  calibration images: {len(calib)}, tau: {args.tau:g}")
    for m in masks:
        c = shapes[m.node_id][1]
        total += c
        dead += m.pruned
        flag = f"  {m.node_id}: {m.pruned}/{c} zero channels"
        print(flag)
    pct = 100.0 * dead / total if total else 0.0
    print(f"  zero channels: {dead} of {total} ({pct:.1f}%)")
    return EXIT_OK


def cmd_prune(args) -> int:
    g = _load_model(args.model)
    calib = _load_calibration(args.calib)
    try:
        masks = detect_zero_channels(g, calib, tau=args.tau)
        plan = propagate_masks(g, masks)
        pruned, report = apply_prune(g, plan)
    except (PruneError, GraphError, ShapeError) as exc:
        raise CliError(EXIT_ENGINE, "engine", str(exc))
    verify = args.verify or args.tau > 0  # lossy thresholds always get verified
    warning = None
    failed = False
    if verify:
        held_out = _held_out_inputs(g, args.holdout, args.seed)
        eq_calib = verify_equivalence(g, pruned, calib, tol=args.tol)
        eq_held = verify_equivalence(g, pruned, held_out, tol=args.tol)
        report.max_deviation = max(eq_calib.max_deviation, eq_held.max_deviation)
        report.deviation_tol = args.tol
        report.deviation_inputs = eq_calib.inputs_checked + eq_held.inputs_checked
        failed = report.max_deviation > args.tol
        if eq_calib.passed and not eq_held.passed:
            warning = (
                f"warning: held-out deviation {eq_held.max_deviation:.3e} exceeds "
                f"tol {args.tol:g} although calibration inputs pass; the zero "
                f"channels are not data-agnostic at tau={args.tau:g}"
            )
    save_model_dir(pruned, args.output)
    text = report.to_text()
    (Path(args.output) / "prune_report.txt").write_text(text + "\n")
    print(text)
    if warning:
        print(warning, file=sys.stderr)
    if failed:
        raise CliError(
            EXIT_ENGINE,
            "engine",
            f"verification failed: max deviation {report.max_deviation:.3e} > tol {args.tol:g}",
        )
    return EXIT_OK


def cmd_stylize(args) -> int:
    encoder = _load_model(args.encoder)
    decoder = _load_model(args.decoder)
    content = _load_image(args.content)
    style = _load_image(args.style)
    taps = tuple(encoder.outputs)
    cfg = TransferConfig(
        mode=args.transform,
        patch_size=args.patch_size,
        patch_stride=args.patch_stride,
        blend_alpha=args.alpha,
    )
    try:
        out = stylize(StyleJob(content, style, encoder, decoder, taps, cfg))
    except (PipelineError, GraphError, ShapeError) as exc:
        raise CliError(EXIT_ENGINE, "engine", str(exc))
    write_image(out, args.output)
    print(f"wrote {args.output} ({out.w}x{out.h}, transform={args.transform})")
    return EXIT_OK


def cmd_bench(args) -> int:
    g = _load_model(args.model)
    try:
        h, w = (int(v) for v in args.size.lower().split("x"))
    except ValueError:
        raise CliError(EXIT_USAGE, "usage", f"--size must look like 512x512, got {args.size!r}")
    shape = (1, g.input_shape[1], h, w)
    try:
        res = benchmark(g, shape, iters=args.iters, warmup=args.warmup,
                        fixed_input=args.fixed_input, fast=args.parallel, seed=args.seed)
    except (GraphError, ShapeError, ValueError) as exc:
        raise CliError(EXIT_ENGINE, "engine", str(exc))
    print(res.to_text())
    return EXIT_OK


def cmd_metrics(args) -> int:
    a = _load_image(args.a)
    b = _load_image(args.b)
    try:
        score = edge_ssim(a, b)
    except ShapeError as exc:
        raise CliError(EXIT_ENGINE, "engine", str(exc))
    print(f"edge-ssim (sobel): {score:.4f}")
    if args.features:
        g = _load_model(args.features)
        try:
            fa = execute(g, a)[g.outputs[-1]]
            fb = execute(g, b)[g.outputs[-1]]
            dist = gram_distance(gram(fa), gram(fb))
        except (GraphError, ShapeError) as exc:
            raise CliError(EXIT_ENGINE, "engine", str(exc))
        print(f"gram-distance ({g.outputs[-1]}): {dist:.6e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faststyle",
        description="Convolutional inference, zero-channel pruning, and style transfer.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="report zero channels, params and FLOPs")
    p.add_argument("model", help="model directory (model.json + weights.bin)")
    p.add_argument("--calib", required=True, help="directory of calibration images")
    p.add_argument("--tau", type=float, default=0.0, help="zero-detection threshold (default 0)")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("prune", help="remove zero channels and write a new model")
    p.add_argument("model")
    p.add_argument("--calib", required=True)
    p.add_argument("-o", "--output", required=True, help="output model directory")
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--verify", action="store_true",
                   help="check pruned-vs-original deviation (forced when tau > 0)")
    p.add_argument("--tol", type=float, default=1e-5, help="verification tolerance")
    p.add_argument("--holdout", type=int, default=20,
                   help="number of random held-out verification inputs")
    p.add_argument("--seed", type=int, default=0, help="seed for held-out inputs")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("stylize", help="transfer the style of one image onto another")
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--encoder", required=True, help="encoder model directory")
    p.add_argument("--decoder", required=True, help="decoder model directory")
    p.add_argument("-o", "--output", required=True, help="output image path")
    p.add_argument("--transform", choices=MODES, default="s2")
    p.add_argument("--patch-size", type=int, default=3)
    p.add_argument("--patch-stride", type=int, default=1)
    p.add_argument("--alpha", type=float, default=1.0, help="style blend fraction")
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("bench", help="time graph execution")
    p.add_argument("model")
    p.add_argument("--size", required=True, help="input size, e.g. 512x512")
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("--fixed-input", action="store_true", help="reuse one input across runs")
    p.add_argument("--parallel", action="store_true",
                   help="BLAS-backed kernels (may use multiple threads)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("metrics", help="edge-SSIM (and Gram distance) between two images")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--features", help="model directory for Gram-distance features")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"faststyle: error: {exc.category}: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"faststyle: error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MemoryError:
        print("faststyle: error: memory: out of memory", file=sys.stderr)
        return EXIT_MEMORY


if __name__ == "__main__":
    sys.exit(main())
