#!/usr/bin/env python3
"""Prune a model against calibration images and report the paired speedup.

    python3 scripts/make_fixtures.py --out fixtures
    python3 scripts/prune_speedup.py --model fixtures/model --calib fixtures/calib

Prints the channel/parameter/FLOP accounting, the measured single-threaded
timings before and after pruning on this machine, and the equivalence
deviation on held-out inputs.
"""

import argparse
from pathlib import Path

import numpy as np

from faststyle import (
    Tensor4,
    benchmark,
    load_model_dir,
    prune_graph,
    read_image,
)


def mb(params):
    return 4 * params / 1e6  # float32 megabytes


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", required=True)
    ap.add_argument("--calib", required=True)
    ap.add_argument("--size", default=None, help="bench input, e.g. 64x64 (default: declared)")
    ap.add_argument("--iters", type=int, default=7)
    ap.add_argument("--holdout", type=int, default=20)
    args = ap.parse_args()

    g = load_model_dir(args.model)
    calib = [read_image(p) for p in sorted(Path(args.calib).iterdir())
             if p.suffix.lower() in (".ppm", ".png")]
    rng = np.random.default_rng(0)
    held_out = [Tensor4(rng.random(g.input_shape, dtype=np.float32))
                for _ in range(args.holdout)]
    pruned, report = prune_graph(g, calib, tau=0.0, verify_inputs=held_out)
    print(report.to_text())
    print(f"  size: {mb(report.params_before):.3f} MB -> {mb(report.params_after):.3f} MB "
          "(4-byte floats)")

    if args.size:
        h, w = (int(v) for v in args.size.lower().split("x"))
        shape = (1, g.input_shape[1], h, w)
    else:
        shape = g.input_shape
    base = benchmark(g, shape, iters=args.iters, warmup=1)
    fast = benchmark(pruned, shape, iters=args.iters, warmup=1)
    print(f"\nunpruned: {base.to_text()}")
    print(f"\npruned:   {fast.to_text()}")
    print(f"\nspeedup (median, paired single-threaded): x{base.median_s / fast.median_s:.2f}")


if __name__ == "__main__":
    main()
