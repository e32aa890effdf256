"""Exporter CLI.

    faststyle-export googlenet -o models/googlenet --weights imagenet --parity 5
    faststyle-export mobilenet_v2 -o models/mbv2 --weights random --seed 0

Pretrained checkpoints come from the torchvision model zoo and need network
access; `--weights random` exports a freshly initialized model, which is
enough for parity and format checks.  `--report-sizes` prints parameter
counts both for the exported trunk and for the full classifier-free network
in 4-byte-float megabytes.
"""

from __future__ import annotations

import argparse
import sys

from .convert import ExportSpec, build_and_convert, classifier_free_param_count
from .emit import ExportError


def _exported_param_count(writer) -> int:
    import json

    manifest, _ = writer.finish([])  # counts only; outputs irrelevant
    doc = json.loads(manifest)
    total = 0
    for node in doc["nodes"]:
        for blob in node["params"].values():
            n = 1
            for v in blob["shape"]:
                n *= v
            total += n
    return total


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="faststyle-export", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("arch", choices=("googlenet", "mobilenet_v2"))
    ap.add_argument("-o", "--output", required=True, help="model directory to write")
    ap.add_argument("--weights", choices=("random", "imagenet"), default="random")
    ap.add_argument("--seed", type=int, default=0, help="init seed for --weights random")
    ap.add_argument("--size", default="224x224", help="declared input size")
    ap.add_argument("--parity", type=int, default=0, metavar="N",
                    help="verify the export against the torch forward on N random inputs")
    ap.add_argument("--report-sizes", action="store_true",
                    help="print exported and classifier-free parameter sizes")
    args = ap.parse_args(argv)

    h, w = (int(v) for v in args.size.lower().split("x"))
    spec = ExportSpec(arch=args.arch, input_hw=(h, w), weights=args.weights, seed=args.seed)
    try:
        model, writer, outputs = build_and_convert(spec)
    except ExportError as exc:
        print(f"faststyle-export: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # checkpoint download failures land here
        print(f"faststyle-export: error: could not obtain {args.weights} weights: {exc}",
              file=sys.stderr)
        return 2
    writer.write_dir(args.output, outputs)
    print(f"exported {args.arch} ({args.weights}) to {args.output}; taps: {', '.join(outputs)}")

    if args.report_sizes:
        prefix = _exported_param_count(writer)
        full = classifier_free_param_count(model)
        print(f"  exported trunk params: {prefix} ({4 * prefix / 1e6:.2f} MB, 4-byte floats)")
        print(f"  classifier-free network params: {full} ({4 * full / 1e6:.2f} MB)")

    if args.parity:
        from .parity import check_parity

        dev = check_parity(args.output, model, spec, inputs=args.parity)
        status = "ok" if dev <= 1e-3 else "EXCEEDS 1e-3"
        print(f"  parity: max |engine - torch| = {dev:.3e} over {args.parity} inputs ({status})")
        if dev > 1e-3:
            return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
