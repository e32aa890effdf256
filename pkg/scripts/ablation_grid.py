#!/usr/bin/env python3
"""Run every transfer arm on one content/style pair and score the results.

    python3 scripts/make_fixtures.py --out fixtures
    python3 scripts/ablation_grid.py --fixtures fixtures --out ablation

Writes one stylized image per arm (adain, swap, adain_swap, swap_adain, s2)
plus the plain reconstruction, and prints edge-SSIM against the content
(structure preservation) and Gram distance against the style (style match)
for each.
"""

import argparse
from pathlib import Path

from faststyle import (
    MODES,
    StyleJob,
    TransferConfig,
    edge_ssim,
    encode,
    execute,
    gram,
    gram_distance,
    load_model_dir,
    read_image,
    stylize,
    write_image,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fixtures", required=True, help="directory from make_fixtures.py")
    ap.add_argument("--out", default="ablation")
    ap.add_argument("--patch-size", type=int, default=3)
    args = ap.parse_args()

    fx = Path(args.fixtures)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    encoder = load_model_dir(fx / "encoder")
    decoder = load_model_dir(fx / "decoder")
    content = read_image(fx / "content.ppm")
    style = read_image(fx / "style.ppm")
    taps = tuple(encoder.outputs)

    style_feature = encode(encoder, style, taps)[-1]
    style_gram = gram(style_feature)

    recon = execute(decoder, encode(encoder, content, taps)[-1])[decoder.outputs[0]]
    write_image(recon, out / "reconstruction.ppm")

    print(f"{'arm':<12} {'edge-ssim(content)':>19} {'gram-dist(style)':>17}")
    for mode in MODES:
        cfg = TransferConfig(mode=mode, patch_size=args.patch_size)
        img = stylize(StyleJob(content, style, encoder, decoder, taps, cfg))
        write_image(img, out / f"{mode}.ppm")
        structure = edge_ssim(img, content)
        out_feature = encode(encoder, img, taps)[-1]
        style_gap = gram_distance(gram(out_feature), style_gram)
        print(f"{mode:<12} {structure:>19.4f} {style_gap:>17.6e}")
    print(f"\nimages written to {out}/")


if __name__ == "__main__":
    main()
