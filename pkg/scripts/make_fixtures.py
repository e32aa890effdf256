#!/usr/bin/env python3
"""Generate demo fixtures: a dead-channel model, a toy autoencoder, and
sample images, laid out for the faststyle CLI.

    python3 scripts/make_fixtures.py --out fixtures

Produces fixtures/model, fixtures/encoder, fixtures/decoder, fixtures/calib/*
and two demo images.  The model has zero channels baked in, so
`faststyle inspect`/`prune` have something to find.
"""

import argparse
from pathlib import Path

import numpy as np

from faststyle import GraphBuilder, Tensor4, save_model_dir, write_image

RNG = np.random.default_rng(2024)


def w_init(cout, cin, k):
    return (RNG.standard_normal((cout, cin, k, k)) / np.sqrt(cin * k * k)).astype(np.float32)


def conv_bn_relu(gb, name, src, cin, cout, k=3, dead=()):
    w = w_init(cout, cin, k)
    dead = list(dead)
    w[dead] = 0.0
    c = gb.conv2d(f"{name}.conv", src, w, padding=k // 2)
    gamma = np.ones(cout, np.float32)
    beta = RNG.uniform(0.2, 0.6, cout).astype(np.float32)
    beta[dead] = -1.0
    b = gb.batch_norm(f"{name}.bn", c, gamma, beta,
                      np.zeros(cout, np.float32), np.ones(cout, np.float32))
    return gb.relu(f"{name}.relu", b)


def demo_model():
    """Small conv net with dead channels in every block."""
    gb = GraphBuilder(input_shape=(1, 3, 64, 64))
    r1 = conv_bn_relu(gb, "b1", "image", 3, 16, dead=[1, 4, 9, 13])
    p1 = gb.maxpool("pool1", r1, kernel=2, stride=2)
    r2 = conv_bn_relu(gb, "b2", p1, 16, 32, dead=[0, 3, 7, 12, 20, 26, 31])
    r3 = conv_bn_relu(gb, "b3", r2, 32, 32, dead=[5, 11, 17])
    head = gb.conv2d("head", r3, w_init(8, 32, 1), bias=np.zeros(8, np.float32))
    return gb.graph([head])


def toy_autoencoder():
    gb = GraphBuilder(input_shape=(1, 3, 64, 64))
    r1 = conv_bn_relu(gb, "b1a", "image", 3, 8, dead=[2])
    r1b = conv_bn_relu(gb, "b1b", r1, 8, 8)
    p1 = gb.avgpool("pool1", r1b, kernel=2, stride=2)
    r2 = conv_bn_relu(gb, "b2a", p1, 8, 12, dead=[4, 8])
    r2b = conv_bn_relu(gb, "b2b", r2, 12, 16)
    encoder = gb.graph([r1b, r2b])

    db = GraphBuilder(input_id="feature", input_shape=(1, 16, 32, 32))
    d1 = db.conv2d("d1.conv", "feature", w_init(8, 16, 3), padding=1)
    d1r = db.relu("d1.relu", d1)
    up = db.upsample("up", d1r, factor=2)
    d2 = db.conv2d("d2.conv", up, w_init(3, 8, 3), bias=np.full(3, 0.5, np.float32), padding=1)
    decoder = db.graph([d2])
    return encoder, decoder


def gradient_image(h=64, w=64):
    y, x = np.mgrid[0:h, 0:w].astype(np.float32)
    img = np.stack([x / (w - 1), y / (h - 1), (x + y) / (h + w - 2)])
    return Tensor4(img[None])


def blob_image(h=64, w=64, blobs=6):
    img = np.zeros((3, h, w), np.float32)
    for _ in range(blobs):
        cy, cx = RNG.uniform(0, h), RNG.uniform(0, w)
        colour = RNG.uniform(0.2, 1.0, 3).astype(np.float32)
        y, x = np.mgrid[0:h, 0:w]
        mask = np.exp(-(((y - cy) ** 2 + (x - cx) ** 2) / RNG.uniform(40, 160))).astype(np.float32)
        img += colour[:, None, None] * mask
    return Tensor4(np.clip(img, 0, 1)[None])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="fixtures", help="output directory")
    args = ap.parse_args()
    out = Path(args.out)
    save_model_dir(demo_model(), out / "model")
    enc, dec = toy_autoencoder()
    save_model_dir(enc, out / "encoder")
    save_model_dir(dec, out / "decoder")
    calib = out / "calib"
    calib.mkdir(parents=True, exist_ok=True)
    for i in range(6):
        write_image(Tensor4(RNG.random((1, 3, 64, 64), dtype=np.float32)), calib / f"noise{i}.ppm")
    write_image(gradient_image(), out / "content.ppm")
    write_image(blob_image(), out / "style.ppm")
    print(f"fixtures written to {out}/ (model, encoder, decoder, calib, content.ppm, style.ppm)")


if __name__ == "__main__":
    main()
