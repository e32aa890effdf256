"""Synthetic graphs shared across the test suite.

Dead channels are injected by zeroing the conv filter and pushing the BN
shift negative, so the relu output of that channel is zero for *every*
input, not just the calibration set.  All other BN layers get running stats
calibrated on probe inputs (like a trained net would have), which keeps the
remaining channels firing; without that, random filters against non-negative
inputs regularly go silent on their own, and tests that expect detection to
recover exactly the injected channels would break.  Builders record the
injected channels per relu id.
"""

import numpy as np

from faststyle import GraphBuilder, Tensor4, execute, infer_shapes


def rand_weight(rng, cout, cin, k):
    scale = 1.0 / np.sqrt(cin * k * k)
    return (rng.standard_normal((cout, cin, k, k)) * scale).astype(np.float32)


def random_images(rng, count, shape=(1, 3, 32, 32), lo=0.0, hi=1.0):
    return [Tensor4(rng.uniform(lo, hi, shape).astype(np.float32)) for _ in range(count)]


def _calibrated_bn_stats(gb, conv_id, cout, probes):
    """Observed mean/var of the conv output over the probe inputs."""
    if not probes:
        return np.zeros(cout, np.float32), np.ones(cout, np.float32)
    partial = gb.graph([conv_id])
    acts = np.concatenate(
        [execute(partial, p)[conv_id].data[0].reshape(cout, -1) for p in probes], axis=1
    )
    mean = acts.mean(axis=1)
    var = np.maximum(acts.var(axis=1), 1e-4)
    return mean.astype(np.float32), var.astype(np.float32)


def conv_bn_relu(gb, rng, name, src, cin, cout, injected, probes=None, k=3, stride=1,
                 padding=None, dead=(), relu6=False):
    """Conv -> BN -> ReLU block; channels in `dead` are provably dead."""
    padding = k // 2 if padding is None else padding
    w = rand_weight(rng, cout, cin, k)
    dead = sorted(int(d) for d in dead)
    w[dead] = 0.0
    conv = gb.conv2d(f"{name}.conv", src, w, stride=stride, padding=padding)
    mean, var = _calibrated_bn_stats(gb, conv, cout, probes)
    gamma = rng.uniform(0.5, 1.5, cout).astype(np.float32)
    beta = rng.uniform(0.3, 0.8, cout).astype(np.float32)
    gamma[dead] = 1.0
    beta[dead] = -1.0
    bn = gb.batch_norm(f"{name}.bn", conv, gamma, beta, mean, var)
    relu = (gb.relu6 if relu6 else gb.relu)(f"{name}.relu", bn)
    injected[relu] = dead
    return relu


def inception(gb, rng, name, src, cin, b1, b2, b3, b4, injected, probes=None, dead=None):
    """Four-branch block: 1x1 / 1x1->3x3 / 1x1->5x5 / maxpool->1x1, concat.

    `dead` maps branch keys (b1, b2r, b2, b3r, b3, b4) to dead channel lists.
    Returns (concat id, output channels).
    """
    dead = dead or {}
    r1 = conv_bn_relu(gb, rng, f"{name}.b1", src, cin, b1, injected, probes, k=1,
                      dead=dead.get("b1", ()))
    r2a = conv_bn_relu(gb, rng, f"{name}.b2r", src, cin, b2[0], injected, probes, k=1,
                       dead=dead.get("b2r", ()))
    r2 = conv_bn_relu(gb, rng, f"{name}.b2", r2a, b2[0], b2[1], injected, probes, k=3,
                      dead=dead.get("b2", ()))
    r3a = conv_bn_relu(gb, rng, f"{name}.b3r", src, cin, b3[0], injected, probes, k=1,
                       dead=dead.get("b3r", ()))
    r3 = conv_bn_relu(gb, rng, f"{name}.b3", r3a, b3[0], b3[1], injected, probes, k=5,
                      dead=dead.get("b3", ()))
    p4 = gb.maxpool(f"{name}.b4.pool", src, kernel=3, stride=1, padding=1)
    r4 = conv_bn_relu(gb, rng, f"{name}.b4", p4, cin, b4, injected, probes, k=1,
                      dead=dead.get("b4", ()))
    cat = gb.concat(f"{name}.cat", [r1, r2, r3, r4])
    return cat, b1 + b2[1] + b3[1] + b4


def inverted_residual(gb, rng, name, src, cin, expand, injected, probes=None,
                      dead_expand=(), dead_depthwise=()):
    """Mobilenet-style block: 1x1 expand -> 3x3 depthwise -> 1x1 project, skip add."""
    mid = cin * expand
    r1 = conv_bn_relu(gb, rng, f"{name}.expand", src, cin, mid, injected, probes, k=1,
                      dead=dead_expand, relu6=True)
    wd = (rng.standard_normal((mid, 1, 3, 3)) / 3.0).astype(np.float32)
    dead = sorted(dead_depthwise)
    wd[dead] = 0.0
    dconv = gb.conv2d(f"{name}.dw.conv", r1, wd, stride=1, padding=1, groups=mid)
    mean, var = _calibrated_bn_stats(gb, dconv, mid, probes)
    gamma = rng.uniform(0.5, 1.5, mid).astype(np.float32)
    beta = rng.uniform(0.3, 0.8, mid).astype(np.float32)
    gamma[dead] = 1.0
    beta[dead] = -1.0
    dbn = gb.batch_norm(f"{name}.dw.bn", dconv, gamma, beta, mean, var)
    drelu = gb.relu6(f"{name}.dw.relu", dbn)
    injected[drelu] = dead
    wp = rand_weight(rng, cin, mid, 1)
    proj = gb.conv2d(f"{name}.proj.conv", drelu, wp)
    pmean, pvar = _calibrated_bn_stats(gb, proj, cin, probes)
    pbn = gb.batch_norm(f"{name}.proj.bn", proj, np.ones(cin, np.float32),
                        np.zeros(cin, np.float32), pmean, pvar)
    return gb.add(f"{name}.add", src, pbn)


def draw_dead(rng, channels, frac_lo=0.2, frac_hi=0.4):
    count = int(round(rng.uniform(frac_lo, frac_hi) * channels))
    count = min(max(count, 1), channels - 1)
    return sorted(rng.choice(channels, size=count, replace=False).tolist())


def synthetic_googlenet(rng, input_hw=(32, 32), dead_frac=(0.2, 0.4)):
    """Small inception-style net with 20-40% dead channels at every relu.

    Returns (graph, injected) with injected mapping relu id -> dead channels.
    The head conv is the declared output, so every relu upstream may prune.
    """
    lo, hi = dead_frac

    def dd(c):
        return draw_dead(rng, c, lo, hi)

    gb = GraphBuilder(input_shape=(1, 3, *input_hw))
    probes = random_images(rng, 2, (1, 3, *input_hw))
    injected = {}
    stem = conv_bn_relu(gb, rng, "stem", "image", 3, 16, injected, probes, dead=dd(16))
    p1 = gb.maxpool("pool1", stem, kernel=2, stride=2)
    cat1, c1 = inception(gb, rng, "inc1", p1, 16, 8, (8, 12), (4, 8), 8, injected, probes,
                         dead={k: dd(c) for k, c in
                               [("b1", 8), ("b2r", 8), ("b2", 12), ("b3r", 4), ("b3", 8), ("b4", 8)]})
    cat2, c2 = inception(gb, rng, "inc2", cat1, c1, 12, (8, 16), (4, 8), 12, injected, probes,
                         dead={k: dd(c) for k, c in
                               [("b1", 12), ("b2r", 8), ("b2", 16), ("b3r", 4), ("b3", 8), ("b4", 12)]})
    p2 = gb.maxpool("pool2", cat2, kernel=2, stride=2)
    cat3, c3 = inception(gb, rng, "inc3", p2, c2, 16, (12, 24), (8, 12), 12, injected, probes,
                         dead={k: dd(c) for k, c in
                               [("b1", 16), ("b2r", 12), ("b2", 24), ("b3r", 8), ("b3", 12), ("b4", 12)]})
    head = gb.conv2d("head", cat3, rand_weight(rng, 8, c3, 1),
                     bias=np.zeros(8, np.float32))
    g = gb.graph([head])
    _assert_only_injected_channels_die(rng, g, injected)
    return g, injected


def _assert_only_injected_channels_die(rng, g, injected, probes=4):
    """Construction self-check: every non-injected channel must fire.

    Raises instead of patching `injected`: a channel that is silent only by
    accident is not provably dead, so absorbing it would corrupt the tests
    that rely on exact mask recovery.
    """
    ids = tuple(injected)
    peak = {}
    for x in random_images(rng, probes, (1,) + tuple(g.input_shape[1:])):
        outs = execute(g, x, taps=ids)
        for node_id in ids:
            act = outs[node_id].data[0]
            m = act.reshape(act.shape[0], -1).max(axis=1)
            peak[node_id] = m if node_id not in peak else np.maximum(peak[node_id], m)
    for node_id in ids:
        alive = np.ones(len(peak[node_id]), bool)
        alive[injected[node_id]] = False
        silent = np.flatnonzero(alive & (peak[node_id] <= 0))
        if silent.size:
            raise AssertionError(
                f"builder produced accidentally dead channels {silent.tolist()} at "
                f"{node_id!r}; pick a different seed"
            )


def toy_autoencoder(rng, input_hw=(32, 32), dead_b1=(), dead_b2=()):
    """Two-block encoder (stride 2) and a matching decoder.

    Taps sit on the second relu of each block; dead channels go into the
    first relu of each block, so pruning never touches the tap widths.
    Returns (encoder, decoder, taps, injected).
    """
    h, w = input_hw
    injected = {}
    gb = GraphBuilder(input_shape=(1, 3, h, w))
    probes = random_images(rng, 2, (1, 3, h, w))
    r1a = conv_bn_relu(gb, rng, "b1a", "image", 3, 8, injected, probes, dead=dead_b1)
    r1b = conv_bn_relu(gb, rng, "b1b", r1a, 8, 8, injected, probes)
    p1 = gb.avgpool("pool1", r1b, kernel=2, stride=2)
    r2a = conv_bn_relu(gb, rng, "b2a", p1, 8, 12, injected, probes, dead=dead_b2)
    r2b = conv_bn_relu(gb, rng, "b2b", r2a, 12, 16, injected, probes)
    taps = (r1b, r2b)
    encoder = gb.graph(list(taps))
    _assert_only_injected_channels_die(rng, encoder, injected)

    db = GraphBuilder(input_id="feature", input_shape=(1, 16, h // 2, w // 2))
    d1 = db.conv2d("d1.conv", "feature", rand_weight(rng, 8, 16, 3), padding=1)
    d1r = db.relu("d1.relu", d1)
    up = db.upsample("up", d1r, factor=2)
    d2 = db.conv2d("d2.conv", up, rand_weight(rng, 3, 8, 3),
                   bias=np.full(3, 0.5, np.float32), padding=1)
    decoder = db.graph([d2])
    return encoder, decoder, taps, injected


def identity_autoencoder():
    """1x1 identity conv encoder and decoder; the tap is the raw image."""
    eye = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
    ge = GraphBuilder(input_shape=(1, 3, 16, 16))
    enc_out = ge.conv2d("enc", "image", eye)
    encoder = ge.graph([enc_out])
    gd = GraphBuilder(input_id="feature", input_shape=(1, 3, 16, 16))
    dec_out = gd.conv2d("dec", "feature", eye)
    decoder = gd.graph([dec_out])
    return encoder, decoder, (enc_out,)


def expected_pruned_params(g, injected):
    """Independent recount: masks derived locally from the injected channels.

    Valid for the synthetic inception family (no add, no depthwise; every
    relu is fed by its own conv+bn chain and the head conv is the output).
    """
    shapes = infer_shapes(g)
    masks = {g.input_id: np.ones(shapes[g.input_id][1], bool)}
    for n in g.nodes:
        c = shapes[n.id][1]
        if n.op in ("relu", "relu6"):
            m = np.ones(c, bool)
            m[list(injected.get(n.id, []))] = False
            masks[n.id] = m
        elif n.op == "concat":
            masks[n.id] = np.concatenate([masks[s] for s in n.inputs])
        elif n.op in ("maxpool", "avgpool", "upsample"):
            masks[n.id] = masks[n.inputs[0]]
        else:
            masks[n.id] = np.ones(c, bool)  # conv/bn placeholder, fixed below
    for n in reversed(g.nodes):
        if n.op in ("relu", "relu6", "batch_norm"):
            masks[n.inputs[0]] = masks[n.id]
    total = 0
    for n in g.nodes:
        if n.op == "conv2d":
            kout = int(masks[n.id].sum())
            kin = int(masks[n.inputs[0]].sum())
            _, _, kh, kw = n.params["weight"].shape
            total += kout * kin * kh * kw + (kout if "bias" in n.params else 0)
        elif n.op == "batch_norm":
            total += 4 * int(masks[n.id].sum())
    return total
