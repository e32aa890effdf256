"""Cross-ecosystem parity: run the exported model in the engine and the
source model in torch on the same raw pixels, compare all taps.

This is the only module that imports the engine; the export path itself
never does.
"""

from __future__ import annotations

import numpy as np
import torch

from .convert import ExportSpec, reference_forward


def check_parity(model_dir, model, spec: ExportSpec, inputs: int = 5, seed: int = 0,
                 fast: bool = True) -> float:
    """Max absolute deviation over `inputs` random images at every tap."""
    from faststyle import Tensor4, execute, load_model_dir

    g = load_model_dir(model_dir)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(inputs):
        x01 = rng.random((1, 3, *spec.input_hw), dtype=np.float32)
        torch_in = torch.from_numpy(x01.copy())  # Tensor4 freezes its array
        engine_out = execute(g, Tensor4(x01), fast=fast)
        torch_taps = reference_forward(model, torch_in, spec)
        for out_id, want in zip(g.outputs, torch_taps):
            got = engine_out[out_id].data
            dev = float(np.max(np.abs(got - want.numpy())))
            worst = max(worst, dev)
    return worst
