"""torchvision GoogLeNet / MobileNetV2 trunks -> engine model files.

The walkers read module attributes directly (kernel, stride, padding,
groups, BN stats), so whatever torchvision instantiated is exported
faithfully; any module outside the supported set raises a named error
rather than being skipped.  Trunks are truncated at the deepest tap
(16x downsampling), classifier and auxiliary heads are never emitted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .emit import ExportError, ManifestWriter

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

GOOGLENET_TAPS = ("conv1", "conv3", "inception3b", "inception4e")
MOBILENET_TAPS = (1, 3, 6, 13)


@dataclass
class ExportSpec:
    arch: str  # "googlenet" | "mobilenet_v2"
    taps: tuple = ()  # architecture default when empty
    input_hw: tuple[int, int] = (224, 224)
    weights: str = "random"  # "random" | "imagenet"
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ("googlenet", "mobilenet_v2"):
            raise ExportError(f"unsupported architecture {self.arch!r}")
        if not self.taps:
            self.taps = GOOGLENET_TAPS if self.arch == "googlenet" else MOBILENET_TAPS


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().astype(np.float32)


def _square(pair, what, where):
    a, b = (pair, pair) if isinstance(pair, int) else tuple(pair)
    if a != b:
        raise ExportError(f"{where}: non-square {what} {pair} is unsupported")
    return int(a)


def _emit_conv(w: ManifestWriter, name: str, src: str, conv: nn.Conv2d) -> str:
    if conv.dilation not in ((1, 1), 1):
        raise ExportError(f"{name}: dilated convolutions are unsupported")
    params = {"weight": _np(conv.weight)}
    if conv.bias is not None:
        params["bias"] = _np(conv.bias)
    attrs = {
        "stride": _square(conv.stride, "stride", name),
        "padding": _square(conv.padding, "padding", name),
        "groups": int(conv.groups),
    }
    return w.add_node(name, "conv2d", [src], attrs, params)


def _emit_bn(w: ManifestWriter, name: str, src: str, bn: nn.BatchNorm2d) -> str:
    params = {
        "gamma": _np(bn.weight),
        "beta": _np(bn.bias),
        "mean": _np(bn.running_mean),
        "var": _np(bn.running_var),
    }
    return w.add_node(name, "batch_norm", [src], {"eps": float(bn.eps)}, params)


def _emit_maxpool(w: ManifestWriter, name: str, src: str, pool: nn.MaxPool2d) -> str:
    attrs = {
        "kernel": _square(pool.kernel_size, "kernel", name),
        "stride": _square(pool.stride, "stride", name),
        "padding": _square(pool.padding, "padding", name),
        "ceil": bool(pool.ceil_mode),
    }
    return w.add_node(name, "maxpool", [src], attrs)


def _emit_conv_bn_act(w, name, src, conv, bn, act_op) -> str:
    out = _emit_conv(w, f"{name}.conv", src, conv)
    out = _emit_bn(w, f"{name}.bn", out, bn)
    if act_op is not None:
        out = w.add_node(f"{name}.{act_op}", act_op, [out], {})
    return out


def _emit_basic_conv(w, name, src, module) -> str:
    # torchvision googlenet BasicConv2d: conv -> bn -> relu
    return _emit_conv_bn_act(w, name, src, module.conv, module.bn, "relu")


def _emit_inception(w, name, src, module) -> str:
    b1 = _emit_basic_conv(w, f"{name}.branch1", src, module.branch1)
    b2 = _emit_basic_conv(w, f"{name}.branch2.0", src, module.branch2[0])
    b2 = _emit_basic_conv(w, f"{name}.branch2.1", b2, module.branch2[1])
    b3 = _emit_basic_conv(w, f"{name}.branch3.0", src, module.branch3[0])
    b3 = _emit_basic_conv(w, f"{name}.branch3.1", b3, module.branch3[1])
    b4 = _emit_maxpool(w, f"{name}.branch4.pool", src, module.branch4[0])
    b4 = _emit_basic_conv(w, f"{name}.branch4.1", b4, module.branch4[1])
    return w.add_node(f"{name}.cat", "concat", [b1, b2, b3, b4], {})


def build_googlenet(spec: ExportSpec):
    from torchvision.models import googlenet, GoogLeNet_Weights

    if spec.weights == "imagenet":
        model = googlenet(weights=GoogLeNet_Weights.IMAGENET1K_V1)
    else:
        torch.manual_seed(spec.seed)
        model = googlenet(weights=None, init_weights=True, aux_logits=False)
    return model.eval()


def convert_googlenet(model, spec: ExportSpec) -> tuple[ManifestWriter, list[str]]:
    from torchvision.models.googlenet import BasicConv2d, Inception

    # the ported TF weights re-scale inputs internally; folded into the
    # embedded preprocessing this is exactly mean 0.5 / std 0.5
    pre = ((0.5, 0.5, 0.5), (0.5, 0.5, 0.5)) if model.transform_input \
        else (IMAGENET_MEAN, IMAGENET_STD)
    w = ManifestWriter("image", (1, 3, *spec.input_hw), pre)
    src = "image"
    outputs = []
    for name, module in model.named_children():
        if isinstance(module, BasicConv2d):
            src = _emit_basic_conv(w, name, src, module)
        elif isinstance(module, nn.MaxPool2d):
            src = _emit_maxpool(w, name, src, module)
        elif isinstance(module, Inception):
            src = _emit_inception(w, name, src, module)
        else:
            raise ExportError(f"{name}: unsupported layer {type(module).__name__} in the trunk")
        if name in spec.taps:
            outputs.append(src)
        if name == spec.taps[-1]:
            break
    if len(outputs) != len(spec.taps):
        raise ExportError(f"taps {spec.taps} not all found in the model trunk")
    return w, outputs


def googlenet_reference_forward(model, x01: torch.Tensor, spec: ExportSpec) -> list[torch.Tensor]:
    """The source-framework truncated forward on raw [0, 1] pixels."""
    mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
    x = (x01 - mean) / std
    with torch.no_grad():
        if model.transform_input:
            x = model._transform_input(x)
        taps = []
        for name, module in model.named_children():
            x = module(x)
            if name in spec.taps:
                taps.append(x)
            if name == spec.taps[-1]:
                break
    return taps


def build_mobilenet_v2(spec: ExportSpec):
    from torchvision.models import mobilenet_v2, MobileNet_V2_Weights

    if spec.weights == "imagenet":
        model = mobilenet_v2(weights=MobileNet_V2_Weights.IMAGENET1K_V1)
    else:
        torch.manual_seed(spec.seed)
        model = mobilenet_v2(weights=None)
    return model.eval()


def _emit_cna(w, name, src, module, act="relu6") -> str:
    # torchvision Conv2dNormActivation: conv -> bn -> activation
    conv, bn = module[0], module[1]
    if not isinstance(conv, nn.Conv2d) or not isinstance(bn, nn.BatchNorm2d):
        raise ExportError(f"{name}: unexpected Conv2dNormActivation layout")
    if len(module) > 2 and not isinstance(module[2], nn.ReLU6):
        raise ExportError(f"{name}: unsupported activation {type(module[2]).__name__}")
    return _emit_conv_bn_act(w, name, src, conv, bn, act if len(module) > 2 else None)


def _emit_inverted_residual(w, name, src, module) -> str:
    from torchvision.ops.misc import Conv2dNormActivation

    layers = list(module.conv)
    out = src
    idx = 0
    while idx < len(layers) and isinstance(layers[idx], Conv2dNormActivation):
        out = _emit_cna(w, f"{name}.conv.{idx}", out, layers[idx])
        idx += 1
    if idx + 2 != len(layers) or not isinstance(layers[idx], nn.Conv2d) \
            or not isinstance(layers[idx + 1], nn.BatchNorm2d):
        raise ExportError(f"{name}: unexpected inverted-residual layout")
    out = _emit_conv(w, f"{name}.conv.{idx}", out, layers[idx])
    out = _emit_bn(w, f"{name}.conv.{idx + 1}", out, layers[idx + 1])
    if module.use_res_connect:
        out = w.add_node(f"{name}.add", "add", [src, out], {})
    return out


def convert_mobilenet_v2(model, spec: ExportSpec) -> tuple[ManifestWriter, list[str]]:
    from torchvision.models.mobilenetv2 import InvertedResidual
    from torchvision.ops.misc import Conv2dNormActivation

    w = ManifestWriter("image", (1, 3, *spec.input_hw), (IMAGENET_MEAN, IMAGENET_STD))
    src = "image"
    outputs = []
    last = max(spec.taps)
    for i, module in enumerate(model.features):
        name = f"features.{i}"
        if isinstance(module, Conv2dNormActivation):
            src = _emit_cna(w, name, src, module)
        elif isinstance(module, InvertedResidual):
            src = _emit_inverted_residual(w, name, src, module)
        else:
            raise ExportError(f"{name}: unsupported layer {type(module).__name__}")
        if i in spec.taps:
            outputs.append(src)
        if i == last:
            break
    return w, outputs


def mobilenet_reference_forward(model, x01: torch.Tensor, spec: ExportSpec) -> list[torch.Tensor]:
    mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
    x = (x01 - mean) / std
    taps = []
    with torch.no_grad():
        for i in range(max(spec.taps) + 1):
            x = model.features[i](x)
            if i in spec.taps:
                taps.append(x)
    return taps


def build_and_convert(spec: ExportSpec):
    """Returns (torch model, writer, output node ids)."""
    if spec.arch == "googlenet":
        model = build_googlenet(spec)
        w, outputs = convert_googlenet(model, spec)
    else:
        model = build_mobilenet_v2(spec)
        w, outputs = convert_mobilenet_v2(model, spec)
    return model, w, outputs


def reference_forward(model, x01, spec: ExportSpec):
    fn = googlenet_reference_forward if spec.arch == "googlenet" else mobilenet_reference_forward
    return fn(model, x01, spec)


def classifier_free_param_count(model) -> int:
    """conv + BN parameters over the whole feature extractor (no fc/aux)."""
    total = 0
    for name, m in model.named_modules():
        if name.startswith(("aux", "fc", "classifier", "dropout")):
            continue
        if isinstance(m, nn.Conv2d):
            total += m.weight.numel() + (m.bias.numel() if m.bias is not None else 0)
        elif isinstance(m, nn.BatchNorm2d):
            total += m.weight.numel() + m.bias.numel() + m.running_mean.numel() + m.running_var.numel()
    return total
