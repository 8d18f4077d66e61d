"""Padding variants of a torch model.

``reflect_all`` switches every eligible conv to reflect padding;
``pan_reflect`` / ``rand_reflect`` swap only designated output channels by
computing the layer under both policies (shared weights) and selecting
rows per channel — observationally a per-neuron padding policy.
"""

import copy
import json

import numpy as np
import torch
from torch import nn

from .models import eligible_convs

VARIANTS = ("original", "reflect_all", "pan_reflect", "rand_reflect")


def load_census_pan_set(path: str) -> set[tuple[str, int]]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("report") != "pan-census":
        raise ValueError(f"{path}: not a pan-census report")
    return {
        (str(n["layer"]), int(n["channel"]))
        for n in doc.get("neurons", ())
        if n.get("verdict") == "pan"
    }


def _reflect_clone(conv: nn.Conv2d) -> nn.Conv2d:
    """Same geometry with reflect padding; weight/bias tensors are shared."""
    clone = nn.Conv2d(
        conv.in_channels,
        conv.out_channels,
        conv.kernel_size,
        stride=conv.stride,
        padding=conv.padding,
        dilation=conv.dilation,
        groups=conv.groups,
        bias=conv.bias is not None,
        padding_mode="reflect",
    )
    clone.weight = conv.weight
    if conv.bias is not None:
        clone.bias = conv.bias
    return clone


class ChannelPaddingSwap(nn.Module):
    """Conv whose designated output channels use reflect padding."""

    def __init__(self, conv: nn.Conv2d, reflect_channels):
        super().__init__()
        self.zero = conv
        self.reflect = _reflect_clone(conv)
        mask = torch.zeros(conv.out_channels, dtype=torch.bool)
        for ch in reflect_channels:
            mask[ch] = True
        self.register_buffer("mask", mask.view(1, -1, 1, 1))

    def forward(self, x):
        return torch.where(self.mask, self.reflect(x), self.zero(x))


def _set_submodule(root: nn.Module, dotted: str, replacement: nn.Module) -> None:
    parts = dotted.split(".")
    parent = root
    for p in parts[:-1]:
        parent = getattr(parent, p)
    setattr(parent, parts[-1], replacement)


def sample_random_control(
    model: nn.Module, pan_set: set[tuple[str, int]], seed: int
) -> set[tuple[str, int]]:
    """Non-PAN control channels with the same per-layer counts."""
    rng = np.random.default_rng(seed)
    control = set()
    for name, conv in eligible_convs(model):
        taken = {ch for lname, ch in pan_set if lname == name}
        count = len(taken)
        if count == 0:
            continue
        candidates = [ch for ch in range(conv.out_channels) if ch not in taken]
        if len(candidates) < count:
            raise ValueError(f"layer {name}: not enough non-PAN channels for the control set")
        chosen = rng.choice(len(candidates), size=count, replace=False)
        control.update((name, candidates[i]) for i in sorted(chosen))
    return control


def make_variant(
    model: nn.Module,
    kind: str,
    pan_set: set[tuple[str, int]] | None = None,
    seed: int | None = None,
) -> nn.Module:
    """Deep-copied variant model; the original is left untouched."""
    if kind not in VARIANTS:
        raise ValueError(f"unknown variant {kind!r}")
    if kind == "original":
        return model
    variant = copy.deepcopy(model)
    convs = eligible_convs(variant)
    if kind == "reflect_all":
        for name, conv in convs:
            _set_submodule(variant, name, _reflect_clone(conv))
        return variant
    if pan_set is None:
        raise ValueError(f"{kind} needs a neuron set")
    swap = pan_set
    if kind == "rand_reflect":
        if seed is None:
            raise ValueError("rand_reflect needs a seed")
        swap = sample_random_control(variant, pan_set, seed)
    by_layer: dict[str, set[int]] = {}
    for lname, ch in swap:
        by_layer.setdefault(lname, set()).add(ch)
    known = dict(convs)
    for lname, channels in by_layer.items():
        if lname not in known:
            raise ValueError(f"census layer {lname!r} not found among eligible convs")
        _set_submodule(variant, lname, ChannelPaddingSwap(known[lname], sorted(channels)))
    return variant
