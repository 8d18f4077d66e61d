"""Forward-hook capture of per-layer conv activations.

Hooks grab each eligible layer's output before any nonlinearity (the
conv modules themselves, or the per-channel padding-swap wrappers that
replaced them in a variant model), so trace layer names are a bijection
with the original conv names regardless of variant.
"""

import numpy as np
import torch
from torch import nn

from .pantrace import write_trace
from .variants import ChannelPaddingSwap


def capture_points(model: nn.Module):
    """(name, module) pairs to hook, one per eligible conv position."""
    points = []
    swallowed = []
    for name, module in model.named_modules():
        if any(name.startswith(prefix + ".") for prefix in swallowed):
            continue  # inner convs of a swap wrapper
        if isinstance(module, ChannelPaddingSwap):
            points.append((name, module))
            swallowed.append(name)
        elif isinstance(module, nn.Conv2d) and module.kernel_size[0] * module.kernel_size[1] > 1:
            points.append((name, module))
    return points


@torch.no_grad()
def capture_activations(model: nn.Module, batch: torch.Tensor):
    """Run the batch; returns (ordered layer activations, logits).

    Activations come back as float32 numpy arrays keyed by layer name.
    """
    model.eval()
    grabbed: dict[str, np.ndarray] = {}
    handles = []
    try:
        for name, module in capture_points(model):
            def hook(mod, args, output, _name=name):
                grabbed[_name] = output.detach().cpu().to(torch.float32).numpy()
            handles.append(module.register_forward_hook(hook))
        logits = model(batch)
    finally:
        for h in handles:
            h.remove()
    ordered = [(name, grabbed[name]) for name, _ in capture_points(model) if name in grabbed]
    return ordered, logits.detach().cpu().to(torch.float32).numpy()


def export_activations(model: nn.Module, model_name: str, batch: torch.Tensor,
                       destination: str) -> list[str]:
    """Write a PANTRACE with one entry per eligible conv; returns layer names."""
    layers, _ = capture_activations(model, batch)
    if not layers:
        raise ValueError(f"{model_name}: no eligible conv layers captured")
    write_trace(model_name, layers, destination)
    return [name for name, _ in layers]
