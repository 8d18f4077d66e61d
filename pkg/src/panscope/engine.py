"""Deterministic forward-pass engine for small sequential conv nets.

Activations are captured *pre*-nonlinearity; the nonlinearity is applied
only when propagating to the next layer. Everything is float32 and the
accumulation order inside a window is fixed (channel-major, then row,
then column), so identical (model, batch) pairs produce bit-identical
traces.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidPaddingError, ShapeError

PAD_ZERO = "zero"
PAD_REFLECT = "reflect"
PAD_POLICIES = (PAD_ZERO, PAD_REFLECT)

NONLIN_NONE = "none"
NONLIN_RELU = "relu"
NONLINEARITIES = (NONLIN_NONE, NONLIN_RELU)

# A Tensor is a dense 4-D float32 array in (batch, channel, height, width)
# row-major order; every dimension must be >= 1.
Tensor = np.ndarray


def as_tensor(data) -> Tensor:
    """Validate/coerce an array-like into a (B, C, H, W) float32 tensor."""
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != 4:
        raise ShapeError(f"tensor must be 4-D (batch, channel, height, width), got ndim={arr.ndim}")
    if min(arr.shape) < 1:
        raise ShapeError(f"all tensor dimensions must be >= 1, got shape {arr.shape}")
    return arr


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    """out = floor((in + 2*pad - kernel) / stride) + 1"""
    return (size + 2 * pad - kernel) // stride + 1


def pad_map(map2d, policy: str, amount: int) -> np.ndarray:
    """Pad a map on all sides (a 1-D sequence pads along its single axis).

    ``zero`` fills with 0.0; ``reflect`` mirrors about the border element
    excluding it (row [a, b, c] with amount 1 becomes [b, a, b, c, b]).
    """
    arr = np.asarray(map2d)
    if arr.ndim not in (1, 2):
        raise ShapeError(f"pad_map expects a 1-D or 2-D map, got ndim={arr.ndim}")
    if amount < 0:
        raise InvalidPaddingError(f"padding amount must be >= 0, got {amount}")
    if amount == 0:
        return arr.copy()
    if policy == PAD_ZERO:
        return np.pad(arr, amount, mode="constant", constant_values=0.0)
    if policy == PAD_REFLECT:
        if amount >= min(arr.shape):
            raise InvalidPaddingError(
                f"reflect padding of {amount} needs every axis longer than {amount}, "
                f"got map shape {arr.shape}"
            )
        return np.pad(arr, amount, mode="reflect")
    raise InvalidPaddingError(f"unknown padding policy {policy!r}")


def _pad_batch(x: Tensor, policy: str, amount: int) -> Tensor:
    """Pad the spatial axes of a (B, C, H, W) tensor."""
    if amount == 0:
        return x
    width = ((0, 0), (0, 0), (amount, amount), (amount, amount))
    if policy == PAD_ZERO:
        return np.pad(x, width, mode="constant", constant_values=0.0)
    if policy == PAD_REFLECT:
        if amount >= min(x.shape[2], x.shape[3]):
            raise InvalidPaddingError(
                f"reflect padding of {amount} needs spatial dims larger than {amount}, "
                f"got {x.shape[2]}x{x.shape[3]}"
            )
        return np.pad(x, width, mode="reflect")
    raise InvalidPaddingError(f"unknown padding policy {policy!r}")


@dataclass(frozen=True)
class ConvLayerSpec:
    """One convolutional layer: geometry, padding policy and parameters.

    ``channel_policies``, when set, gives an explicit padding policy per
    output channel (the per-neuron padding override used by the swap
    experiments); otherwise every channel uses ``padding_policy``.
    """

    name: str
    in_channels: int
    out_channels: int
    kernel_height: int
    kernel_width: int
    stride: int
    padding_amount: int
    padding_policy: str
    weights: np.ndarray
    bias: np.ndarray
    post_nonlinearity: str = NONLIN_NONE
    channel_policies: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.kernel_height < 1 or self.kernel_width < 1:
            raise ShapeError(f"{self.name}: kernel dims must be >= 1")
        if self.stride < 1:
            raise ShapeError(f"{self.name}: stride must be >= 1")
        if self.padding_amount < 0:
            raise ShapeError(f"{self.name}: padding must be >= 0")
        if self.padding_policy not in PAD_POLICIES:
            raise ShapeError(f"{self.name}: unknown padding policy {self.padding_policy!r}")
        if self.post_nonlinearity not in NONLINEARITIES:
            raise ShapeError(f"{self.name}: unknown nonlinearity {self.post_nonlinearity!r}")
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        expected = (self.out_channels, self.in_channels, self.kernel_height, self.kernel_width)
        if w.shape != expected:
            raise ShapeError(f"{self.name}: weights shape {w.shape} != {expected}")
        b = np.ascontiguousarray(self.bias, dtype=np.float32)
        if b.shape != (self.out_channels,):
            raise ShapeError(f"{self.name}: bias shape {b.shape} != ({self.out_channels},)")
        if self.channel_policies is not None:
            if len(self.channel_policies) != self.out_channels:
                raise ShapeError(f"{self.name}: need one policy per output channel")
            for p in self.channel_policies:
                if p not in PAD_POLICIES:
                    raise ShapeError(f"{self.name}: unknown padding policy {p!r}")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def analyzable(self) -> bool:
        """Only kernels bigger than 1x1 can perceive padding."""
        return self.kernel_height * self.kernel_width > 1

    def policies_in_use(self) -> tuple[str, ...]:
        if self.channel_policies is None:
            return (self.padding_policy,)
        return tuple(sorted(set(self.channel_policies)))


@dataclass(frozen=True)
class LinearHead:
    """Linear classifier applied to globally average-pooled activations."""

    weights: np.ndarray  # (classes, channels)
    bias: np.ndarray  # (classes,)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        b = np.ascontiguousarray(self.bias, dtype=np.float32)
        if w.ndim != 2:
            raise ShapeError(f"head weights must be 2-D, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"head bias shape {b.shape} != ({w.shape[0]},)")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class ConvNetSpec:
    """Sequential conv net description."""

    name: str
    layers: tuple[ConvLayerSpec, ...]
    head: Optional[LinearHead] = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_channels != nxt.in_channels:
                raise ShapeError(
                    f"layer {prev.name} outputs {prev.out_channels} channels but "
                    f"{nxt.name} expects {nxt.in_channels}"
                )
        if self.head is not None and self.layers:
            if self.head.weights.shape[1] != self.layers[-1].out_channels:
                raise ShapeError(
                    f"head expects {self.head.weights.shape[1]} channels, last layer "
                    f"outputs {self.layers[-1].out_channels}"
                )
        names = [lay.name for lay in self.layers]
        if len(set(names)) != len(names):
            raise ShapeError(f"duplicate layer names in {self.name}: {names}")

    def layer_named(self, name: str) -> ConvLayerSpec:
        for lay in self.layers:
            if lay.name == name:
                return lay
        raise KeyError(f"no layer named {name!r} in model {self.name}")


@dataclass(frozen=True)
class ActivationTrace:
    """Per-layer pre-nonlinearity activations for one batch, in network order."""

    model_name: str
    layers: tuple[tuple[str, Tensor], ...]

    def __post_init__(self):
        frozen = []
        for name, arr in self.layers:
            arr = as_tensor(arr)
            arr.flags.writeable = False
            frozen.append((name, arr))
        object.__setattr__(self, "layers", tuple(frozen))

    @property
    def batch_size(self) -> int:
        return self.layers[0][1].shape[0] if self.layers else 0

    def layer_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.layers)

    def activations(self, name: str) -> Tensor:
        for lname, arr in self.layers:
            if lname == name:
                return arr
        raise KeyError(f"no layer named {name!r} in trace")


def _conv_single_policy(x: Tensor, layer: ConvLayerSpec, policy: str) -> Tensor:
    padded = _pad_batch(x, policy, layer.padding_amount)
    if padded.shape[2] < layer.kernel_height or padded.shape[3] < layer.kernel_width:
        raise ShapeError(
            f"{layer.name}: kernel {layer.kernel_height}x{layer.kernel_width} larger than "
            f"padded input {padded.shape[2]}x{padded.shape[3]}"
        )
    windows = sliding_window_view(padded, (layer.kernel_height, layer.kernel_width), axis=(2, 3))
    windows = windows[:, :, :: layer.stride, :: layer.stride, :, :]
    # (B, C, Ho, Wo, kh, kw) x (Co, C, kh, kw) -> (B, Ho, Wo, Co)
    out = np.tensordot(windows, layer.weights, axes=([1, 4, 5], [1, 2, 3]))
    out = np.transpose(out, (0, 3, 1, 2)) + layer.bias[None, :, None, None]
    return np.ascontiguousarray(out, dtype=np.float32)


def conv2d(x: Tensor, layer: ConvLayerSpec) -> Tensor:
    """Convolve a batch with one layer; returns pre-nonlinearity values."""
    x = as_tensor(x)
    if x.shape[1] != layer.in_channels:
        raise ShapeError(
            f"{layer.name}: input has {x.shape[1]} channels, layer expects {layer.in_channels}"
        )
    policies = layer.policies_in_use()
    if len(policies) == 1:
        return _conv_single_policy(x, layer, policies[0])
    per_policy = {p: _conv_single_policy(x, layer, p) for p in policies}
    out = per_policy[policies[0]].copy()
    assert layer.channel_policies is not None
    for ch, pol in enumerate(layer.channel_policies):
        out[:, ch] = per_policy[pol][:, ch]
    return out


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, np.float32(0.0))


def global_average_pool(x: Tensor) -> np.ndarray:
    """(B, C, H, W) -> (B, C) spatial mean."""
    return x.mean(axis=(2, 3), dtype=np.float32)


def forward(model: ConvNetSpec, batch: Tensor, want_logits: bool = True):
    """Run the net, capturing every layer's pre-nonlinearity output.

    Returns ``(trace, logits)``; ``logits`` is None when the model has no
    head or ``want_logits`` is false.
    """
    x = as_tensor(batch)
    entries = []
    for layer in model.layers:
        pre = conv2d(x, layer)
        entries.append((layer.name, pre))
        x = relu(pre) if layer.post_nonlinearity == NONLIN_RELU else pre
    trace = ActivationTrace(model_name=model.name, layers=tuple(entries))
    logits = None
    if want_logits and model.head is not None:
        pooled = global_average_pool(x)
        logits = pooled @ model.head.weights.T + model.head.bias
        logits = logits.astype(np.float32)
    return trace, logits
