"""Model files: a JSON layer description plus a PANWGT weight blob.

The JSON document carries geometry and policy strings; the sidecar blob
carries raw little-endian float32 parameters:

    magic "PANWGT\\0\\0" | version=1 | per layer: weights then bias,
    in layer order, followed by head weights and bias when a head exists.
"""

import json
import os
import struct
import tempfile

import numpy as np

from .engine import (
    NONLINEARITIES,
    PAD_POLICIES,
    ConvLayerSpec,
    ConvNetSpec,
    LinearHead,
)
from .errors import ModelFormatError

WEIGHTS_MAGIC = b"PANWGT\0\0"
WEIGHTS_VERSION = 1

_U32 = struct.Struct("<I")
_F32LE = np.dtype("<f4")

MODEL_FORMAT = "panscope-model"
MODEL_VERSION = 1


def _atomic_write(destination: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(destination)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".panscope-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, destination)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def default_weights_path(model_path: str) -> str:
    stem, _ = os.path.splitext(model_path)
    return stem + ".panwgt"


def weight_blob(model: ConvNetSpec) -> bytes:
    parts = [WEIGHTS_MAGIC, _U32.pack(WEIGHTS_VERSION)]
    for lay in model.layers:
        parts.append(np.ascontiguousarray(lay.weights, dtype=_F32LE).tobytes())
        parts.append(np.ascontiguousarray(lay.bias, dtype=_F32LE).tobytes())
    if model.head is not None:
        parts.append(np.ascontiguousarray(model.head.weights, dtype=_F32LE).tobytes())
        parts.append(np.ascontiguousarray(model.head.bias, dtype=_F32LE).tobytes())
    return b"".join(parts)


def write_model(model: ConvNetSpec, model_path: str, weights_path: str | None = None) -> str:
    """Write JSON + weight blob; returns the weight blob path."""
    if weights_path is None:
        weights_path = default_weights_path(model_path)
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "name": model.name,
        "weights": os.path.basename(weights_path),
        "layers": [
            {
                "name": lay.name,
                "in_channels": lay.in_channels,
                "out_channels": lay.out_channels,
                "kernel_height": lay.kernel_height,
                "kernel_width": lay.kernel_width,
                "stride": lay.stride,
                "padding_amount": lay.padding_amount,
                "padding_policy": lay.padding_policy,
                "post_nonlinearity": lay.post_nonlinearity,
            }
            for lay in model.layers
        ],
    }
    if model.head is not None:
        doc["head"] = {"classes": model.head.class_count}
    _atomic_write(
        model_path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")
    )
    _atomic_write(weights_path, weight_blob(model))
    return weights_path


def _require(doc: dict, key: str, source: str):
    if key not in doc:
        raise ModelFormatError(f"{source}: missing field {key!r}")
    return doc[key]


def _layer_from_doc(entry: dict, blob: bytes, offset: int, source: str):
    for key in (
        "name",
        "in_channels",
        "out_channels",
        "kernel_height",
        "kernel_width",
        "stride",
        "padding_amount",
        "padding_policy",
        "post_nonlinearity",
    ):
        _require(entry, key, source)
    if entry["padding_policy"] not in PAD_POLICIES:
        raise ModelFormatError(f"{source}: bad padding policy {entry['padding_policy']!r}")
    if entry["post_nonlinearity"] not in NONLINEARITIES:
        raise ModelFormatError(f"{source}: bad nonlinearity {entry['post_nonlinearity']!r}")
    co, ci = int(entry["out_channels"]), int(entry["in_channels"])
    kh, kw = int(entry["kernel_height"]), int(entry["kernel_width"])
    n_w = co * ci * kh * kw
    n_b = co
    need = (n_w + n_b) * 4
    if offset + need > len(blob):
        raise ModelFormatError(
            f"{source}: weight blob truncated at layer {entry['name']!r} "
            f"(need {need} bytes at offset {offset}, blob has {len(blob)})"
        )
    weights = np.frombuffer(blob, dtype=_F32LE, count=n_w, offset=offset).reshape(co, ci, kh, kw)
    offset += n_w * 4
    bias = np.frombuffer(blob, dtype=_F32LE, count=n_b, offset=offset)
    offset += n_b * 4
    layer = ConvLayerSpec(
        name=str(entry["name"]),
        in_channels=ci,
        out_channels=co,
        kernel_height=kh,
        kernel_width=kw,
        stride=int(entry["stride"]),
        padding_amount=int(entry["padding_amount"]),
        padding_policy=str(entry["padding_policy"]),
        weights=weights.astype(np.float32),
        bias=bias.astype(np.float32),
        post_nonlinearity=str(entry["post_nonlinearity"]),
    )
    return layer, offset


def read_model(model_path: str) -> ConvNetSpec:
    try:
        with open(model_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelFormatError(f"cannot read {model_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{model_path}: invalid JSON: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{model_path}: not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"{model_path}: unsupported version {doc.get('version')}")

    weights_name = _require(doc, "weights", model_path)
    weights_path = os.path.join(os.path.dirname(os.path.abspath(model_path)), weights_name)
    try:
        with open(weights_path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read weight blob {weights_path}: {exc}") from exc
    if blob[: len(WEIGHTS_MAGIC)] != WEIGHTS_MAGIC:
        raise ModelFormatError(f"{weights_path}: bad magic {blob[:8]!r}")
    (version,) = _U32.unpack(blob[8:12])
    if version != WEIGHTS_VERSION:
        raise ModelFormatError(f"{weights_path}: unsupported blob version {version}")

    offset = 12
    layers = []
    for entry in _require(doc, "layers", model_path):
        layer, offset = _layer_from_doc(entry, blob, offset, model_path)
        layers.append(layer)

    head = None
    if "head" in doc:
        classes = int(_require(doc["head"], "classes", model_path))
        channels = layers[-1].out_channels if layers else 0
        n_w, n_b = classes * channels, classes
        need = (n_w + n_b) * 4
        if offset + need > len(blob):
            raise ModelFormatError(
                f"{weights_path}: truncated head parameters "
                f"(need {need} bytes at offset {offset}, blob has {len(blob)})"
            )
        hw = np.frombuffer(blob, dtype=_F32LE, count=n_w, offset=offset).reshape(classes, channels)
        offset += n_w * 4
        hb = np.frombuffer(blob, dtype=_F32LE, count=n_b, offset=offset)
        offset += n_b * 4
        head = LinearHead(weights=hw.astype(np.float32), bias=hb.astype(np.float32))
    if offset != len(blob):
        raise ModelFormatError(
            f"{weights_path}: {len(blob) - offset} trailing bytes after declared parameters"
        )
    return ConvNetSpec(name=str(doc.get("name", "model")), layers=tuple(layers), head=head)
