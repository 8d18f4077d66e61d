"""PANTRACE writer (the panscope activation-trace interchange format).

Layout: magic "PANTRACE" | version=1 u32le | name_len u32le + utf-8 name
| layer_count u32le | batch_size u32le, then per layer: name | 4 u32le
dims (batch, channels, height, width) | raw float32le data. Writes are
atomic.
"""

import os
import struct
import tempfile

import numpy as np

MAGIC = b"PANTRACE"
VERSION = 1
_U32 = struct.Struct("<I")
_F32LE = np.dtype("<f4")


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def trace_bytes(model_name: str, layers) -> bytes:
    """layers: ordered (name, 4-D float array) pairs, equal batch dims."""
    layers = [(name, np.ascontiguousarray(arr, dtype=_F32LE)) for name, arr in layers]
    if not layers:
        raise ValueError("a trace needs at least one layer")
    batch = layers[0][1].shape[0]
    parts = [MAGIC, _U32.pack(VERSION), _pack_str(model_name)]
    parts.append(_U32.pack(len(layers)))
    parts.append(_U32.pack(batch))
    for name, arr in layers:
        if arr.ndim != 4:
            raise ValueError(f"layer {name!r}: expected 4-D activations, got {arr.shape}")
        if arr.shape[0] != batch:
            raise ValueError(f"layer {name!r}: batch {arr.shape[0]} != {batch}")
        parts.append(_pack_str(name))
        for dim in arr.shape:
            parts.append(_U32.pack(dim))
        parts.append(arr.tobytes())
    return b"".join(parts)


def write_trace(model_name: str, layers, destination: str) -> None:
    payload = trace_bytes(model_name, layers)
    directory = os.path.dirname(os.path.abspath(destination)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".pantrace-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, destination)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
