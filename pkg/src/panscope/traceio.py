"""PANTRACE: bit-exact activation-trace container.

Layout (all integers unsigned 32-bit little-endian, floats little-endian
float32):

    magic "PANTRACE" | version=1 | name_len | name utf-8
    | layer_count | batch_size
    then per layer:
    name_len | name utf-8 | dim_b dim_c dim_h dim_w | raw float32 data

Writes are atomic (temp file + rename), so partial files never parse.
"""

import os
import struct
import tempfile

import numpy as np

from .engine import ActivationTrace
from .errors import TraceFormatError

MAGIC = b"PANTRACE"
VERSION = 1

_U32 = struct.Struct("<I")
_F32LE = np.dtype("<f4")

# guards against absurd declared dimensions in corrupt headers
_MAX_ELEMENTS = 1 << 33


def _atomic_write(destination: str, payload: bytes) -> None:
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


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def trace_bytes(trace: ActivationTrace) -> bytes:
    parts = [MAGIC, _U32.pack(VERSION), _pack_str(trace.model_name)]
    parts.append(_U32.pack(len(trace.layers)))
    parts.append(_U32.pack(trace.batch_size))
    for name, arr in trace.layers:
        parts.append(_pack_str(name))
        for dim in arr.shape:
            parts.append(_U32.pack(dim))
        parts.append(np.ascontiguousarray(arr, dtype=_F32LE).tobytes())
    return b"".join(parts)


def write_trace(trace: ActivationTrace, destination: str) -> None:
    _atomic_write(destination, trace_bytes(trace))


class _Reader:
    def __init__(self, blob: bytes, source: str):
        self.blob = blob
        self.source = source
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise TraceFormatError(
                f"{self.source}: truncated while reading {what} "
                f"(needed {n} bytes at offset {self.pos}, file has {len(self.blob)})"
            )
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def string(self, what: str) -> str:
        n = self.u32(f"{what} length")
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TraceFormatError(f"{self.source}: {what} is not valid UTF-8: {exc}") from exc


def trace_from_bytes(blob: bytes, source: str = "<bytes>") -> ActivationTrace:
    r = _Reader(blob, source)
    magic = r.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise TraceFormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    version = r.u32("version")
    if version != VERSION:
        raise TraceFormatError(f"{source}: unsupported version {version}, expected {VERSION}")
    model_name = r.string("model name")
    layer_count = r.u32("layer count")
    batch_size = r.u32("batch size")
    layers = []
    for i in range(layer_count):
        name = r.string(f"layer {i} name")
        dims = tuple(r.u32(f"layer {i} dim {d}") for d in range(4))
        if min(dims) < 1:
            raise TraceFormatError(f"{source}: layer {name!r} has zero dimension {dims}")
        if dims[0] != batch_size:
            raise TraceFormatError(
                f"{source}: layer {name!r} batch {dims[0]} != header batch {batch_size}"
            )
        count = 1
        for d in dims:
            count *= d
        if count > _MAX_ELEMENTS:
            raise TraceFormatError(f"{source}: layer {name!r} dims {dims} overflow sanity cap")
        raw = r.take(count * 4, f"layer {name!r} data")
        arr = np.frombuffer(raw, dtype=_F32LE).astype(np.float32).reshape(dims)
        layers.append((name, arr))
    if r.pos != len(blob):
        raise TraceFormatError(
            f"{source}: {len(blob) - r.pos} trailing bytes after last declared layer"
        )
    return ActivationTrace(model_name=model_name, layers=tuple(layers))


def read_trace(source: str) -> ActivationTrace:
    try:
        with open(source, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise TraceFormatError(f"cannot read {source}: {exc}") from exc
    return trace_from_bytes(blob, source=source)
