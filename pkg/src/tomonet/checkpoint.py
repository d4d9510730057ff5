"""Binary checkpoints for :class:`~tomonet.cnn.CnnParams`.

Layout (all integers and floats little-endian)::

    8 bytes   magic  b"TOMOCNN\\0"
    u32       format version (1)
    u32       input height
    u32       input width
    u32       number of parameter blocks L (10)
    L times:  u32 ndim, then ndim x u32 dims   (storage order of cnn.layer_shapes)
    u64       training step counter
    N x f8    parameter values, blocks concatenated in declared order, each
              block row-major
    N x f8    Adagrad accumulators, same layout

N is the total parameter count implied by the declared shapes.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .cnn import CnnParams, layer_shapes
from .exceptions import FormatError, FormatVersionMismatch

MAGIC = b"TOMOCNN\0"
VERSION = 1


def to_bytes(params: CnnParams) -> bytes:
    shapes = layer_shapes(params.input_shape)
    head = [MAGIC, struct.pack("<IIII", VERSION, *params.input_shape, len(shapes))]
    for _, shape in shapes:
        head.append(struct.pack(f"<I{len(shape)}I", len(shape), *shape))
    head.append(struct.pack("<Q", params.step))
    return (
        b"".join(head)
        + params.values.astype("<f8").tobytes()
        + params.accum.astype("<f8").tobytes()
    )


def from_bytes(blob: bytes) -> CnnParams:
    if blob[:8] != MAGIC:
        raise FormatError("not a tomonet checkpoint (bad magic)")
    pos = 8
    try:
        version, h, w, n_blocks = struct.unpack_from("<IIII", blob, pos)
        pos += 16
        if version != VERSION:
            raise FormatVersionMismatch(f"checkpoint version {version}, expected {VERSION}")
        shapes = []
        for _ in range(n_blocks):
            (ndim,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shapes.append(struct.unpack_from(f"<{ndim}I", blob, pos))
            pos += 4 * ndim
        (step,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint header: {exc}") from exc
    expected = [tuple(s) for _, s in layer_shapes((h, w))]
    if [tuple(s) for s in shapes] != expected:
        raise FormatError(f"layer shapes {shapes} do not match the architecture")
    n = sum(math.prod(s) for s in expected)
    if len(blob) != pos + 16 * n:
        raise FormatError("checkpoint payload has the wrong length")
    data = np.frombuffer(blob, dtype="<f8", count=2 * n, offset=pos).astype(np.float64)
    return CnnParams(data[:n].copy(), data[n:].copy(), step, (h, w))


def save_checkpoint(params: CnnParams, path) -> Path:
    path = Path(path)
    path.write_bytes(to_bytes(params))
    return path


def load_checkpoint(path) -> CnnParams:
    return from_bytes(Path(path).read_bytes())
