"""Seeded random streams.

Every random draw in the package comes from a :class:`numpy.random.Generator`
backed by PCG64.  Child streams are derived from a master seed with
:func:`derive_seed`, a BLAKE2b-64 hash of ``(master, tag, i, j)``::

    digest = blake2b(pack("<Q", master) + tag.encode() + pack("<qq", i, j),
                     digest_size=8)
    seed = int.from_bytes(digest, "little")

Gaussian variates are produced by the Box-Muller transform on top of the
generator's uniform doubles (see :func:`normal`) rather than numpy's ziggurat,
so the mapping from seed to values only depends on PCG64 and libm.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(master: int, tag: str, i: int = 0, j: int = 0) -> int:
    payload = (
        struct.pack("<Q", master & MASK64)
        + tag.encode("utf-8")
        + struct.pack("<qq", i, j)
    )
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & MASK64))


def child_rng(master: int, tag: str, i: int = 0, j: int = 0) -> np.random.Generator:
    return make_rng(derive_seed(master, tag, i, j))


def as_rng(rng) -> np.random.Generator:
    """Accept a Generator, an int seed, or None (fresh OS entropy)."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.Generator(np.random.PCG64())
    return make_rng(int(rng))


def normal(rng: np.random.Generator, size, scale: float = 1.0) -> np.ndarray:
    """Zero-mean Gaussian draws via Box-Muller.

    Consumes ``2 * ceil(n / 2)`` uniforms; pairs are laid out as
    ``(cos branch, sin branch)`` for consecutive outputs.
    """
    shape = (size,) if np.isscalar(size) else tuple(size)
    n = int(np.prod(shape, dtype=np.int64))
    half = (n + 1) // 2
    u = rng.random(2 * half)
    u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
    u2 = u[1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.empty(2 * half)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return scale * z[:n].reshape(shape)
