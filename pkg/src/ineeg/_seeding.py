"""Seed derivation.

Every random stream in the package is obtained from a master seed plus a
tuple of integer or string keys. Keys are mixed with
:class:`numpy.random.SeedSequence`, so ``derive_seed(s, "tree", 3)`` is stable
across platforms and Python versions. Strings are reduced with CRC-32.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, (bool, np.bool_)):
        return int(k)
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError(f"seed keys must be non-negative, got {k}")
        return int(k)
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    raise TypeError(f"unsupported seed key {k!r}")


def derive_seed(seed: int, *keys) -> int:
    """Return a 32-bit seed derived from ``seed`` and ``keys``."""
    ss = np.random.SeedSequence([_key(seed)] + [_key(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def derive_rng(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))
