"""Counter-based random substreams.

Every random decision is drawn from a Philox stream whose key is a hash of
the identifiers it belongs to, so results never depend on call order or
thread scheduling.
"""
from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "derive_seed"]

_MASK64 = (1 << 64) - 1


def _digest(parts) -> bytes:
    h = hashlib.blake2b(digest_size=16, person=b"petct-datakit")
    for p in parts:
        token = repr(p).encode("utf-8")
        h.update(len(token).to_bytes(4, "little"))
        h.update(token)
    return h.digest()


def substream(seed: int, *parts) -> np.random.Generator:
    """Independent generator for ``(seed, *parts)``."""
    key = int.from_bytes(_digest((int(seed) & _MASK64, *parts)), "little")
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, *parts) -> int:
    """64-bit child seed, e.g. one per augmentation repeat."""
    return int.from_bytes(_digest((int(seed) & _MASK64, *parts))[:8], "little")
