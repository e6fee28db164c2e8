"""Counter-based random streams keyed by (seed, purpose, index).

Every random draw in the project flows through a stream obtained here, so any
artifact can be regenerated from its seed alone: streams are independent of
call order and of whether other streams were consumed.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream"]


def _purpose_key(purpose: str) -> int:
    # stable across processes, unlike builtin hash()
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, purpose: str, index: int | tuple[int, ...] = 0) -> np.random.Generator:
    """Return an independent Philox generator for (seed, purpose, index)."""
    if isinstance(index, int):
        index = (index,)
    ss = np.random.SeedSequence(seed, spawn_key=(_purpose_key(purpose), *index))
    return np.random.Generator(np.random.Philox(ss))
