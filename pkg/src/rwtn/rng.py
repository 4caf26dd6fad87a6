"""Named, independent random streams.

Every consumer asks for a stream by name; the stream is a Philox
(counter-based) generator keyed by ``(seed, name...)`` so adding a new
consumer never shifts the draws seen by an existing one.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str | int) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFF
    digest = hashlib.sha256(str(name).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def stream(seed: int, *names: str | int) -> np.random.Generator:
    """Return the generator for ``seed`` and the named sub-stream."""
    seq = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=tuple(_name_key(n) for n in names),
    )
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed: int, *names: str | int) -> int:
    """A 63-bit integer seed derived from ``seed`` and names."""
    return int(stream(seed, "derive", *names).integers(0, 2**63 - 1))
